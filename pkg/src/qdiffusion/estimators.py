"""Empirical moments, entropies, ensemble reduction and power-law fits.

Moments are taken about the coordinate origin (packets start centered
there by default). Entropies are differential entropies with natural
logarithm, integrated on the grid with the convention 0 ln 0 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DomainError,
    GridMismatchError,
    InsufficientDataError,
    NormalizationError,
)
from .model import Grid

__all__ = [
    "MomentSeries",
    "FitResult",
    "CrossoverResult",
    "moment",
    "entropy",
    "combined_entropy",
    "ensemble_reduce",
    "fit_power_law",
    "auto_window",
    "detect_crossover",
]

_HALF_DECADE = math.sqrt(10.0)


@dataclass
class MomentSeries:
    """Time series of second/fourth moments and entropies.

    One trajectory has n_trajectories = 1 and zero standard errors;
    ensemble_reduce fills the stderr fields.
    """

    times: np.ndarray
    x2: np.ndarray
    p2: np.ndarray
    x4: np.ndarray
    p4: np.ndarray
    s_x: np.ndarray
    s_p: np.ndarray
    n_trajectories: int = 1
    stream_id: int = 0
    x2_err: Optional[np.ndarray] = None
    p2_err: Optional[np.ndarray] = None
    x4_err: Optional[np.ndarray] = None
    p4_err: Optional[np.ndarray] = None
    s_x_err: Optional[np.ndarray] = None
    s_p_err: Optional[np.ndarray] = None

    _QUANTITIES = ("x2", "p2", "x4", "p4", "s_x", "s_p")

    def __post_init__(self):
        n = len(self.times)
        for name in self._QUANTITIES:
            if len(getattr(self, name)) != n:
                raise GridMismatchError(f"{name} not aligned with times")

    def __len__(self):
        return len(self.times)


def _check_normalized(weights: np.ndarray, step: float, what: str) -> None:
    total = float(np.sum(weights) * step)
    if abs(total - 1.0) > 1e-6:
        raise NormalizationError(f"{what} integrates to {total}, expected 1")


def moment(psi, grid: Grid, order: int, space: str) -> float:
    """Grid quadrature of <xi^order> in position or momentum space.

    psi is a WaveFunction (or anything with .amplitudes) normalized to
    one; orders 2 and 4 are the production cases.
    """
    amplitudes = getattr(psi, "amplitudes", psi)
    if order < 1 or int(order) != order:
        raise DomainError(f"order must be a positive integer, got {order}")
    if space not in ("x", "p"):
        raise DomainError(f"space must be 'x' or 'p', got {space!r}")
    density_x = np.abs(amplitudes) ** 2
    _check_normalized(density_x, grid.dx, "|psi|^2")
    if space == "x":
        return float(np.sum(grid.positions ** order * density_x) * grid.dx)
    from .propagator import momentum_transform  # deferred: avoids cycle

    phi = momentum_transform(psi, grid)
    density_p = np.abs(phi) ** 2
    dp = grid.hbar * 2.0 * np.pi / grid.box_length
    return float(np.sum(grid.momenta ** order * density_p) * dp)


def entropy(density, step: float) -> float:
    """Differential entropy -sum(rho ln rho) * step of a grid density."""
    rho = np.asarray(density, dtype=float)
    if np.any(rho < 0):
        raise DomainError("density has negative entries")
    if step <= 0:
        raise DomainError("measure step must be positive")
    _check_normalized(rho, step, "density")
    positive = rho > 0
    return float(-np.sum(rho[positive] * np.log(rho[positive])) * step)


def combined_entropy(rho_x, f_p, steps: tuple[float, float]) -> float:
    """Joint entropy of the product density rho(x) F(p).

    The double integral factorizes exactly into S_x * mass_p +
    S_p * mass_x, which is how it is evaluated; for unit-mass inputs it
    equals entropy(rho_x) + entropy(f_p).
    """
    dx, dp = steps
    s_x = entropy(rho_x, dx)
    s_p = entropy(f_p, dp)
    mass_x = float(np.sum(np.asarray(rho_x, dtype=float)) * dx)
    mass_p = float(np.sum(np.asarray(f_p, dtype=float)) * dp)
    return s_x * mass_p + s_p * mass_x


def ensemble_reduce(series: Sequence[MomentSeries]) -> MomentSeries:
    """Pointwise mean and standard error across trajectories.

    Inputs are sorted by stream id before the fold, so the result is
    bitwise independent of submission order and scheduling.
    """
    if len(series) < 2:
        raise DomainError("need at least 2 series to reduce")
    ordered = sorted(series, key=lambda s: s.stream_id)
    times = ordered[0].times
    for s in ordered[1:]:
        if len(s.times) != len(times) or not np.array_equal(s.times, times):
            raise GridMismatchError("series have misaligned time grids")
    n = len(ordered)
    out = {"times": times.copy(), "n_trajectories": n, "stream_id": ordered[0].stream_id}
    for name in MomentSeries._QUANTITIES:
        stack = np.stack([getattr(s, name) for s in ordered], axis=0)
        mean = stack.mean(axis=0)
        err = stack.std(axis=0, ddof=1) / math.sqrt(n)
        out[name] = mean
        out[name + "_err"] = err
    return MomentSeries(**out)


@dataclass(frozen=True)
class FitResult:
    """Least-squares power law y = prefactor * t^exponent."""

    exponent: float
    prefactor: float
    r_squared: float
    window: tuple[float, float]
    n_points: int = 0
    exponent_stderr: float = 0.0

    def __post_init__(self):
        if self.window[0] >= self.window[1]:
            raise DomainError("fit window must have t_min < t_max")


def fit_power_law(times, values, window: Optional[tuple[float, float]] = None
                  ) -> FitResult:
    """Straight-line fit on (ln t, ln y) restricted to a time window."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is None:
        window = (float(t.min()), float(t.max()))
    t_min, t_max = window
    mask = (t >= t_min) & (t <= t_max)
    t, y = t[mask], y[mask]
    if np.any(t <= 0):
        raise DomainError("times must be positive inside the fit window")
    if np.any(y <= 0):
        raise DomainError("values must be positive inside the fit window")
    if len(t) < 8:
        raise InsufficientDataError(f"only {len(t)} points in window, need >= 8")
    if t.max() / t.min() < _HALF_DECADE:
        raise InsufficientDataError("fit window spans less than half a decade")
    lt, ly = np.log(t), np.log(y)
    slope, intercept = np.polyfit(lt, ly, 1)
    fitted = slope * lt + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else max(0.0, 1.0 - ss_res / ss_tot)
    spread = float(np.sum((lt - lt.mean()) ** 2))
    stderr = math.sqrt(max(ss_res, 0.0) / (len(t) - 2) / spread) if len(t) > 2 else 0.0
    return FitResult(
        exponent=float(slope), prefactor=float(np.exp(intercept)),
        r_squared=r2, window=(t_min, t_max), n_points=len(t),
        exponent_stderr=stderr,
    )


def _local_slopes(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Centered d(ln y)/d(ln t); endpoints use one-sided differences."""
    lt, ly = np.log(times), np.log(values)
    s = np.empty_like(lt)
    s[1:-1] = (ly[2:] - ly[:-2]) / (lt[2:] - lt[:-2])
    s[0] = (ly[1] - ly[0]) / (lt[1] - lt[0])
    s[-1] = (ly[-1] - ly[-2]) / (lt[-1] - lt[-2])
    return s


def auto_window(times, values, slope_tol: float = 0.05
                ) -> tuple[float, float]:
    """Maximal window whose local log-log slope varies by < slope_tol.

    Variation is measured relative to the window's median slope (with an
    absolute floor for slopes near zero). The window must keep at least
    8 points and half a decade.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    ok = (t > 0) & (y > 0)
    t, y = t[ok], y[ok]
    if len(t) < 8:
        raise InsufficientDataError("too few positive points for auto window")
    slopes = _local_slopes(t, y)
    best = None
    n = len(t)
    for i in range(n):
        for j in range(n - 1, i + 6, -1):
            if best is not None and (j - i) <= (best[1] - best[0]):
                break
            if t[j] / t[i] < _HALF_DECADE:
                break
            seg = slopes[i:j + 1]
            med = float(np.median(seg))
            tol = max(slope_tol * abs(med), slope_tol)
            if np.max(np.abs(seg - med)) < tol:
                if best is None or (j - i) > (best[1] - best[0]):
                    best = (i, j)
                break
    if best is None:
        raise InsufficientDataError("no window with stable local slope")
    return float(t[best[0]]), float(t[best[1]])


@dataclass(frozen=True)
class CrossoverResult:
    """Where the local slope passes the midpoint of two exponents."""

    time: float
    midpoint: float
    bracket: tuple[float, float]
    slope_before: float
    slope_after: float


def detect_crossover(times, values, exp_a: float, exp_b: float,
                     smooth: int = 3) -> Optional[CrossoverResult]:
    """Locate the slope crossover between two power-law regimes.

    Returns None when the (smoothed) local slope never crosses the
    midpoint (exp_a + exp_b) / 2 — a pure power law, for instance.
    """
    if exp_a == exp_b:
        raise DomainError("exponents must differ")
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if np.any(t <= 0) or np.any(y <= 0):
        raise DomainError("crossover detection needs positive times and values")
    slopes = _local_slopes(t, y)
    if smooth > 1 and len(slopes) >= smooth:
        kernel = np.ones(smooth) / smooth
        slopes = np.convolve(slopes, kernel, mode="same")
    mid = 0.5 * (exp_a + exp_b)
    d = slopes - mid
    for i in range(len(d) - 1):
        if d[i] == 0.0 or d[i] * d[i + 1] < 0:
            lt0, lt1 = math.log(t[i]), math.log(t[i + 1])
            frac = 0.0 if d[i + 1] == d[i] else d[i] / (d[i] - d[i + 1])
            t_cross = math.exp(lt0 + frac * (lt1 - lt0))
            return CrossoverResult(
                time=t_cross, midpoint=mid, bracket=(float(t[i]), float(t[i + 1])),
                slope_before=float(slopes[i]), slope_after=float(slopes[i + 1]),
            )
    return None

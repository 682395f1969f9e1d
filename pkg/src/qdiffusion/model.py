"""Model parameters, grids, initial states and regime selection.

Everything downstream (noise synthesis, propagation, closed forms) reads
its symbols from here. Default units are natural: hbar = m = 1.

Conventions:
    alpha = v0^2 / (2 hbar^2)      position-space noise coupling
    beta  = g0^2 / (2 hbar^2)      momentum-space noise coupling
    a(t)  = 1 - exp(-t/tau)        memory build-up factor (a = 1 for tau = 0)

The initial state is the normalized minimum-uncertainty Gaussian

    psi(x) = (2 pi sigma1^2)^(-1/4) exp(-(x-x0)^2/(4 sigma1^2) + i p0 (x-x0)/hbar)

so that <(x-x0)^2> = sigma1^2 and <(p-p0)^2> = hbar^2/(4 sigma1^2).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ResolutionError

__all__ = [
    "PhysicalParams",
    "Grid",
    "PacketSpec",
    "RegimeTag",
    "WaveFunction",
    "derive_couplings",
    "initial_packet",
    "time_modulation",
    "time_modulation_short",
    "integrated_modulation",
]


def derive_couplings(v0: float, g0: float, hbar: float) -> tuple[float, float]:
    """Couplings (alpha, beta) = (v0^2, g0^2) / (2 hbar^2)."""
    if hbar <= 0:
        raise DomainError(f"hbar must be positive, got {hbar}")
    return v0 * v0 / (2.0 * hbar * hbar), g0 * g0 / (2.0 * hbar * hbar)


@dataclass(frozen=True)
class PhysicalParams:
    """All model constants. alpha/beta are derived, never set directly.

    tau_ref substitutes for tau inside closed forms whose printed
    prefactor retains tau even in the tau = 0 branch (see analytics
    discrepancy notes).
    """

    hbar: float = 1.0
    mass: float = 1.0
    tau: float = 1.0
    v0: float = 1.0
    g0: float = 1.0
    sigma0: float = 1.0   # momentum-kernel width
    sigma1: float = 1.0   # spatial-kernel width, also default packet width
    sigma2: float = 1.0   # free constant of the displacement closed forms
    tau_ref: float = 1.0
    alpha: float = field(init=False)
    beta: float = field(init=False)

    def __post_init__(self):
        if self.hbar <= 0:
            raise DomainError(f"hbar must be positive, got {self.hbar}")
        if self.mass <= 0:
            raise DomainError(f"mass must be positive, got {self.mass}")
        if self.tau < 0:
            raise DomainError(f"tau must be >= 0, got {self.tau}")
        if self.v0 < 0 or self.g0 < 0:
            raise DomainError("noise strengths v0, g0 must be >= 0")
        for name in ("sigma0", "sigma1", "sigma2", "tau_ref"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        alpha, beta = derive_couplings(self.v0, self.g0, self.hbar)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def from_couplings(cls, alpha: float, beta: float, **kwargs) -> "PhysicalParams":
        """Build params whose derived couplings equal (alpha, beta).

        Inverts alpha = v0^2/2hbar^2 for v0 (and likewise g0), so the
        derived-only invariant still holds.
        """
        if alpha < 0 or beta < 0:
            raise DomainError("couplings must be >= 0")
        hbar = kwargs.get("hbar", 1.0)
        kwargs.pop("v0", None)
        kwargs.pop("g0", None)
        v0 = hbar * math.sqrt(2.0 * alpha)
        g0 = hbar * math.sqrt(2.0 * beta)
        return cls(v0=v0, g0=g0, **kwargs)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic spatial grid plus the time step of the run.

    dt is capped at 0.1 * m * dx^2 / hbar. Split-step propagation is
    unconditionally stable; the cap controls the Trotter error of the
    kinetic phase.
    """

    n_points: int
    box_length: float
    dt: float
    n_steps: int
    hbar: float = 1.0
    mass: float = 1.0

    def __post_init__(self):
        n = self.n_points
        if n < 64 or (n & (n - 1)) != 0:
            raise DomainError(f"n_points must be a power of two >= 64, got {n}")
        if self.box_length <= 0:
            raise DomainError("box_length must be positive")
        if self.n_steps < 0:
            raise DomainError("n_steps must be >= 0")
        bound = 0.1 * self.mass * self.dx ** 2 / self.hbar
        if self.dt <= 0 or self.dt > bound * (1 + 1e-12):
            raise DomainError(
                f"dt must lie in (0, {bound:.6g}] for n_points={n}, "
                f"box_length={self.box_length}; got {self.dt}"
            )

    @property
    def dx(self) -> float:
        return self.box_length / self.n_points

    @property
    def positions(self) -> np.ndarray:
        """Grid points on [-L/2, L/2), origin included."""
        return -0.5 * self.box_length + self.dx * np.arange(self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        """FFT-ordered angular wavenumbers."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def momenta(self) -> np.ndarray:
        """FFT-ordered momenta p = hbar k."""
        return self.hbar * self.wavenumbers


@dataclass(frozen=True)
class PacketSpec:
    """Initial Gaussian packet: center x0, boost p0, width sigma1."""

    x0: float = 0.0
    p0: float = 0.0
    width: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise DomainError("packet width must be positive")


class RegimeTag(enum.Enum):
    """Which closed-form branch applies."""

    SHORT_TIME = "short_time"   # t << tau
    LONG_TIME = "long_time"     # t >> tau
    TAU_ZERO = "tau_zero"       # tau = 0, delta-correlated noise

    @classmethod
    def parse(cls, text: str) -> "RegimeTag":
        key = text.strip().lower().replace("-", "_")
        for tag in cls:
            if tag.value == key:
                return tag
        raise DomainError(f"unknown regime '{text}'")


def check_regime(regime: RegimeTag, params: PhysicalParams) -> None:
    """tau = 0 admits only the TAU_ZERO branch."""
    if params.tau == 0 and regime is not RegimeTag.TAU_ZERO:
        raise DomainError("tau = 0 requires the tau_zero regime")


@dataclass
class WaveFunction:
    """Complex amplitudes on the spatial grid; unit discrete L2 norm."""

    amplitudes: np.ndarray
    current_time: float = 0.0

    def norm(self, grid: Grid) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * grid.dx))


def initial_packet(grid: Grid, spec: PacketSpec) -> WaveFunction:
    """Normalized Gaussian packet with <x> = x0, <p> = p0, <(x-x0)^2> = width^2.

    Renormalized on the grid, so the discrete norm is 1 to machine
    precision regardless of truncation at the box edge.
    """
    if spec.width < 2.0 * grid.dx:
        raise ResolutionError(
            f"packet width {spec.width} under-resolved (dx = {grid.dx:.6g})"
        )
    if spec.width > grid.box_length / 8.0:
        raise ResolutionError(
            f"packet width {spec.width} too wide for box {grid.box_length}"
        )
    if abs(spec.x0) >= grid.box_length / 4.0:
        raise ResolutionError("packet center must satisfy |x0| < box_length/4")
    x = grid.positions
    xc = x - spec.x0
    psi = np.exp(-(xc ** 2) / (4.0 * spec.width ** 2) + 1j * spec.p0 * xc / grid.hbar)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * grid.dx)
    return WaveFunction(amplitudes=psi.astype(np.complex128), current_time=0.0)


def time_modulation(t: float, params: PhysicalParams) -> float:
    """a(t) = 1 - exp(-t/tau); identically 1 in the delta-correlated limit."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if params.tau == 0:
        return 1.0
    return -math.expm1(-t / params.tau)


def time_modulation_short(t: float, params: PhysicalParams) -> float:
    """Leading small-t approximant t/tau of the modulation factor."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if params.tau == 0:
        raise DomainError("short-time approximant undefined for tau = 0")
    return t / params.tau


def integrated_modulation(t: float, params: PhysicalParams) -> float:
    """Exact integral of the modulation factor from 0 to t."""
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if params.tau == 0:
        return t
    return t + params.tau * math.expm1(-t / params.tau)

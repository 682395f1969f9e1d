"""Wave-function and density-matrix propagation.

Trajectories: second-order split-step (Strang) evolution of psi under
one noise realization,

    psi -> K(dt/2) V(dt) K(dt/2) psi,

with the kinetic phase applied spectrally and the potential phase taken
from the noise slice at the step midpoint. Norm is preserved to
round-off; a wrap-around guard aborts a run whose packet no longer fits
the periodic box.

Noise average: the density matrix rho(x, x') evolves under the same
kinetic term plus a dephasing factor acting on the relative coordinate,

    rho(x, x') *= exp(-rate_scale * alpha * [f(0) - f(x - x')] * int_a dt),

where int_a is the exact step integral of the memory factor a(t). The
printed averaged-equation rate corresponds to rate_scale = 1 and is the
default of dephasing_step; the exact Gaussian average of trajectories
decays twice as fast, so evolve_master defaults to rate_scale = 2 (see
analytics.DISCREPANCY_NOTES['dephasing_rate_factor_two']).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import estimators
from .errors import (
    DomainError,
    GridMismatchError,
    NormalizationError,
    StabilityError,
    WrapAroundError,
)
from .model import (
    Grid,
    PacketSpec,
    PhysicalParams,
    WaveFunction,
    initial_packet,
    integrated_modulation,
)
from .noisefield import (
    NoiseSlice,
    NoiseSpec,
    RngStream,
    periodized_kernel,
    sample_stationary_slice,
    advance_slice,
    white_noise_slice,
)

__all__ = [
    "WaveFunction",
    "DensityRelative",
    "MasterSeries",
    "split_step",
    "momentum_transform",
    "evolve_with_potential",
    "evolve_trajectory",
    "density_from_packet",
    "dephasing_step",
    "dephasing_profile",
    "evolve_master",
    "NORM_DRIFT_LIMIT",
]

NORM_DRIFT_LIMIT = 1e-8
TRACE_DRIFT_LIMIT = 1e-6


def _require_same_grid(grid: Grid, params: PhysicalParams) -> None:
    if not (math.isclose(grid.hbar, params.hbar) and math.isclose(grid.mass, params.mass)):
        raise GridMismatchError(
            "grid was built with different hbar/mass than params"
        )


@lru_cache(maxsize=32)
def _kinetic_half_phase(n_points: int, box_length: float, dt: float,
                        hbar: float, mass: float) -> np.ndarray:
    k = 2.0 * np.pi * np.fft.fftfreq(n_points, d=box_length / n_points)
    phase = np.exp(-1j * hbar * k * k * dt / (4.0 * mass))
    phase.setflags(write=False)
    return phase


def split_step(psi: WaveFunction, noise: NoiseSlice, grid: Grid,
               params: PhysicalParams) -> WaveFunction:
    """One Strang step under the given potential slice."""
    _require_same_grid(grid, params)
    if psi.amplitudes.shape != (grid.n_points,):
        raise GridMismatchError("wave function does not match grid")
    if noise.values.shape != (grid.n_points,):
        raise GridMismatchError("noise slice does not match grid")
    amps = _split_step_arrays(psi.amplitudes, noise.values, grid, params)
    return WaveFunction(amplitudes=amps, current_time=psi.current_time + grid.dt)


def _split_step_arrays(amps: np.ndarray, potential: np.ndarray, grid: Grid,
                       params: PhysicalParams) -> np.ndarray:
    kin = _kinetic_half_phase(grid.n_points, grid.box_length, grid.dt,
                              params.hbar, params.mass)
    pot = np.exp(-1j * potential * grid.dt / params.hbar)
    out = np.fft.ifft(kin * np.fft.fft(amps))
    out *= pot
    return np.fft.ifft(kin * np.fft.fft(out))


def momentum_transform(psi, grid: Grid) -> np.ndarray:
    """Unitary transform to momentum amplitudes, FFT mode order.

    Output is normalized so that sum |psi_tilde|^2 dp = 1, with
    dp = hbar * 2 pi / L on the modes grid.momenta.
    """
    amplitudes = getattr(psi, "amplitudes", psi)
    x_min = -0.5 * grid.box_length
    k = grid.wavenumbers
    phi = np.fft.fft(amplitudes) * grid.dx / math.sqrt(2.0 * math.pi * grid.hbar)
    return phi * np.exp(-1j * k * x_min)


# ---------------------------------------------------------------------------
# trajectory evolution
# ---------------------------------------------------------------------------


def _record(amps: np.ndarray, grid: Grid, x_pows: tuple, p_pows: tuple,
            dp: float) -> tuple:
    """(x2, x4, p2, p4, s_x, s_p) of a normalized state, one FFT."""
    density_x = np.abs(amps) ** 2
    x2 = float(np.sum(x_pows[0] * density_x) * grid.dx)
    x4 = float(np.sum(x_pows[1] * density_x) * grid.dx)
    phi = np.fft.fft(amps) * (grid.dx / math.sqrt(2.0 * math.pi * grid.hbar))
    density_p = np.abs(phi) ** 2
    p2 = float(np.sum(p_pows[0] * density_p) * dp)
    p4 = float(np.sum(p_pows[1] * density_p) * dp)
    s_x = estimators.entropy(density_x, grid.dx)
    s_p = estimators.entropy(density_p / float(np.sum(density_p) * dp), dp)
    return x2, x4, p2, p4, s_x, s_p


def evolve_with_potential(psi: WaveFunction, potential_at: Callable[[float], np.ndarray],
                          grid: Grid, params: PhysicalParams, n_steps: int,
                          record_stride: int = 1, stream_id: int = 0,
                          edge_guard_mass: Optional[float] = None,
                          ) -> tuple[estimators.MomentSeries, WaveFunction]:
    """Drive the split-step scheme with an arbitrary potential provider.

    potential_at(t_mid) must return the potential on the grid at the
    midpoint of the step starting at t_mid - dt/2. Used both by the
    stochastic trajectories and by deterministic-potential tests.
    """
    _require_same_grid(grid, params)
    if record_stride < 1:
        raise DomainError("record_stride must be >= 1")
    amps = psi.amplitudes.copy()
    x = grid.positions
    x_pows = (x ** 2, x ** 4)
    p = grid.momenta
    p_pows = (p ** 2, p ** 4)
    dp = grid.hbar * 2.0 * np.pi / grid.box_length
    guard_level = (grid.box_length / 4.0) ** 2
    edge_zone = np.abs(x) >= 0.45 * grid.box_length

    times, rows = [], []

    def record_and_guard(step: int, t: float):
        norm2 = float(np.sum(np.abs(amps) ** 2) * grid.dx)
        if abs(math.sqrt(norm2) - 1.0) > NORM_DRIFT_LIMIT:
            raise StabilityError(
                f"norm drifted to {math.sqrt(norm2):.12f} at step {step}",
                step=step, trajectory=stream_id,
            )
        row = _record(amps, grid, x_pows, p_pows, dp)
        times.append(t)
        rows.append(row)
        if row[0] > guard_level:
            raise WrapAroundError(
                f"<x^2> = {row[0]:.4g} exceeded (L/4)^2 = {guard_level:.4g} "
                f"at step {step}",
                step=step, trajectory=stream_id, series=_series(times, rows, stream_id),
            )
        if edge_guard_mass is not None:
            mass = float(np.sum(np.abs(amps[edge_zone]) ** 2) * grid.dx)
            if mass > edge_guard_mass:
                raise WrapAroundError(
                    f"edge density mass {mass:.3g} exceeded {edge_guard_mass:.3g} "
                    f"at step {step}",
                    step=step, trajectory=stream_id,
                    series=_series(times, rows, stream_id),
                )

    record_and_guard(0, psi.current_time)
    t = psi.current_time
    for step in range(1, n_steps + 1):
        v = potential_at(t + 0.5 * grid.dt)
        amps = _split_step_arrays(amps, v, grid, params)
        t += grid.dt
        if step % record_stride == 0:
            record_and_guard(step, t)
    return _series(times, rows, stream_id), WaveFunction(amps, current_time=t)


def _series(times: list, rows: list, stream_id: int) -> estimators.MomentSeries:
    arr = np.asarray(rows, dtype=float)
    return estimators.MomentSeries(
        times=np.asarray(times, dtype=float),
        x2=arr[:, 0], x4=arr[:, 1], p2=arr[:, 2], p4=arr[:, 3],
        s_x=arr[:, 4], s_p=arr[:, 5],
        n_trajectories=1, stream_id=stream_id,
    )


def evolve_trajectory(packet: PacketSpec, noise: NoiseSpec, grid: Grid,
                      params: PhysicalParams, rng: RngStream,
                      record_stride: int = 1,
                      edge_guard_mass: Optional[float] = None,
                      ) -> estimators.MomentSeries:
    """One stochastic trajectory; deterministic in (master_seed, stream_id).

    For tau > 0 the potential is the stationary OU field sampled at step
    midpoints; for tau = 0 each step draws an independent slice with the
    1/dt variance of the delta-time limit.
    """
    gen = rng.generator()
    psi = initial_packet(grid, packet)
    state = {}

    if noise.tau > 0:
        def potential_at(t_mid: float) -> np.ndarray:
            if "slice" not in state:
                state["slice"] = sample_stationary_slice(noise, grid, gen)
            else:
                state["slice"] = advance_slice(state["slice"], noise, grid,
                                               grid.dt, gen)
            return state["slice"].values
    else:
        def potential_at(t_mid: float) -> np.ndarray:
            return white_noise_slice(noise, grid, grid.dt, gen).values

    series, _ = evolve_with_potential(
        psi, potential_at, grid, params, grid.n_steps,
        record_stride=record_stride, stream_id=rng.stream_id,
        edge_guard_mass=edge_guard_mass,
    )
    return series


# ---------------------------------------------------------------------------
# noise-averaged density matrix
# ---------------------------------------------------------------------------


@dataclass
class DensityRelative:
    """Density matrix on the (x, x') grid; values[i, j] = rho(x_i, x'_j).

    The relative coordinate x2 = x - x' indexes the off-diagonals, so
    coherence decay is read along them; the x2 = 0 diagonal carries the
    position density.
    """

    values: np.ndarray
    grid: Grid
    current_time: float = 0.0

    def trace(self) -> float:
        return float(np.real(np.trace(self.values)) * self.grid.dx)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.values - self.values.conj().T)))

    def position_density(self) -> np.ndarray:
        return np.real(np.diagonal(self.values)).copy()

    def x2_profile(self) -> tuple[np.ndarray, np.ndarray]:
        """Coherence slice rho(x, -x) against x2 = 2x (sum coordinate 0)."""
        n = self.grid.n_points
        idx = np.arange(n)
        anti = self.values[idx, (-idx) % n]
        return 2.0 * self.grid.positions, anti

    def msd(self) -> float:
        d = self.position_density()
        w = float(np.sum(d) * self.grid.dx)
        return float(np.sum(self.grid.positions ** 2 * d) * self.grid.dx / w)

    def msm(self) -> float:
        m = np.fft.fft(self.values, axis=0)
        m = np.conj(np.fft.fft(np.conj(m), axis=1))
        w = np.real(np.diagonal(m))
        return float(np.sum(self.grid.momenta ** 2 * w) / np.sum(w))


def density_from_packet(grid: Grid, packet: PacketSpec) -> DensityRelative:
    """Pure-state density matrix of the initial Gaussian packet."""
    psi = initial_packet(grid, packet).amplitudes
    return DensityRelative(values=np.outer(psi, psi.conj()), grid=grid)


@lru_cache(maxsize=8)
def _delta_kernel_matrix(spec: NoiseSpec, grid: Grid) -> np.ndarray:
    """Matrix f(0) - f(x_i - x_j) from the grid-periodized kernel."""
    row = periodized_kernel(spec, grid)
    delta_row = row[0] - row
    idx = (np.arange(grid.n_points)[:, None] - np.arange(grid.n_points)[None, :])
    mat = delta_row[idx % grid.n_points]
    mat.setflags(write=False)
    return mat


def dephasing_profile(spec: NoiseSpec, grid: Grid, params: PhysicalParams,
                      t: float, rate_scale: float = 1.0) -> np.ndarray:
    """Accumulated decay exponent matrix rate_scale*alpha*int_0^t a*[f(0)-f]."""
    return (rate_scale * params.alpha * integrated_modulation(t, params)
            * _delta_kernel_matrix(spec, grid))


def dephasing_step(rho: DensityRelative, params: PhysicalParams, dt: float,
                   t: float, spec: Optional[NoiseSpec] = None,
                   rate_scale: float = 1.0) -> DensityRelative:
    """Pure dephasing over [t, t+dt]: damp each relative-coordinate channel.

    Uses the exact step integral of a(t), so composing steps reproduces
    the closed-form decay exp(-rate_scale*alpha*int_0^t a*[f(0)-f(x2)])
    with no time-discretization bias. The diagonal is exactly invariant.
    rate_scale = 1 is the printed averaged-equation rate; 2 is the exact
    Gaussian-average rate used for trajectory comparisons.
    """
    if rho.hermiticity_defect() > 1e-9 * max(1.0, float(np.max(np.abs(rho.values)))):
        raise NormalizationError("dephasing_step requires a Hermitian input")
    if spec is None:
        spec = NoiseSpec(strength=params.v0, tau=params.tau,
                         corr_length=params.sigma1)
    weight = integrated_modulation(t + dt, params) - integrated_modulation(t, params)
    decay = np.exp(-rate_scale * params.alpha * weight
                   * _delta_kernel_matrix(spec, rho.grid))
    return DensityRelative(values=rho.values * decay, grid=rho.grid,
                           current_time=rho.current_time + dt)


def _kinetic_conjugation(values: np.ndarray, grid: Grid, params: PhysicalParams,
                         dt: float) -> np.ndarray:
    """rho -> U rho U^dagger with U the free half/full-step propagator."""
    k = grid.wavenumbers
    phase = np.exp(-1j * params.hbar * k * k * dt / (2.0 * params.mass))
    out = np.fft.ifft(phase[:, None] * np.fft.fft(values, axis=0), axis=0)
    out = np.conj(np.fft.ifft(phase[:, None].T * np.fft.fft(np.conj(out), axis=1), axis=1))
    return out


@dataclass
class MasterSeries:
    """Recorded observables of a master-equation run."""

    times: np.ndarray
    x2: np.ndarray
    p2: np.ndarray
    trace: np.ndarray
    final: DensityRelative


def evolve_master(rho0: DensityRelative, grid: Grid, params: PhysicalParams,
                  n_steps: int, spec: Optional[NoiseSpec] = None,
                  rate_scale: float = 2.0, kinetic: bool = True,
                  record_stride: int = 1) -> MasterSeries:
    """Strang-split master evolution: half kinetic, dephase, half kinetic.

    Default rate_scale = 2 makes the solution the noise average of the
    unitary trajectories; rate_scale = 1 reproduces the printed
    averaged-equation rate. Trace is conserved to round-off by both
    sub-steps; drift beyond 1e-6 aborts.
    """
    _require_same_grid(grid, params)
    if grid.n_points > 512:
        raise DomainError("master solver is restricted to grids <= 512")
    if rho0.values.shape != (grid.n_points, grid.n_points):
        raise GridMismatchError("density matrix does not match grid")
    if spec is None:
        spec = NoiseSpec(strength=params.v0, tau=params.tau,
                         corr_length=params.sigma1)
    dkm = _delta_kernel_matrix(spec, grid)
    values = rho0.values.copy()
    trace0 = float(np.real(np.trace(values)) * grid.dx)
    dt = grid.dt

    times, x2s, p2s, traces = [], [], [], []

    def record(t: float):
        rho = DensityRelative(values, grid, t)
        tr = rho.trace()
        if abs(tr - trace0) > TRACE_DRIFT_LIMIT * max(1.0, abs(trace0)):
            raise StabilityError(f"trace drifted to {tr} at t = {t}")
        times.append(t)
        x2s.append(rho.msd())
        p2s.append(rho.msm())
        traces.append(tr)

    record(rho0.current_time)
    t = rho0.current_time
    for step in range(1, n_steps + 1):
        if kinetic:
            values = _kinetic_conjugation(values, grid, params, 0.5 * dt)
        weight = integrated_modulation(t + dt, params) - integrated_modulation(t, params)
        if rate_scale != 0.0 and params.alpha != 0.0:
            values *= np.exp(-rate_scale * params.alpha * weight * dkm)
        if kinetic:
            values = _kinetic_conjugation(values, grid, params, 0.5 * dt)
        t += dt
        if step % record_stride == 0:
            record(t)

    return MasterSeries(
        times=np.asarray(times), x2=np.asarray(x2s), p2=np.asarray(p2s),
        trace=np.asarray(traces),
        final=DensityRelative(values, grid, t),
    )

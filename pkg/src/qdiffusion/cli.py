"""Experiment orchestration: config parsing, runs, manifests, outputs.

Configuration is a flat "key = value" file ('#' starts a comment).
Unknown keys are rejected. Outputs are UTF-8 tab-separated tables with a
header line and 17-significant-digit floats, so doubles round-trip
losslessly and two runs of the same config diff byte-identical.

Subcommands: simulate | analytic | compare | validate-noise | verify-manifest
Exit codes:  0 ok, 2 config error, 3 numerical abort, 4 verification mismatch.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import json
import sys
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, analytics, estimators
from .errors import ConfigError, InsufficientDataError, StabilityError
from .model import Grid, PacketSpec, PhysicalParams, RegimeTag
from .noisefield import (
    NoiseSpec,
    RngStream,
    mix_seed,
    sample_stationary_slice,
    advance_slice,
    validate_correlator,
)
from .propagator import evolve_trajectory

__all__ = ["ExperimentConfig", "RunManifest", "parse_config", "run", "main"]

MODES = ("simulate", "analytic", "compare", "validate-noise")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _to_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


# key -> (converter, default); _REQUIRED means the key must be present
_REQUIRED = object()

_SCHEMA = {
    "mode": (str, _REQUIRED),
    "master_seed": (int, _REQUIRED),
    "hbar": (float, 1.0),
    "mass": (float, 1.0),
    "tau": (float, 1.0),
    "v0": (float, 1.0),
    "g0": (float, 1.0),
    "sigma0": (float, 1.0),
    "sigma1": (float, 1.0),
    "sigma2": (float, 1.0),
    "tau_ref": (float, 1.0),
    "corr_length": (float, None),      # defaults to sigma1
    "x0": (float, 0.0),
    "p0": (float, 0.0),
    "packet_width": (float, None),     # defaults to sigma1
    "n_points": (int, 256),
    "box_length": (float, 32.0),
    "dt": (float, 1e-3),
    "n_steps": (int, 1000),
    "n_trajectories": (int, 1),
    "record_stride": (int, 1),
    "regime": (str, "auto"),
    "t_min": (float, 0.1),
    "t_max": (float, 10.0),
    "n_times": (int, 64),
    "time_spacing": (str, "log"),
    "fit_t_min": (float, None),
    "fit_t_max": (float, None),
    "n_samples": (int, 20000),
    "threads": (int, 1),
    "dump_realization": (_to_bool, False),
    "snapshot_stride": (int, 0),
    "edge_guard_mass": (float, None),
    "output_dir": (str, None),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully validated run description."""

    mode: str
    master_seed: int
    params: PhysicalParams
    grid: Grid
    packet: PacketSpec
    noise: NoiseSpec
    regime: RegimeTag
    n_trajectories: int
    record_stride: int
    t_min: float
    t_max: float
    n_times: int
    time_spacing: str
    fit_window: Optional[tuple[float, float]]
    n_samples: int
    threads: int
    dump_realization: bool
    snapshot_stride: int
    edge_guard_mass: Optional[float]
    output_dir: Optional[str]
    config_text: str

    def trajectory_seeds(self) -> list[int]:
        return [mix_seed(self.master_seed, i) for i in range(self.n_trajectories)]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a flat key-value config document."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        raw[key] = value

    values: dict = {}
    for key, (conv, default) in _SCHEMA.items():
        if key in raw:
            try:
                values[key] = conv(raw[key])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"key '{key}': {exc}") from exc
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key '{key}'")
        else:
            values[key] = default

    if values["mode"] not in MODES:
        raise ConfigError(
            f"key 'mode': must be one of {', '.join(MODES)}; got '{values['mode']}'"
        )

    def build(factory, kwargs, context):
        try:
            return factory(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"{context}: {exc}") from exc

    params = build(PhysicalParams, dict(
        hbar=values["hbar"], mass=values["mass"], tau=values["tau"],
        v0=values["v0"], g0=values["g0"], sigma0=values["sigma0"],
        sigma1=values["sigma1"], sigma2=values["sigma2"],
        tau_ref=values["tau_ref"],
    ), "physical parameters")
    grid = build(Grid, dict(
        n_points=values["n_points"], box_length=values["box_length"],
        dt=values["dt"], n_steps=values["n_steps"],
        hbar=values["hbar"], mass=values["mass"],
    ), "grid")
    packet = build(PacketSpec, dict(
        x0=values["x0"], p0=values["p0"],
        width=values["packet_width"] if values["packet_width"] is not None
        else values["sigma1"],
    ), "packet")
    noise = build(NoiseSpec, dict(
        strength=values["v0"], tau=values["tau"],
        corr_length=values["corr_length"] if values["corr_length"] is not None
        else values["sigma1"],
    ), "noise")

    regime_text = values["regime"]
    if regime_text == "auto":
        regime = RegimeTag.TAU_ZERO if values["tau"] == 0 else RegimeTag.LONG_TIME
    else:
        try:
            regime = RegimeTag.parse(regime_text)
        except ValueError as exc:
            raise ConfigError(f"key 'regime': {exc}") from exc
    if values["tau"] == 0 and regime is not RegimeTag.TAU_ZERO:
        raise ConfigError("key 'regime': tau = 0 requires regime = tau_zero")

    if values["n_trajectories"] < 1:
        raise ConfigError("key 'n_trajectories': must be >= 1")
    if values["record_stride"] < 1:
        raise ConfigError("key 'record_stride': must be >= 1")
    if values["threads"] < 1:
        raise ConfigError("key 'threads': must be >= 1")
    if values["t_min"] <= 0 or values["t_max"] <= values["t_min"]:
        raise ConfigError("keys 't_min'/'t_max': need 0 < t_min < t_max")
    if values["n_times"] < 2:
        raise ConfigError("key 'n_times': must be >= 2")
    if values["time_spacing"] not in ("log", "linear"):
        raise ConfigError("key 'time_spacing': must be 'log' or 'linear'")
    if values["n_samples"] < 1000:
        raise ConfigError("key 'n_samples': must be >= 1000")

    fit_window = None
    if (values["fit_t_min"] is None) != (values["fit_t_max"] is None):
        raise ConfigError("keys 'fit_t_min'/'fit_t_max': set both or neither")
    if values["fit_t_min"] is not None:
        if values["fit_t_min"] >= values["fit_t_max"]:
            raise ConfigError("keys 'fit_t_min'/'fit_t_max': need t_min < t_max")
        fit_window = (values["fit_t_min"], values["fit_t_max"])

    return ExperimentConfig(
        mode=values["mode"], master_seed=values["master_seed"], params=params,
        grid=grid, packet=packet, noise=noise, regime=regime,
        n_trajectories=values["n_trajectories"],
        record_stride=values["record_stride"], t_min=values["t_min"],
        t_max=values["t_max"], n_times=values["n_times"],
        time_spacing=values["time_spacing"], fit_window=fit_window,
        n_samples=values["n_samples"], threads=values["threads"],
        dump_realization=values["dump_realization"],
        snapshot_stride=values["snapshot_stride"],
        edge_guard_mass=values["edge_guard_mass"],
        output_dir=values["output_dir"], config_text=text,
    )


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    """Reproducibility record written before any data file is finalized."""

    mode: str
    code_version: str
    master_seed: int
    threads: int
    trajectory_seeds: list[int]
    output_files: list[str]
    discrepancy_notes: list[str]
    config_text: str
    wall_clock_s: Optional[float] = None

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2) + "\n",
                        encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(path.read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# tabular output
# ---------------------------------------------------------------------------

def _write_table(path: Path, header: list[str], rows: list[list]) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(
            cell if isinstance(cell, str) else _fmt(cell) for cell in row
        ))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _moments_rows(series: estimators.MomentSeries) -> tuple[list[str], list[list]]:
    header = ["t", "x2", "x2_err", "p2", "p2_err", "x4", "x4_err",
              "p4", "p4_err", "s_x", "s_x_err", "s_p", "s_p_err", "n_traj"]
    zeros = np.zeros_like(series.times)
    errs = {
        name: getattr(series, name + "_err")
        if getattr(series, name + "_err") is not None else zeros
        for name in ("x2", "p2", "x4", "p4", "s_x", "s_p")
    }
    rows = []
    for i, t in enumerate(series.times):
        rows.append([
            t, series.x2[i], errs["x2"][i], series.p2[i], errs["p2"][i],
            series.x4[i], errs["x4"][i], series.p4[i], errs["p4"][i],
            series.s_x[i], errs["s_x"][i], series.s_p[i], errs["s_p"][i],
            float(series.n_trajectories),
        ])
    return header, rows


def _fit_rows(fits: dict[str, estimators.FitResult]) -> tuple[list[str], list[list]]:
    header = ["quantity", "regime", "t_min", "t_max", "exponent", "stderr",
              "r_squared", "n_points"]
    rows = []
    for name, fit in fits.items():
        quantity, _, regime = name.partition("@")
        rows.append([
            quantity, regime or "-", fit.window[0], fit.window[1],
            fit.exponent, fit.exponent_stderr, fit.r_squared,
            float(fit.n_points),
        ])
    return header, rows


# ---------------------------------------------------------------------------
# run modes
# ---------------------------------------------------------------------------

def _trajectory_worker(args) -> estimators.MomentSeries:
    config, stream_id = args
    rng = RngStream(config.master_seed, stream_id)
    return evolve_trajectory(
        config.packet, config.noise, config.grid, config.params, rng,
        record_stride=config.record_stride,
        edge_guard_mass=config.edge_guard_mass,
    )


def _run_ensemble(config: ExperimentConfig) -> estimators.MomentSeries:
    """All trajectories, reduced in stream-id order (scheduling-invariant)."""
    jobs = [(config, i) for i in range(config.n_trajectories)]
    if config.threads == 1 or config.n_trajectories == 1:
        results = [_trajectory_worker(job) for job in jobs]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_trajectory_worker, jobs, chunksize=1))
    if len(results) == 1:
        return results[0]
    return estimators.ensemble_reduce(results)


def _analytic_times(config: ExperimentConfig) -> np.ndarray:
    if config.time_spacing == "log":
        return np.geomspace(config.t_min, config.t_max, config.n_times)
    return np.linspace(config.t_min, config.t_max, config.n_times)


def _mode_simulate(config: ExperimentConfig, out: Path) -> list[str]:
    files = []
    reduced = _run_ensemble(config)
    header, rows = _moments_rows(reduced)
    _write_table(out / "moments.tsv", header, rows)
    files.append("moments.tsv")
    if config.snapshot_stride > 0:
        files.append(_dump_snapshots(config, out))
    return files


def _dump_snapshots(config: ExperimentConfig, out: Path) -> str:
    """|psi|^2 of trajectory 0, one row per recorded time."""
    from .model import initial_packet
    from .propagator import evolve_with_potential
    from .noisefield import white_noise_slice

    grid, params = config.grid, config.params
    rng = RngStream(config.master_seed, 0).generator()
    state = {}

    def potential_at(t_mid):
        if config.noise.tau > 0:
            if "slice" not in state:
                state["slice"] = sample_stationary_slice(config.noise, grid, rng)
            else:
                state["slice"] = advance_slice(state["slice"], config.noise,
                                               grid, grid.dt, rng)
            return state["slice"].values
        return white_noise_slice(config.noise, grid, grid.dt, rng).values

    psi = initial_packet(grid, config.packet)
    amps = psi.amplitudes
    rows = [[0.0] + list(np.abs(amps) ** 2)]
    from .propagator import _split_step_arrays
    t = 0.0
    for step in range(1, grid.n_steps + 1):
        amps = _split_step_arrays(amps, potential_at(t + 0.5 * grid.dt), grid, params)
        t += grid.dt
        if step % config.snapshot_stride == 0:
            rows.append([t] + list(np.abs(amps) ** 2))
    header = ["t"] + [f"x{i}" for i in range(grid.n_points)]
    _write_table(out / "snapshots.tsv", header, rows)
    return "snapshots.tsv"


def _mode_analytic(config: ExperimentConfig, out: Path) -> list[str]:
    times = _analytic_times(config)
    rows = []
    curves = {}
    for fid in ("msm", "msd", "msd_noise"):
        results = analytics.evaluate_series(fid, times, config.regime, config.params)
        curves[fid] = np.array([r.value for r in results])
        for t, r in zip(times, results):
            rows.append([t, r.value, config.regime.value, fid])
    _write_table(out / "analytic.tsv", ["t", "value", "regime", "formula_id"], rows)

    fits = {}
    window = config.fit_window or (float(times[0]), float(times[-1]))
    for fid, values in curves.items():
        if np.all(values > 0):
            try:
                fits[f"{fid}@{config.regime.value}"] = estimators.fit_power_law(
                    times, values, window)
            except InsufficientDataError:
                pass
    header, rows = _fit_rows(fits)
    _write_table(out / "fits.tsv", header, rows)
    return ["analytic.tsv", "fits.tsv"]


def _mode_compare(config: ExperimentConfig, out: Path) -> list[str]:
    reduced = _run_ensemble(config)
    header, rows = _moments_rows(reduced)
    _write_table(out / "moments.tsv", header, rows)

    mask = reduced.times > 0
    times = reduced.times[mask]
    msd = np.array([analytics.msd_analytic(t, config.regime, config.params)
                    for t in times])
    msm = np.array([analytics.msm_analytic(t, config.regime, config.params)
                    for t in times])
    x2 = reduced.x2[mask]
    p2 = reduced.p2[mask]
    x2e = (reduced.x2_err[mask] if reduced.x2_err is not None
           else np.zeros_like(x2))
    p2e = (reduced.p2_err[mask] if reduced.p2_err is not None
           else np.zeros_like(p2))
    comp_rows = [
        [t, x2[i], x2e[i], msd[i], x2[i] / msd[i],
         p2[i], p2e[i], msm[i], p2[i] / msm[i] if msm[i] > 0 else float("nan")]
        for i, t in enumerate(times)
    ]
    _write_table(
        out / "compare.tsv",
        ["t", "sim_x2", "sim_x2_err", "analytic_msd", "x2_ratio",
         "sim_p2", "sim_p2_err", "analytic_msm", "p2_ratio"],
        comp_rows,
    )

    fits = {}

    def try_fit(name, tt, vv, window):
        try:
            fits[name] = estimators.fit_power_law(tt, vv, window)
        except (InsufficientDataError, ValueError):
            pass

    window = config.fit_window
    if window is None:
        try:
            window = estimators.auto_window(times, x2)
        except InsufficientDataError:
            window = (float(times[0]), float(times[-1]))
    regime = config.regime.value
    try_fit(f"sim_x2@{regime}", times, x2, window)
    try_fit(f"sim_p2@{regime}", times, p2, window)
    try_fit(f"msd@{regime}", times, msd, window)
    try_fit(f"msm@{regime}", times, msm, window)
    noise_vals = np.array([analytics.msd_noise_term(t, config.regime, config.params)
                           for t in times])
    if np.all(noise_vals > 0):
        try_fit(f"msd_noise@{regime}", times, noise_vals, window)
    header, rows = _fit_rows(fits)
    _write_table(out / "fits.tsv", header, rows)
    return ["moments.tsv", "compare.tsv", "fits.tsv"]


def _mode_validate_noise(config: ExperimentConfig, out: Path) -> list[str]:
    rng = RngStream(config.master_seed, 0).generator()
    report = validate_correlator(config.noise, config.grid, config.n_samples,
                                 rng=rng)
    rows = [
        [ds, ts, report.empirical[i], report.target[i],
         report.relative_deviation[i], report.stderr[i]]
        for i, (ds, ts) in enumerate(report.probes)
    ]
    _write_table(
        out / "correlator.tsv",
        ["dx_sep", "dt_sep", "empirical", "target", "rel_deviation", "stderr"],
        rows,
    )
    files = ["correlator.tsv"]
    if config.dump_realization:
        gen = RngStream(config.master_seed, 1).generator()
        cur = sample_stationary_slice(config.noise, config.grid, gen)
        rows = [[0.0] + list(cur.values)]
        for step in range(1, min(config.grid.n_steps, 200) + 1):
            cur = advance_slice(cur, config.noise, config.grid, config.grid.dt, gen)
            rows.append([step * config.grid.dt] + list(cur.values))
        header = ["t"] + [f"x{i}" for i in range(config.grid.n_points)]
        _write_table(out / "realization.tsv", header, rows)
        files.append("realization.tsv")
    return files


_MODE_RUNNERS = {
    "simulate": _mode_simulate,
    "analytic": _mode_analytic,
    "compare": _mode_compare,
    "validate-noise": _mode_validate_noise,
}

_EXPECTED_FILES = {
    "simulate": ["moments.tsv"],
    "analytic": ["analytic.tsv", "fits.tsv"],
    "compare": ["moments.tsv", "compare.tsv", "fits.tsv"],
    "validate-noise": ["correlator.tsv"],
}


def run(config: ExperimentConfig, out_dir) -> RunManifest:
    """Execute a config; write the manifest first, then the data files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    expected = list(_EXPECTED_FILES[config.mode])
    if config.mode == "simulate" and config.snapshot_stride > 0:
        expected.append("snapshots.tsv")
    if config.mode == "validate-noise" and config.dump_realization:
        expected.append("realization.tsv")
    notes = analytics.notes_for_run(config.regime)
    manifest = RunManifest(
        mode=config.mode, code_version=__version__,
        master_seed=config.master_seed, threads=config.threads,
        trajectory_seeds=config.trajectory_seeds(),
        output_files=expected, discrepancy_notes=notes,
        config_text=config.config_text,
    )
    manifest_path = out / "manifest.json"
    manifest.write(manifest_path)

    start = time.perf_counter()
    produced = _MODE_RUNNERS[config.mode](config, out)
    manifest.wall_clock_s = time.perf_counter() - start
    manifest.output_files = produced
    manifest.write(manifest_path)
    return manifest


def _verify_manifest(manifest_path: Path, threads: Optional[int]) -> int:
    """Re-run the manifest's config and byte-compare every data file."""
    manifest = RunManifest.load(manifest_path)
    base = manifest_path.parent
    config = parse_config(manifest.config_text)
    config = dataclasses.replace(
        config, master_seed=manifest.master_seed,
        threads=threads if threads is not None else config.threads,
    )
    with tempfile.TemporaryDirectory(prefix="qdiffusion-verify-") as tmp:
        run(config, tmp)
        mismatched = []
        for name in manifest.output_files:
            original = base / name
            fresh = Path(tmp) / name
            if not original.exists():
                mismatched.append(f"{name} (missing in original)")
                continue
            if original.read_bytes() != fresh.read_bytes():
                mismatched.append(name)
    if mismatched:
        print("verification FAILED for: " + ", ".join(mismatched), file=sys.stderr)
        return 4
    print(f"verification OK: {len(manifest.output_files)} file(s) reproduced bitwise")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdiffusion",
        description="Quantum diffusion in correlated Gaussian noise: "
                    "simulation, closed forms, validation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run a config in {mode} mode")
        p.add_argument("--config", required=True, help="path to key=value config")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override master_seed")
        p.add_argument("--threads", type=int, default=None,
                       help="override worker count")
    v = sub.add_parser("verify-manifest",
                       help="re-run a manifest and diff outputs bitwise")
    v.add_argument("--manifest", required=True, help="path to manifest.json")
    v.add_argument("--threads", type=int, default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "verify-manifest":
            return _verify_manifest(Path(args.manifest), args.threads)
        text = Path(args.config).read_text(encoding="utf-8")
        config = parse_config(text)
        if config.mode != args.command:
            raise ConfigError(
                f"config has mode = {config.mode}, but subcommand is {args.command}"
            )
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.threads is not None:
            overrides["threads"] = args.threads
        if overrides:
            config = dataclasses.replace(config, **overrides)
        out = args.out or config.output_dir or "qdiffusion-out"
        manifest = run(config, out)
        print(f"{config.mode}: wrote {', '.join(manifest.output_files)} to {out} "
              f"({manifest.wall_clock_s:.2f} s)")
        return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StabilityError as exc:
        loc = f" (trajectory {exc.trajectory}, step {exc.step})" \
            if exc.trajectory is not None else ""
        print(f"numerical abort: {exc}{loc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

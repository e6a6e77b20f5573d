"""Monte Carlo harness: instance generation, the ESPRIT -> LS -> PGD pipeline
and parameter sweeps over PSF width or SNR.

Every trial derives its own seed from ``(master_seed, trial_index)``, so
results do not depend on execution order or on the number of workers. The
same trial seeds are reused at every sweep point.
"""
from __future__ import annotations

import csv
import functools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .certificates import (amplitude_error_bound, f1_map, lower_frame_bound, theorem1_certificate,
                           theorem2_certificate)
from .errors import NumericalError
from .esprit import esprit, exact_subspace, ls_amplitudes, subspace_distance
from .metrics import PsfMetrics, matching_distance, matching_permutation, min_separation, psf_metrics, weighted_error
from .model import GroundTruth, Measurements, Psf, SamplingGrid, add_noise, synthesize, vandermonde
from .pgd import ParamVector, PgdOptions, pgd_run

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "TrialRecord",
    "Finding",
    "trial_seed",
    "gen_instance",
    "run_trial",
    "run_trials",
    "aggregate",
    "sweep",
    "SWEEP_COLUMNS",
]

AMPLITUDE_MODELS = ("unit-modulus", "complex-gaussian")
DEFAULT_SIGMAS = [round(0.05 + 0.025 * i, 3) for i in range(15)]
DEFAULT_SNRS = [float(5 * i) for i in range(9)]
SWEEP_COLUMNS = ("sweep_value", "trials", "failed", "md_esprit_max", "md_esprit_median", "md_pgd_max",
                 "md_pgd_median", "eta_final_median", "gamma_inf_median")
FINDING_COLUMNS = ("sweep_value", "trial", "seed", "check", "step", "measured", "bound")
_MAX_REJECTIONS = 10_000


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 1)."""


@dataclass
class ExperimentConfig:
    n: int = 15
    T: float = 1.0
    psf: dict = field(default_factory=lambda: {"family": "gaussian", "sigma": 0.15})
    r: int = 3
    L: int = 5
    delta_min: float = 0.15
    amplitude_model: str = "unit-modulus"
    snr_db: float | None = 25.0
    trials: int = 50
    seed: int = 0
    sweep_axis: str | None = None
    sweep_values: list[float] | None = None
    pgd: dict = field(default_factory=dict)
    out: str = "."

    def __post_init__(self):
        self.validate()

    def validate(self):
        try:
            SamplingGrid(self.n, self.T)
            self.psf_object()
            PgdOptions.from_dict(self.pgd)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.r < 1 or self.L < 1:
            raise ConfigError("r and L must be positive")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.amplitude_model not in AMPLITUDE_MODELS:
            raise ConfigError(f"amplitude_model must be one of {AMPLITUDE_MODELS}")
        if self.delta_min < 0:
            raise ConfigError("delta_min must be nonnegative")
        if self.delta_min * self.r >= self.T:
            raise ConfigError(f"infeasible separation: delta_min * r = {self.delta_min * self.r} >= T = {self.T}")
        if self.sweep_axis not in (None, "sigma", "snr"):
            raise ConfigError("sweep axis must be 'sigma' or 'snr'")
        if self.sweep_values is not None and not all(np.isfinite(v) for v in self.sweep_values):
            raise ConfigError("sweep values must be finite")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        sweep_spec = d.pop("sweep", None)
        if sweep_spec:
            d["sweep_axis"] = sweep_spec.get("axis")
            d["sweep_values"] = sweep_spec.get("values")
        if "noiseless" in d:
            if d.pop("noiseless"):
                d["snr_db"] = None
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sweep"] = {"axis": d.pop("sweep_axis"), "values": d.pop("sweep_values")}
        return d

    @property
    def grid(self) -> SamplingGrid:
        return SamplingGrid(self.n, self.T)

    def psf_object(self) -> Psf:
        return Psf.from_dict(self.psf)

    @property
    def snr(self) -> float:
        return np.inf if self.snr_db is None else float(self.snr_db)

    def resolved_sweep(self) -> tuple[str, list[float]]:
        if self.sweep_axis is None:
            raise ConfigError("config has no sweep axis")
        if self.sweep_values:
            return self.sweep_axis, [float(v) for v in self.sweep_values]
        return self.sweep_axis, list(DEFAULT_SIGMAS if self.sweep_axis == "sigma" else DEFAULT_SNRS)

    def at(self, axis: str, value: float) -> "ExperimentConfig":
        """Copy of this config with one sweep value applied."""
        if axis == "sigma":
            return replace(self, psf={"family": "gaussian", "sigma": value}, sweep_axis=None, sweep_values=None)
        return replace(self, snr_db=value, sweep_axis=None, sweep_values=None)


@dataclass
class Finding:
    sweep_value: float
    trial: int
    seed: int
    check: str
    step: int
    measured: float
    bound: float


@dataclass
class TrialRecord:
    trial: int
    seed: int
    failed: bool = False
    failure: str = ""
    md_esprit: float = np.nan
    md_pgd: float = np.nan
    eta_esprit: float = np.nan
    eta_final: float = np.nan
    pgd_iters: int = 0
    theorem1_applicable: bool = False
    theorem2_applicable: bool = False
    gamma_inf: float = np.nan
    dk_bound: float = np.nan
    subspace_dist: float = np.nan
    wall_time: float = 0.0
    findings: list[Finding] = field(default_factory=list)


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Deterministic 63-bit seed for one trial."""
    ss = np.random.SeedSequence([int(master_seed), int(trial_index)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@functools.lru_cache(maxsize=64)
def _cached_metrics(psf: Psf, grid: SamplingGrid) -> PsfMetrics:
    return psf_metrics(psf, grid)


def _draw_locations(rng, r, T, delta_min):
    for _ in range(_MAX_REJECTIONS):
        tau = rng.uniform(0, T, r)
        if min_separation(tau, T) >= delta_min:
            return tau
    raise ConfigError(f"could not place {r} spikes with separation >= {delta_min} after {_MAX_REJECTIONS} draws")


def _draw_amplitudes(rng, r, L, model):
    if model == "unit-modulus":
        return np.exp(2j * np.pi * rng.random((r, L)))
    return (rng.standard_normal((r, L)) + 1j * rng.standard_normal((r, L))) / np.sqrt(2)


def gen_instance(config: ExperimentConfig, trial_index: int) -> tuple[GroundTruth, Measurements]:
    seed = trial_seed(config.seed, trial_index)
    rng = np.random.default_rng(seed)
    tau = _draw_locations(rng, config.r, config.T, config.delta_min)
    A = _draw_amplitudes(rng, config.r, config.L, config.amplitude_model)
    truth = GroundTruth(tau, A, config.T)
    grid = config.grid
    clean = synthesize(truth, config.psf_object(), grid)
    if np.isposinf(config.snr):
        return truth, Measurements(clean.Y, grid, np.zeros_like(clean.Y))
    Y, Z = add_noise(clean.Y, config.snr, seed ^ 0x5DEECE66D)
    return truth, Measurements(Y, grid, Z)


def _contraction_findings(trace, cert, sweep_value, trial, seed):
    out = []
    eta = trace.eta
    if not (cert.applicable and eta[0] < cert.basin_radius):
        return out
    for k in range(eta.size - 1):
        if eta[k] < 1 and eta[k + 1] > f1_map(eta[k], cert) + 1e-9:
            out.append(Finding(sweep_value, trial, seed, "contraction", k, eta[k + 1], f1_map(eta[k], cert)))
    if eta[-1] > cert.gamma_inf + 1e-9:
        out.append(Finding(sweep_value, trial, seed, "limit_error", eta.size - 1, eta[-1], cert.gamma_inf))
    return out


def run_trial(config: ExperimentConfig, trial_index: int, sweep_value: float = np.nan) -> TrialRecord:
    """ESPRIT -> least squares -> PGD on one generated instance.

    Numerical failures are recorded on the returned record instead of raised.
    """
    start = time.perf_counter()
    seed = trial_seed(config.seed, trial_index)
    rec = TrialRecord(trial_index, seed)
    truth, meas = gen_instance(config, trial_index)
    psf, grid = config.psf_object(), config.grid
    metrics = _cached_metrics(psf, grid)
    T = config.T
    Z = meas.Z if meas.Z is not None else np.zeros_like(meas.Y)
    cert = theorem1_certificate(truth, metrics, float(np.linalg.norm(Z)), T)
    rec.theorem1_applicable = cert.applicable
    rec.gamma_inf = cert.gamma_inf
    Delta = min_separation(truth.tau, T)
    try:
        est = esprit(meas.Y, config.r, psf, grid)
        rec.md_esprit = matching_distance(est.tau_hat, truth.tau, T)
        A_hat = ls_amplitudes(est.tau_hat, meas.Y, psf, grid)
        rec.eta_esprit = weighted_error(A_hat, est.tau_hat, truth, metrics)

        U = exact_subspace(truth, psf, grid)
        rec.subspace_dist = subspace_distance(est.U_hat, U)
        cert2 = theorem2_certificate(truth, psf, metrics, grid, Z)
        rec.theorem2_applicable = cert2.applicable
        rec.dk_bound = cert2.dk_bound
        if rec.subspace_dist > rec.dk_bound:
            rec.findings.append(Finding(sweep_value, trial_index, seed, "davis_kahan", 0,
                                        rec.subspace_dist, rec.dk_bound))
        frame = lower_frame_bound(metrics, Delta, T)
        if frame > 0:
            s_min = np.linalg.svd(psf.spectrum(grid.frequencies)[:, None] * vandermonde(truth.tau, grid),
                                  compute_uv=False)[-1]
            if s_min**2 < frame:
                rec.findings.append(Finding(sweep_value, trial_index, seed, "frame_bound", 0, s_min**2, frame))
        bound = amplitude_error_bound(rec.md_esprit, metrics, Delta)
        if np.isfinite(bound):
            clean = meas.Y - Z
            A_clean = ls_amplitudes(est.tau_hat, clean, psf, grid)
            _, perm = matching_permutation(est.tau_hat, truth.tau, T)
            rel = np.linalg.norm(A_clean[perm] - truth.amplitudes) / np.linalg.norm(truth.amplitudes)
            if rel > bound:
                rec.findings.append(Finding(sweep_value, trial_index, seed, "amplitude_bound", 0, rel, bound))

        theta, trace = pgd_run(ParamVector(A_hat, est.tau_hat, T), meas, psf, grid,
                               PgdOptions.from_dict(config.pgd), truth=truth, metrics=metrics)
        rec.md_pgd = matching_distance(theta.tau, truth.tau, T)
        rec.eta_final = trace.eta[-1]
        rec.pgd_iters = trace.iterations
        rec.findings.extend(_contraction_findings(trace, cert, sweep_value, trial_index, seed))
    except NumericalError as exc:
        rec.failed = True
        rec.failure = f"{type(exc).__name__}: {exc}"
        log.debug("trial %d failed: %s", trial_index, rec.failure)
    rec.wall_time = time.perf_counter() - start
    return rec


def run_trials(config: ExperimentConfig, sweep_value: float = np.nan, workers: int = 1) -> list[TrialRecord]:
    indices = range(config.trials)
    if workers <= 1:
        return [run_trial(config, i, sweep_value) for i in indices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: run_trial(config, i, sweep_value), indices))


def aggregate(sweep_value: float, records: list[TrialRecord]) -> dict:
    ok = [rec for rec in records if not rec.failed]

    def stat(fn, name):
        vals = np.array([getattr(rec, name) for rec in ok], dtype=float)
        vals = vals[np.isfinite(vals)]
        return float(fn(vals)) if vals.size else float("nan")

    return {
        "sweep_value": float(sweep_value),
        "trials": len(records),
        "failed": len(records) - len(ok),
        "md_esprit_max": stat(np.max, "md_esprit"),
        "md_esprit_median": stat(np.median, "md_esprit"),
        "md_pgd_max": stat(np.max, "md_pgd"),
        "md_pgd_median": stat(np.median, "md_pgd"),
        "eta_final_median": stat(np.median, "eta_final"),
        "gamma_inf_median": stat(np.median, "gamma_inf"),
    }


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])


def write_findings_csv(findings: list[Finding], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(FINDING_COLUMNS)
        for f in findings:
            writer.writerow([_fmt(f.sweep_value), f.trial, f.seed, f.check, f.step, _fmt(f.measured), _fmt(f.bound)])


def sweep(config: ExperimentConfig, out_dir=None, workers: int = 1, plot: bool = True):
    """Run ``config.trials`` trials per sweep value and aggregate.

    Writes ``sweep.csv``, ``findings.csv`` and (with ``plot``) ``sweep.svg``
    into ``out_dir`` when given. Returns ``(rows, records_by_value)``.
    """
    axis, values = config.resolved_sweep()
    rows, per_value = [], {}
    for value in values:
        records = run_trials(config.at(axis, value), value, workers)
        per_value[value] = records
        rows.append(aggregate(value, records))
        log.info("%s=%g: md_esprit_max=%.3g md_pgd_max=%.3g failed=%d", axis, value,
                 rows[-1]["md_esprit_max"], rows[-1]["md_pgd_max"], rows[-1]["failed"])
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_sweep_csv(rows, out / "sweep.csv")
        write_findings_csv([f for recs in per_value.values() for rec in recs for f in rec.findings],
                           out / "findings.csv")
        if plot:
            from .report import plot_sweep

            plot_sweep(rows, axis, out / "sweep.svg")
    return rows, per_value

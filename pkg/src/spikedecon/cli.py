"""Command line interface.

Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import ConfigError, ExperimentConfig, _cached_metrics, gen_instance, sweep
from .certificates import theorem1_certificate, theorem2_certificate
from .errors import NumericalError
from .esprit import esprit, ls_amplitudes
from .metrics import PsfMetrics, matching_distance, weighted_error
from .pgd import ParamVector, PgdOptions, pgd_run

log = logging.getLogger("spikedecon")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, instance=True):
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--trials", type=int, help="trials per sweep point (overrides config)")
    p.add_argument("--json", action="store_true", help="machine-readable stdout")
    p.add_argument("-v", "--verbose", action="store_true")
    if instance:
        p.add_argument("--instance", help="directory with measurements.json (and optionally truth.json)")
        p.add_argument("--trial", type=int, default=0, help="trial index of the generated instance")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spikedecon", description="Spike deconvolution with ESPRIT and preconditioned GD.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("synthesize", help="generate an instance and write truth/measurements"))
    _common(sub.add_parser("solve", help="ESPRIT -> least squares -> PGD on one instance"))
    _common(sub.add_parser("esprit", help="ESPRIT location estimates"))
    p = sub.add_parser("pgd", help="refine a supplied initial point with PGD")
    _common(p)
    p.add_argument("--theta0", required=True, help="JSON file with 'tau' and 'amplitudes'")
    _common(sub.add_parser("certify", help="print PSF metrics and the PGD and ESPRIT certificates"))
    p = sub.add_parser("sweep", help="Monte Carlo sweep over sigma or SNR")
    _common(p, instance=False)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _config(args) -> ExperimentConfig:
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if overrides:
        config = ExperimentConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _instance(args, config):
    """Truth (possibly None) and measurements, from --instance or generated from the config."""
    if getattr(args, "instance", None):
        root = Path(args.instance)
        try:
            with open(root / "measurements.json") as fh:
                meas = io.measurements_from_dict(json.load(fh))
            truth = None
            if (root / "truth.json").exists():
                with open(root / "truth.json") as fh:
                    truth = io.truth_from_dict(json.load(fh))
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load instance from {root}: {exc}") from exc
        if meas.grid != config.grid:
            config = ExperimentConfig.from_dict({**config.to_dict(), "n": meas.grid.n, "T": meas.grid.T})
        return config, truth, meas
    truth, meas = gen_instance(config, args.trial)
    return config, truth, meas


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, payload: dict, text: str | None = None):
    if args.json:
        print(io.dump_json(payload, indent=2))
    else:
        print(text if text is not None else io.dump_json(payload, indent=2))


def cmd_synthesize(args):
    config = _config(args)
    _, truth, meas = _instance(args, config)
    out = _out_dir(args)
    with open(out / "truth.json", "w") as fh:
        io.dump_json(io.truth_to_dict(truth, meas.grid), fh, indent=2)
    with open(out / "measurements.json", "w") as fh:
        io.dump_json(io.measurements_to_dict(meas), fh)
    io.write_measurements_csv(meas, out / "measurements.csv")
    _emit(args, {"truth": str(out / "truth.json"), "measurements": str(out / "measurements.json"),
                 "csv": str(out / "measurements.csv"), "N": meas.grid.N, "L": meas.L, "r": truth.r},
          f"wrote {out / 'truth.json'}, {out / 'measurements.json'}, {out / 'measurements.csv'}")


def _refine(args, config, truth, meas, theta0):
    psf, grid = config.psf_object(), meas.grid
    metrics = _cached_metrics(psf, grid)
    theta, trace = pgd_run(theta0, meas, psf, grid, PgdOptions.from_dict(config.pgd), truth=truth, metrics=metrics)
    out = _out_dir(args)
    trace_path = out / "trace.csv"
    trace.to_csv(trace_path)
    payload = {
        "tau_hat": theta.tau,
        "A_hat": io.encode_complex(theta.amplitudes),
        "md": None if truth is None else matching_distance(theta.tau, truth.tau, grid.T),
        "eta": None if truth is None else weighted_error(theta.amplitudes, theta.tau, truth, metrics),
        "trace_path": str(trace_path),
        "iterations": trace.iterations,
        "stop_reason": trace.stop_reason,
    }
    return payload


def cmd_solve(args):
    config = _config(args)
    config, truth, meas = _instance(args, config)
    psf, grid = config.psf_object(), meas.grid
    est = esprit(meas.Y, config.r, psf, grid)
    A_hat = ls_amplitudes(est.tau_hat, meas.Y, psf, grid)
    payload = _refine(args, config, truth, meas, ParamVector(A_hat, est.tau_hat, grid.T))
    payload["tau_esprit"] = est.tau_hat
    if truth is not None:
        payload["md_esprit"] = matching_distance(est.tau_hat, truth.tau, grid.T)
    text = "\n".join(f"{k}: {v}" for k, v in payload.items() if k != "A_hat")
    _emit(args, payload, text)


def cmd_esprit(args):
    config = _config(args)
    config, truth, meas = _instance(args, config)
    est = esprit(meas.Y, config.r, config.psf_object(), meas.grid)
    payload = est.to_dict()
    if truth is not None:
        payload["md"] = matching_distance(est.tau_hat, truth.tau, meas.grid.T)
    _emit(args, payload)


def cmd_pgd(args):
    config = _config(args)
    config, truth, meas = _instance(args, config)
    try:
        with open(args.theta0) as fh:
            spec = json.load(fh)
        theta0 = ParamVector(io.decode_complex(spec["amplitudes"]), np.asarray(spec["tau"], float), meas.grid.T)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read theta0 from {args.theta0}: {exc}") from exc
    payload = _refine(args, config, truth, meas, theta0)
    _emit(args, payload)


def _metrics_table(metrics: PsfMetrics, grid) -> str:
    lines = [f"{'quantity':<10} {'value':>22}"]
    for name in PsfMetrics.FIELDS:
        lines.append(f"{name:<10} {getattr(metrics, name):>22.12g}")
    lines.append(f"{'T*E_g':<10} {grid.T * metrics.E_g:>22.12g}")
    lines.append(f"{'N':<10} {grid.N:>22d}")
    return "\n".join(lines)


def cmd_certify(args):
    config = _config(args)
    config, truth, meas = _instance(args, config)
    if truth is None:
        raise ConfigError("certify needs the ground truth (truth.json or a generated instance)")
    psf, grid = config.psf_object(), meas.grid
    metrics = _cached_metrics(psf, grid)
    Z = meas.Z if meas.Z is not None else np.zeros_like(meas.Y)
    c1 = theorem1_certificate(truth, metrics, float(np.linalg.norm(Z)), grid.T)
    c2 = theorem2_certificate(truth, psf, metrics, grid, Z)
    payload = {
        "psf_metrics": metrics.to_dict(),
        "T_E_g": grid.T * metrics.E_g,
        "N": grid.N,
        "theorem1": c1.to_dict(),
        "theorem2": c2.to_dict(),
    }
    if args.json:
        _emit(args, payload)
    else:
        print(_metrics_table(metrics, grid))
        print(io.dump_json({"theorem1": c1.to_dict(), "theorem2": c2.to_dict()}, indent=2))


def cmd_sweep(args):
    config = _config(args)
    out = _out_dir(args) if args.out else Path(config.out)
    rows, per_value = sweep(config, out, workers=max(1, args.workers))
    n_findings = sum(len(rec.findings) for recs in per_value.values() for rec in recs)
    payload = {"rows": rows, "csv": str(out / "sweep.csv"), "svg": str(out / "sweep.svg"),
               "findings": str(out / "findings.csv"), "n_findings": n_findings}
    if args.json:
        _emit(args, payload)
    else:
        for row in rows:
            print("  ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
        print(f"wrote {payload['csv']}, {payload['svg']}, {payload['findings']} ({n_findings} findings)")


COMMANDS = {
    "synthesize": cmd_synthesize,
    "solve": cmd_solve,
    "esprit": cmd_esprit,
    "pgd": cmd_pgd,
    "certify": cmd_certify,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line experiment runner.

Usage::

    kinetic-flows <command> --config path.json [--seed S] [--threads K] [--out DIR]

Writes ``report.json``, ``series.csv``, ``manifest.json`` and ``figure.png``
into the output directory.  Exit status: 0 on pass, 2 when a threshold
fails, 1 on a usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, plotting
from .config import COMMANDS, ExperimentConfig, merged
from .errors import ConfigError, KineticFlowsError, ThresholdFailure
from .euler import export_trajectory, initial_state, simulate
from .experiments import (
    ParticleRateSpec,
    conservation_check,
    particle_band,
    rate_particles,
    residual_ladder,
    validate_kernels,
    variance_oracle_from_samples,
)
from .flow import (
    PartitionSchedule,
    fit_rate,
    refinement_rate,
    stability_experiment,
    time_lipschitz_check,
    translation_equivariance,
)
from .weakform import synthetic_budget, weak_residual

log = logging.getLogger("kinetic_flows")

EXIT_OK, EXIT_USAGE, EXIT_THRESHOLD = 0, 1, 2


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


class _Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def json(self, name: str, payload: dict):
        self.path(name).write_text(json.dumps(_clean(payload), indent=2) + "\n")

    def series(self, header: tuple[str, str], rows):
        with self.path("series.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for a, b in rows:
                w.writerow([repr(float(a)), repr(float(b))])


# -- commands --------------------------------------------------------------------------


def _band_time(cfg: ExperimentConfig):
    return (-1.35, -0.65) if cfg.model.variant == "Synthetic1D" else (-1.4, -0.6)


def _cmd_simulate(cfg, out: _Outputs, base_dir):
    law = cfg.initial_law(base_dir)
    state0 = initial_state(law, cfg.N, cfg.seed)
    schedule = PartitionSchedule(0.0, cfg.T, cfg.n)
    traj = simulate(state0, schedule, cfg.model, cfg.seed, threads=cfg.threads)
    export_trajectory(traj, out.dir / "trajectory", schedule)
    out.files.append("trajectory/trajectory.json")
    means = [s.particles.mean(axis=0).tolist() for s in traj.states]
    second = [float(np.mean(np.sum(s.particles**2, axis=1))) for s in traj.states]
    report = {
        "experiment": "simulate",
        "model": cfg.model.to_dict(),
        "params": {"N": cfg.N, "n": cfg.n, "T": cfg.T, "seed": cfg.seed},
        "times": traj.times,
        "trajectory_length": len(traj),
        "terminal_equals_initial": bool(np.array_equal(traj.terminal.particles, state0.particles)),
        "mean": means,
        "second_moment": second,
        "step_reports": [r.to_dict() for r in traj.reports],
        "pass": True,
    }
    var0 = cfg.initial_variance()
    if cfg.model.variant == "Synthetic1D" and cfg.model.drift == (0.0, 0.0) and var0 is not None:
        oracle = variance_oracle_from_samples(traj.terminal.particles, cfg.model, var0, cfg.T, cfg.seed)
        report["oracle"] = oracle
        report["pass"] = oracle["pass"]
    out.series(("time", "value"), zip(traj.times, second))
    plotting.series_figure(traj.times, {"mean |x|^2": second}, out.path("figure.png"), ylabel="second moment")
    return report


def _cmd_rate_time(cfg, out, base_dir):
    if cfg.h_list is not None:
        try:
            rep = time_lipschitz_check(cfg.model, cfg.initial_law(base_dir), cfg.T, cfg.h_list, cfg.N, cfg.seed,
                                       threads=cfg.threads, band=(0.7, 1.3))
        except ValueError as exc:
            raise ConfigError(f"field 'h_list': {exc}") from exc
        out.series(("resolution", "error"), rep.pairs)
        plotting.rate_figure(rep.pairs, rep.slope, rep.intercept, out.path("figure.png"), "time increment h",
                             "W1(law at t+h, law at t)")
        return rep.to_dict()
    if cfg.n_list is None:
        raise ConfigError("one of the fields 'n_list' or 'h_list' is required for rate-time")
    rep = refinement_rate(cfg.model, cfg.initial_law(base_dir), cfg.T, cfg.n_list, cfg.N, cfg.replicas, cfg.seed,
                          threads=cfg.threads, band=_band_time(cfg))
    out.series(("resolution", "error"), rep.pairs)
    plotting.rate_figure(rep.pairs, rep.slope, rep.intercept, out.path("figure.png"), "steps n", "W1 error")
    return rep.to_dict()


def _cmd_rate_particles(cfg, out, base_dir):
    if cfg.N_list is None:
        raise ConfigError("field 'N_list' is required for rate-particles")
    ref_N = cfg.reference_N if cfg.reference_N is not None else 4 * cfg.N_list[-1]
    try:
        spec = ParticleRateSpec(cfg.N_list, ref_N, cfg.test_functions()[0])
    except ValueError as exc:
        raise ConfigError(f"field 'reference_N'/'phi': {exc}") from exc
    rep = rate_particles(spec, cfg.model, cfg.T, cfg.n, cfg.replicas, cfg.seed, cfg.initial_law(base_dir),
                         threads=cfg.threads, band=particle_band(cfg.model.dim))
    out.series(("resolution", "error"), rep.pairs)
    plotting.rate_figure(rep.pairs, rep.slope, rep.intercept, out.path("figure.png"), "particles N", "observable error")
    return rep.to_dict()


def _cmd_weak_residual(cfg, out, base_dir):
    law = cfg.initial_law(base_dir)
    phis = cfg.test_functions()
    if cfg.N_list is not None or cfg.n_list is not None:
        if cfg.N_list is None or cfg.n_list is None:
            raise ConfigError("fields 'N_list' and 'n_list' must be given together for a residual ladder")
        lad = residual_ladder(cfg.model, law, cfg.T, cfg.N_list, cfg.n_list, cfg.replicas, cfg.seed, phis,
                              max_pairs=cfg.max_pairs, n_quad=cfg.n_quad, quad_tol=cfg.quad_tol, threads=cfg.threads)
        pairs = list(zip(cfg.N_list, lad["mean_residual"]))
        out.series(("resolution", "error"), pairs)
        fit = fit_rate(cfg.N_list, lad["mean_residual"])
        plotting.rate_figure(pairs, fit.slope, fit.intercept, out.path("figure.png"), "particles N (with n)",
                             "max weak residual")
        return {"experiment": "weak_residual_ladder", "model": cfg.model.to_dict(),
                "phi": [p.name for p in phis], **lad}
    state0 = initial_state(law, cfg.N, cfg.seed)
    traj = simulate(state0, PartitionSchedule(0.0, cfg.T, cfg.n), cfg.model, cfg.seed, threads=cfg.threads)
    budget = synthetic_budget(cfg.N, cfg.n) if cfg.model.variant == "Synthetic1D" else None
    rep = weak_residual(traj, cfg.model, phis, budget=budget, max_pairs=cfg.max_pairs, n_quad=cfg.n_quad,
                        seed=cfg.seed, quad_tol=cfg.quad_tol)
    worst = [max(abs(s[k]) for s in rep.residual_series.values()) for k in range(len(rep.times))]
    out.series(("time", "value"), zip(rep.times, worst))
    plotting.series_figure(rep.times, rep.residual_series, out.path("figure.png"), ylabel="weak residual")
    d = rep.to_dict()
    d["experiment"] = "weak_residual"
    d["model"] = cfg.model.to_dict()
    if d["pass"] is None:
        d["pass"] = True
    return d


def _cmd_conserve(cfg, out, base_dir):
    res = conservation_check(cfg.model, cfg.initial_law(base_dir), cfg.T, cfg.n, cfg.N, cfg.seed, threads=cfg.threads)
    out.series(("time", "value"), [(0.0, res["initial_energy"]), (cfg.T, res["terminal_energy"])])
    names = list(res["checks"])
    z = [abs(c["change"]) / c["sigma"] if c["sigma"] > 0 else 0.0 for c in res["checks"].values()]
    plotting.deviation_figure(names, z, res["n_sigma"], out.path("figure.png"), title="|change| / sigma")
    return {"experiment": "conserve", "model": cfg.model.to_dict(),
            "params": {"N": cfg.N, "n": cfg.n, "T": cfg.T, "seed": cfg.seed}, **res}


def _cmd_stability(cfg, out, base_dir):
    law = cfg.initial_law(base_dir)
    rho = initial_state(law, cfg.N, cfg.seed).measure
    shift = np.zeros(cfg.model.dim)
    if isinstance(cfg.shift, tuple):
        shift[:] = cfg.shift
    else:
        shift[0] = cfg.shift
    xi = rho.shifted(shift)
    res = stability_experiment(cfg.model, rho, xi, cfg.T, cfg.n, None, cfg.seed, threads=cfg.threads)
    report = {"experiment": "stability", "model": cfg.model.to_dict(),
              "params": {"N": cfg.N, "n": cfg.n, "T": cfg.T, "seed": cfg.seed, "shift": shift.tolist()},
              **res.to_dict()}
    passed = res.passed
    if cfg.model.variant == "Boltzmann3D" and cfg.model.a == 0:
        # Truncation breaks the shift symmetry once speeds reach gamma_cap.
        reach = float(np.max(np.linalg.norm(rho.points, axis=1))) + float(np.linalg.norm(shift))
        if reach <= cfg.model.gamma_cap:
            tr = translation_equivariance(cfg.model, rho, shift, cfg.T, cfg.n, cfg.replicas, cfg.seed,
                                          threads=cfg.threads)
            passed = passed and tr["pass"]
        else:
            tr = {"skipped": f"max speed {reach:.3g} exceeds gamma_cap {cfg.model.gamma_cap:g}"}
        report["translation"] = tr
    report["pass"] = passed
    out.series(("time", "value"), [(0.0, res.initial_distance), (cfg.T, res.lhs)])
    plotting.series_figure([0.0, cfg.T], {"W1": [res.initial_distance, res.lhs]}, out.path("figure.png"),
                           ylabel="W1 between the two systems")
    return report


def _cmd_validate_kernels(cfg, out, base_dir):
    rep = validate_kernels(cfg.model, cfg.samples, cfg.seed, raise_on_fail=False)
    rows = [(k, v["worst_deviation"]) for k, v in rep["identities"].items() if "worst_deviation" in v]
    out.series(("resolution", "error"), [(cfg.samples, max((v for _, v in rows), default=0.0))])
    plotting.deviation_figure([k for k, _ in rows], [v for _, v in rows], 1e-10, out.path("figure.png"),
                              title=f"{cfg.model.variant} ({cfg.model.convention})")
    rep["experiment"] = "validate_kernels"
    return rep


_COMMANDS = {
    "simulate": _cmd_simulate,
    "rate-time": _cmd_rate_time,
    "rate-particles": _cmd_rate_particles,
    "weak-residual": _cmd_weak_residual,
    "conserve": _cmd_conserve,
    "stability": _cmd_stability,
    "validate-kernels": _cmd_validate_kernels,
}


def run(config: ExperimentConfig, out_dir=None, base_dir=None) -> int:
    """Run one experiment, write its files and return the exit code.

    A failed threshold raises :class:`ThresholdFailure` after the report has
    been written.
    """
    out = _Outputs(Path(out_dir if out_dir is not None else config.output_dir))
    report = _COMMANDS[config.command](config, out, base_dir)
    report = {"command": config.command, "seed": config.seed, **report}
    out.json("report.json", report)
    manifest = {
        "command": config.command,
        "created": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "numpy": np.__version__,
        "config": config.to_dict(),
        "files": sorted(set(out.files + ["report.json", "manifest.json"])),
    }
    out.json("manifest.json", manifest)
    if report.get("pass") is False:
        raise ThresholdFailure(config.command, _failure_detail(report))
    return EXIT_OK


def _failure_detail(report: dict) -> str:
    if "failed" in report:
        return "violated identities: " + ", ".join(report["failed"])
    if "threshold" in report and report.get("threshold"):
        return f"slope {report.get('slope'):.4g} outside {report['threshold']}"
    if "checks" in report:
        return "failed: " + ", ".join(k for k, c in report["checks"].items() if not c["pass"])
    return "threshold not met"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kinetic-flows", description="Run a particle-scheme experiment from a JSON configuration.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="path to the JSON configuration")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config, args.command)
        cfg = merged(cfg, seed=args.seed, threads=args.threads, output_dir=args.out)
        return run(cfg, base_dir=Path(args.config).resolve().parent)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ThresholdFailure as exc:
        print(f"threshold failure: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD
    except KineticFlowsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

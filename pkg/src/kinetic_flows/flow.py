"""Partitions, rate fitting and the flow-level experiments.

Every experiment is a deterministic function of its inputs and seed.  Monte
Carlo laws are compared through the W1 distance of terminal empirical
measures; in dimension > 1 the comparison uses the first ``cap`` particles of
each system (a coupled subsample, particles being exchangeable).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .euler import ParticleSystemState, initial_state, particle_step, simulate
from .kernels import ModelSpec, increment_bound, lipschitz_budget, mu_mass, rate_cap
from .measures import DEFAULT_ASSIGNMENT_CAP, EmpiricalMeasure, w1, w1_1d
from .rng import derive_seed


@dataclass(frozen=True)
class PartitionSchedule:
    """Uniform grid s = s_0 < ... < s_n = t."""

    s: float
    t: float
    n: int = 1

    def __post_init__(self):
        if not (math.isfinite(self.s) and math.isfinite(self.t)):
            raise ValueError("schedule endpoints must be finite")
        if self.t < self.s:
            raise ValueError(f"t={self.t} < s={self.s}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "n", int(self.n))

    @property
    def mesh(self) -> float:
        return (self.t - self.s) / self.n

    @property
    def nodes(self) -> np.ndarray:
        return self.s + self.mesh * np.arange(self.n + 1)

    def split(self, k: int) -> tuple["PartitionSchedule", "PartitionSchedule"]:
        """The two halves of the grid at node ``k``."""
        u = self.s + k * self.mesh
        return PartitionSchedule(self.s, u, k), PartitionSchedule(u, self.t, self.n - k)


# -- rate reports ------------------------------------------------------------------


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float


def fit_rate(resolutions, errors) -> LogLogFit:
    """Least-squares line through (log resolution, log error)."""
    x = np.log(np.asarray(resolutions, dtype=np.float64))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(np.asarray(errors, dtype=np.float64))
    if x.size < 2:
        raise ValueError("need at least two points to fit a rate")
    if not np.all(np.isfinite(y)):
        raise ValueError("errors must be positive to fit a log-log slope")
    res = stats.linregress(x, y)
    stderr = float(res.stderr) if x.size > 2 else float("nan")
    return LogLogFit(float(res.slope), float(res.intercept), float(res.rvalue**2), stderr)


@dataclass
class RateReport:
    experiment: str
    pairs: list[tuple[float, float]]
    slope: float
    intercept: float
    r_squared: float
    slope_stderr: float = float("nan")
    model: ModelSpec | None = None
    params: dict = field(default_factory=dict)
    threshold: dict | None = None
    passed: bool | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        res = [p[0] for p in self.pairs]
        diffs = np.diff(res)
        if len(res) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("resolutions must be strictly monotone")
        if any(p[1] < 0 for p in self.pairs):
            raise ValueError("errors must be nonnegative")

    @classmethod
    def from_pairs(cls, experiment, resolutions, errors, **kw) -> "RateReport":
        if len(resolutions) < 2:
            fit = LogLogFit(*(float("nan"),) * 4)  # nothing to fit; errors are still reported
        else:
            fit = fit_rate(resolutions, errors)
        pairs = [(float(r), float(e)) for r, e in zip(resolutions, errors)]
        return cls(experiment, pairs, fit.slope, fit.intercept, fit.r_squared, fit.slope_stderr, **kw)

    def judge(self, lo: float, hi: float) -> "RateReport":
        self.threshold = {"slope_min": lo, "slope_max": hi}
        self.passed = bool(lo <= self.slope <= hi)
        return self

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "model": None if self.model is None else self.model.to_dict(),
            "params": self.params,
            "pairs": [list(p) for p in self.pairs],
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "slope_stderr": self.slope_stderr,
            "pass": self.passed,
            "threshold": self.threshold,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# -- helpers -----------------------------------------------------------------------


def compare(mu, nu, cap: int = DEFAULT_ASSIGNMENT_CAP) -> float:
    """W1 between two equal-size particle clouds, subsampled to ``cap`` when d > 1."""
    a = getattr(mu, "particles", getattr(mu, "points", mu))
    b = getattr(nu, "particles", getattr(nu, "points", nu))
    a = np.asarray(a).reshape(len(a), -1)
    b = np.asarray(b).reshape(len(b), -1)
    if a.shape[1] == 1:
        return w1_1d(a, b)
    return w1(a[:cap], b[:cap], cap=cap)


def terminal(model: ModelSpec, rho0, N, s: float, T: float, n: int, seed: int, threads: int = 1,
             init_seed: int | None = None) -> ParticleSystemState:
    """Terminal state after ``n`` steps over [s, s + T] from an initial draw of ``rho0``."""
    state0 = initial_state(rho0, N, seed if init_seed is None else init_seed, clock=s)
    return simulate(state0, PartitionSchedule(s, s + T, n), model, seed, threads=threads).terminal


def replica_seed(seed: int, *tags) -> int:
    return derive_seed(seed, *tags)


def _moment_normalizer(rho0, N, seed) -> float:
    pts = initial_state(rho0, N, seed).particles
    return 1.0 + float(np.mean(np.sqrt(np.sum(pts * pts, axis=1))))


# -- experiments ----------------------------------------------------------------------


def refinement_rate(model: ModelSpec, rho0, T: float, n_list, N: int, replicas: int, seed: int,
                    coupled: bool = True, threads: int = 1, cap: int = DEFAULT_ASSIGNMENT_CAP,
                    band: tuple[float, float] | None = None) -> RateReport:
    """Error of the n-step scheme against a 2*max(n)-step reference, fitted against n.

    With ``coupled`` (the default) every run of one replica uses the same
    seed, so all resolutions share initial data and event marks and the error
    isolates the discretization.  Without it each run draws fresh randomness
    and the error includes the sampling floor.
    """
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise ValueError("n_list must be strictly increasing positive integers")
    if replicas < 2:
        raise ValueError("replicas must be >= 2")
    n_ref = 2 * n_list[-1]
    per_replica = []
    for r in range(replicas):
        base = replica_seed(seed, "refinement", r)
        ref = terminal(model, rho0, N, 0.0, T, n_ref, base, threads)
        row = []
        for n in n_list:
            run_seed = base if coupled else replica_seed(base, n)
            row.append(compare(terminal(model, rho0, N, 0.0, T, n, run_seed, threads), ref, cap))
        per_replica.append(row)
    errs = np.mean(per_replica, axis=0)
    norm = _moment_normalizer(rho0, N, replica_seed(seed, "refinement", 0))
    report = RateReport.from_pairs(
        "refinement_rate", n_list, errs, model=model,
        params={"T": T, "N": N, "replicas": replicas, "seed": seed, "reference_n": n_ref, "coupled": coupled},
        extra={"per_replica": per_replica, "normalized_errors": list(errs / norm), "normalizer": norm},
    )
    return report.judge(*band) if band else report


def sampling_floor(model: ModelSpec, rho0, s: float, dt: float, n: int, N: int, seed: int, pairs: int = 4,
                   threads: int = 1, cap: int = DEFAULT_ASSIGNMENT_CAP) -> float:
    """Mean W1 between terminal laws of two independent, identically configured runs."""
    vals = []
    for k in range(pairs):
        a = terminal(model, rho0, N, s, dt, n, replica_seed(seed, "floor", k, 0), threads)
        b = terminal(model, rho0, N, s, dt, n, replica_seed(seed, "floor", k, 1), threads)
        vals.append(compare(a, b, cap))
    return float(np.mean(vals))


def stationarity_check(model: ModelSpec, rho0, s: float, dt: float, n: int, N: int, seed: int,
                       independent: bool = True, replicas: int = 4, threads: int = 1,
                       cap: int = DEFAULT_ASSIGNMENT_CAP) -> float:
    """Mean W1 between terminal laws of runs over [s, s + dt] and [0, dt].

    With ``independent`` the two runs use unrelated seeds, so the value is
    directly comparable to :func:`sampling_floor`; otherwise both use ``seed``.
    """
    if s < 0 or not dt > 0:
        raise ValueError("need s >= 0 and dt > 0")
    vals = []
    for k in range(replicas if independent else 1):
        seed_a = replica_seed(seed, "stationarity", k, 0) if independent else seed
        seed_b = replica_seed(seed, "stationarity", k, 1) if independent else seed
        a = terminal(model, rho0, N, s, dt, n, seed_a, threads)
        b = terminal(model, rho0, N, 0.0, dt, n, seed_b, threads)
        vals.append(compare(a, b, cap))
    return float(np.mean(vals))


def step_rate_parameters(model: ModelSpec, s: float) -> dict:
    """Candidate-rate parameters of a step starting at ``s`` (time-homogeneous)."""
    return {"mu_mass": mu_mass(model), "rate_cap": rate_cap(model)}


@dataclass(frozen=True)
class StabilityResult:
    lhs: float
    rhs: float
    initial_distance: float
    envelope: float
    floor: float
    L_total: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "initial_distance": self.initial_distance,
                "envelope": self.envelope, "floor": self.floor, "L_total": self.L_total, "pass": self.passed}


def stability_experiment(model: ModelSpec, rho, xi, T: float, n: int, N: int | None, seed: int,
                         floor_pairs: int = 4, threads: int = 1, cap: int = DEFAULT_ASSIGNMENT_CAP) -> StabilityResult:
    """Terminal W1 from two initial laws against the exponential stability envelope.

    Both systems are driven by the same seed (common random numbers); the
    sampling floor is the mean W1 of two independent runs from ``rho``.
    """
    rho = rho if isinstance(rho, EmpiricalMeasure) else EmpiricalMeasure(rho)
    xi = xi if isinstance(xi, EmpiricalMeasure) else EmpiricalMeasure(xi)
    if rho.dim != xi.dim or rho.size != xi.size:
        raise ValueError("rho and xi must share dimension and size")
    a = terminal(model, rho, N, 0.0, T, n, seed, threads)
    b = terminal(model, xi, N, 0.0, T, n, seed, threads)
    lhs = compare(a, b, cap)
    initial = compare(initial_state(rho, N, seed), initial_state(xi, N, seed), cap)
    L = lipschitz_budget(model).L_total
    floor = sampling_floor(model, rho, 0.0, T, n, N if N is not None else rho.size, seed, floor_pairs, threads, cap)
    with np.errstate(over="ignore"):
        envelope = math.exp(L * T) if L * T < 700 else math.inf
    rhs = envelope * initial + floor if initial > 0 else floor
    return StabilityResult(lhs, rhs, initial, envelope, floor, L)


def translation_equivariance(model: ModelSpec, rho, shift, T: float, n: int, replicas: int, seed: int,
                             threads: int = 1, cap: int = DEFAULT_ASSIGNMENT_CAP) -> dict:
    """Coupled runs from rho and rho + shift; W1 of the terminal laws should equal |shift|."""
    rho = rho if isinstance(rho, EmpiricalMeasure) else EmpiricalMeasure(rho)
    shift = np.asarray(shift, dtype=np.float64)
    vals = []
    for r in range(replicas):
        s = replica_seed(seed, "translation", r)
        a = terminal(model, rho, None, 0.0, T, n, s, threads)
        b = terminal(model, rho.shifted(shift), None, 0.0, T, n, s, threads)
        vals.append(compare(a, b, cap))
    vals = np.array(vals)
    target = float(np.linalg.norm(shift))
    mean = float(vals.mean())
    sigma = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0
    tol = 3.0 * sigma + 1e-9 * max(1.0, target)  # rounding allowance for exactly coupled runs
    return {"lhs": mean, "target": target, "sigma": sigma, "per_replica": vals.tolist(),
            "pass": bool(abs(mean - target) <= tol)}


def time_lipschitz_check(model: ModelSpec, rho0, t: float, h_list, N: int, seed: int, n: int | None = None,
                         threads: int = 1, cap: int = DEFAULT_ASSIGNMENT_CAP,
                         band: tuple[float, float] | None = None) -> RateReport:
    """W1 between the law at t and at t + h (one extra step of size h, common randomness)."""
    h_list = [float(h) for h in h_list]
    if any(h <= 0 for h in h_list) or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise ValueError("h_list must be positive and strictly decreasing")
    if n is None:
        n = max(1, int(math.ceil(t / 0.05)))
    state0 = initial_state(rho0, N, seed)
    state_t = simulate(state0, PartitionSchedule(0.0, t, n), model, seed, threads=threads).terminal
    errs = []
    for h in h_list:
        later, _ = particle_step(state_t, h, model, seed, threads=threads)
        errs.append(compare(state_t, later, cap))
    moment1 = float(np.mean(np.sqrt(np.sum(state0.particles**2, axis=1))))
    C = increment_bound(model, moment1)
    within = [e <= 2.0 * C * h for e, h in zip(errs, h_list)]
    report = RateReport.from_pairs(
        "time_lipschitz", h_list, errs, model=model,
        params={"t": t, "N": N, "n": n, "seed": seed},
        extra={"increment_constant": C, "bound_ok": within},
    )
    if band:
        report.judge(*band)
        report.passed = bool(report.passed and all(within))
    return report

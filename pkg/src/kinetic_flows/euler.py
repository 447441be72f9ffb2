"""Frozen-state Euler steps for the jump equation and its N-particle system.

Each particle owns a Poisson clock of intensity ``mu_mass * rate_cap``.  The
candidate events of particle ``i`` and all their marks (gap to the next event,
angles, thinning variable, partner) are a pure function of
``(seed, label_i, event ordinal)``; a step of size ``dt`` consumes exactly the
events whose time falls in ``[clock, clock + dt)``.  Within a step every
drift, rate and jump is evaluated at the step-start state.

Because the event sequence of a particle does not depend on the step size,
runs with different partitions of the same interval share their randomness,
and composing two calls to :func:`simulate` reproduces a single call bit for
bit.
"""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import rng as crng
from .errors import DimensionMismatch, NegativeDuration
from .kernels import (
    AngularParams,
    ModelSpec,
    _rate,
    angular_from_uniforms,
    collision_c,
    drift_b,
    gaussian_density,
    mu_mass,
    rate_cap,
)
from .measures import EmpiricalMeasure

if TYPE_CHECKING:
    from .flow import PartitionSchedule

log = logging.getLogger(__name__)

CHUNK = 16384  # events per work unit; fixed so results never depend on the thread count
_DOMAIN_EVENT = 0
_DOMAIN_FIRST_GAP = 1


# -- random streams --------------------------------------------------------------


@dataclass(frozen=True)
class EventStream:
    """Counter-based source of event marks, keyed by particle label and ordinal."""

    seed: int

    def __post_init__(self):
        crng.seed_key(self.seed)

    @property
    def key(self):
        return crng.seed_key(self.seed)

    def _block(self, labels, ordinals, block, domain):
        labels = np.asarray(labels, dtype=np.uint64)
        ordinals = np.asarray(ordinals, dtype=np.uint64)
        c2 = np.uint64(block | (domain << 8))
        return crng.philox4x32(
            (labels & crng._MASK32, ordinals & crng._MASK32, c2, ordinals >> np.uint64(32)), self.key
        )

    def event_words(self, labels, ordinals):
        """Eight 32-bit words for each (label, ordinal) event.

        Words 0-1 give the gap to the next event, 2-3 the deflection angle,
        4-5 the azimuth, 6 the thinning variable and 7 the partner.
        """
        return self._block(labels, ordinals, 0, _DOMAIN_EVENT) + self._block(labels, ordinals, 1, _DOMAIN_EVENT)

    def first_gap_uniform(self, labels) -> np.ndarray:
        w = self._block(labels, np.zeros_like(np.asarray(labels)), 0, _DOMAIN_FIRST_GAP)
        return crng.uniform53(w[0], w[1])


def as_stream(rng) -> EventStream:
    if isinstance(rng, EventStream):
        return rng
    if isinstance(rng, (int, np.integer)):
        return EventStream(int(rng))
    raise TypeError("expected an EventStream or an integer seed")


# -- state and reports -------------------------------------------------------------


def _frozen(arr, dtype):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class ParticleSystemState:
    """Particle positions, clock, stream labels and the per-particle event cursor.

    ``next_event_time``/``next_event_index`` are ``None`` until the first step,
    which seeds them from the stream at the current clock.
    """

    particles: np.ndarray
    clock: float = 0.0
    labels: np.ndarray | None = None
    next_event_time: np.ndarray | None = None
    next_event_index: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.particles, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise DimensionMismatch(f"particles must be (N, d) with N >= 1, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("particles must be finite")
        if not (self.clock >= 0 and math.isfinite(self.clock)):
            raise ValueError("clock must be a finite nonnegative time")
        pts.setflags(write=False)
        object.__setattr__(self, "particles", pts)
        object.__setattr__(self, "clock", float(self.clock))
        n = pts.shape[0]
        labels = np.arange(n) if self.labels is None else self.labels
        labels = _frozen(labels, np.int64)
        if labels.shape != (n,) or not np.array_equal(np.sort(labels), np.arange(n)):
            raise ValueError("labels must be a permutation of 0..N-1")
        object.__setattr__(self, "labels", labels)
        if (self.next_event_time is None) != (self.next_event_index is None):
            raise ValueError("event cursor must be given in full or not at all")
        if self.next_event_time is not None:
            object.__setattr__(self, "next_event_time", _frozen(self.next_event_time, np.float64))
            object.__setattr__(self, "next_event_index", _frozen(self.next_event_index, np.int64))

    @property
    def size(self) -> int:
        return self.particles.shape[0]

    @property
    def dim(self) -> int:
        return self.particles.shape[1]

    @property
    def measure(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.particles)

    def permuted(self, perm) -> "ParticleSystemState":
        """Relabel slots: new slot k holds old slot perm[k], streams travel with it."""
        perm = np.asarray(perm)
        cursor = {}
        if self.next_event_time is not None:
            cursor = dict(next_event_time=self.next_event_time[perm], next_event_index=self.next_event_index[perm])
        return ParticleSystemState(self.particles[perm], self.clock, self.labels[perm], **cursor)


@dataclass(frozen=True)
class JumpEvent:
    time: float
    partner: int
    z: AngularParams | None
    u: float
    accepted: bool
    particle: int = 0


@dataclass(frozen=True, eq=False)
class StepReport:
    candidates: int
    accepted: int
    per_particle_candidates: np.ndarray | None = None
    events: tuple[JumpEvent, ...] | None = None

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.candidates if self.candidates else 0.0

    def to_dict(self) -> dict:
        return {"candidates": self.candidates, "accepted": self.accepted, "acceptance_rate": self.acceptance_rate}


# -- the frozen-state jump sum ----------------------------------------------------


def candidate_rate(model: ModelSpec) -> float:
    """Per-particle intensity of candidate events."""
    cap = rate_cap(model)
    return mu_mass(model) * cap if cap > 0 else 0.0


def event_increments(model: ModelSpec, X0, pool, slots, partners, zeta, phi, u, density=None):
    """Thinning decision and jump for a batch of events.

    ``X0[slots]`` are the typical particles, ``pool[partners]`` the partners,
    all read from the frozen step-start configuration.  Returns the boolean
    acceptance mask and the jumps of the accepted events.
    """
    x = X0[slots]
    v = pool[partners]
    dens = None if density is None else density[slots]
    ok = np.asarray(u) <= _rate(model, v, x, dens)
    if model.angular:
        z = (np.asarray(zeta)[ok], np.asarray(phi)[ok])
    else:
        z = None
    return ok, collision_c(model, v[ok], z, x[ok])


def apply_events(model: ModelSpec, X0, events: Sequence[JumpEvent], dt: float, pool=None, aux=None) -> np.ndarray:
    """Apply explicitly given candidate events to a frozen configuration.

    Acceptance is re-decided from ``u`` and the frozen rate, never from the
    ``accepted`` flag, so the result follows the same rule as a simulated step.
    """
    X0 = np.asarray(X0, dtype=np.float64).reshape(-1, model.dim)
    pool = X0 if pool is None else np.asarray(pool, dtype=np.float64).reshape(-1, model.dim)
    density = _density(model, X0, pool if aux is None else aux)
    out = X0 + drift_b(model, X0) * dt
    if not events:
        return out
    slots = np.array([e.particle for e in events])
    partners = np.array([e.partner for e in events])
    zeta = np.array([e.z.zeta if e.z is not None else 0.0 for e in events])
    phi = np.array([e.z.phi if e.z is not None else 0.0 for e in events])
    u = np.array([e.u for e in events])
    ok, jumps = event_increments(model, X0, pool, slots, partners, zeta, phi, u, density)
    incr = np.zeros_like(X0)
    for s, c in zip(slots[ok], jumps):
        incr[s] += c
    return out + incr


def _density(model: ModelSpec, X0, pool):
    if model.variant != "MeanFieldEnskog":
        return None
    pool = getattr(pool, "points", pool)
    return gaussian_density(X0[:, :3], np.asarray(pool)[:, :3], model.R)


def _walk_clocks(stream, labels, next_time, next_index, t1, lam):
    """Collect every candidate event in [clock, t1) and advance the cursors.

    Returns event slots, ordinals, times and the uniform behind the
    deflection angle, ordered by (slot, ordinal), plus the new cursors.
    """
    nt = next_time.copy()
    ni = next_index.copy()
    out_slot, out_ord, out_time, out_uz = [], [], [], []
    act = np.flatnonzero(nt < t1)
    while act.size:
        w = stream._block(labels[act], ni[act], 0, _DOMAIN_EVENT)
        out_slot.append(act)
        out_ord.append(ni[act].copy())
        out_time.append(nt[act].copy())
        out_uz.append(crng.uniform53(w[2], w[3]))
        nt[act] += -np.log(crng.uniform53(w[0], w[1])) / lam
        ni[act] += 1
        act = act[nt[act] < t1]
    if not out_slot:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0), np.zeros(0), nt, ni
    slot, ordinal = np.concatenate(out_slot), np.concatenate(out_ord)
    order = np.lexsort((ordinal, slot))
    return (slot[order], ordinal[order], np.concatenate(out_time)[order], np.concatenate(out_uz)[order], nt, ni)


def _mark_chunk(lo, hi, slot, ordinal, uz, X0, pool, pool_map, model, stream, labels, density):
    sl, ordi = slot[lo:hi], ordinal[lo:hi]
    w = stream._block(labels[sl], ordi, 1, _DOMAIN_EVENT)
    if model.angular:
        zeta, phi = angular_from_uniforms(model, uz[lo:hi], crng.uniform53(w[0], w[1]))
    else:
        zeta = phi = np.zeros(hi - lo)
    u = crng.uniform32(w[2]) * rate_cap(model)
    partners = crng.scaled_index(w[3], pool.shape[0])
    if pool_map is not None:
        partners = pool_map[partners]
    ok, jumps = event_increments(model, X0, pool, sl, partners, zeta, phi, u, density)
    return ok, jumps, zeta, phi, u, partners


def _first_event_times(stream: EventStream, labels, clock: float, model: ModelSpec):
    lam = candidate_rate(model)
    if lam <= 0:
        return np.full(labels.shape, np.inf), np.zeros(labels.shape, dtype=np.int64)
    gap = -np.log(stream.first_gap_uniform(labels)) / lam
    return clock + gap, np.zeros(labels.shape, dtype=np.int64)


def _euler_step(X0, pool, pool_map, t0, dt, model, stream, labels, next_time, next_index, density, threads, record):
    if not dt >= 0:
        raise NegativeDuration(f"step size must be nonnegative, got {dt}")
    t1 = t0 + dt
    n = X0.shape[0]
    lam = candidate_rate(model)
    slot, ordinal, times, uz, nt, ni = _walk_clocks(stream, labels, next_time, next_index, t1, lam)
    n_ev = slot.size
    bounds = [(lo, min(lo + CHUNK, n_ev)) for lo in range(0, n_ev, CHUNK)]

    def work(b):
        return _mark_chunk(b[0], b[1], slot, ordinal, uz, X0, pool, pool_map, model, stream, labels, density)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, bounds))
    else:
        results = [work(b) for b in bounds]
    incr = np.zeros_like(X0)
    ok = np.zeros(n_ev, dtype=bool)
    if results:
        ok = np.concatenate([r[0] for r in results])
        jumps = np.concatenate([r[1] for r in results])
        # unbuffered, in (slot, ordinal) order: the summation order is fixed
        np.add.at(incr, slot[ok], jumps)
    X1 = X0 + drift_b(model, X0) * dt + incr
    cand = np.bincount(slot, minlength=n)
    events = None
    if record:
        zeta, phi, u, partners = (np.concatenate([r[k] for r in results]) if results else np.zeros(0)
                                  for k in (2, 3, 4, 5))
        events = tuple(
            JumpEvent(float(times[k]), int(partners[k]),
                      AngularParams(float(zeta[k]), float(phi[k])) if model.angular else None,
                      float(u[k]), bool(ok[k]), int(slot[k]))
            for k in range(n_ev)
        )
    report = StepReport(int(n_ev), int(ok.sum()), cand, events)
    return X1, t1, nt, ni, report


# -- public steps ----------------------------------------------------------------


def one_step_theta(rho, initial, s: float, t: float, model: ModelSpec, rng, threads: int = 1) -> EmpiricalMeasure:
    """One Euler step over [s, t] driven by the fixed partner law ``rho``.

    The typical particles are the points of ``initial``; partners are drawn
    uniformly from the points of ``rho`` (and, for the mean-field model, the
    position marginal of ``rho`` sets the rate factor).
    """
    if t < s:
        raise NegativeDuration(f"t={t} < s={s}")
    rho = rho if isinstance(rho, EmpiricalMeasure) else EmpiricalMeasure(rho)
    initial = initial if isinstance(initial, EmpiricalMeasure) else EmpiricalMeasure(initial)
    if rho.dim != model.dim or initial.dim != model.dim:
        raise DimensionMismatch(f"measures must live in dimension {model.dim}")
    stream = as_stream(rng)
    X0 = initial.points
    labels = np.arange(X0.shape[0])
    nt, ni = _first_event_times(stream, labels, float(s), model)
    density = _density(model, X0, rho.points)
    X1, *_ = _euler_step(X0, rho.points, None, float(s), float(t) - float(s), model, stream, labels, nt, ni,
                         density, threads, False)
    return EmpiricalMeasure(X1)


def particle_step(state: ParticleSystemState, dt: float, model: ModelSpec, rng, threads: int = 1,
                  record_events: bool = False):
    """Advance the interacting system by ``dt``; partners come from the frozen state itself."""
    if state.dim != model.dim:
        raise DimensionMismatch(f"state has dimension {state.dim}, model expects {model.dim}")
    if not dt >= 0:
        raise NegativeDuration(f"step size must be nonnegative, got {dt}")
    stream = as_stream(rng)
    X0 = state.particles
    if state.next_event_time is None:
        nt, ni = _first_event_times(stream, state.labels, state.clock, model)
    else:
        nt, ni = state.next_event_time, state.next_event_index
    inverse = np.empty_like(state.labels)
    inverse[state.labels] = np.arange(state.size)
    identity = np.array_equal(state.labels, np.arange(state.size))
    density = _density(model, X0, X0)
    X1, t1, nt, ni, report = _euler_step(X0, X0, None if identity else inverse, state.clock, float(dt), model,
                                         stream, state.labels, nt, ni, density, threads, record_events)
    return ParticleSystemState(X1, t1, state.labels, nt, ni), report


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: tuple[ParticleSystemState, ...]
    reports: tuple[StepReport, ...]
    seed: int
    model: ModelSpec

    @property
    def times(self) -> list[float]:
        return [s.clock for s in self.states]

    @property
    def terminal(self) -> ParticleSystemState:
        return self.states[-1]

    def measures(self) -> list[EmpiricalMeasure]:
        return [s.measure for s in self.states]

    def __len__(self):
        return len(self.states)


def simulate(state0: ParticleSystemState, schedule: "PartitionSchedule", model: ModelSpec, seed: int,
             threads: int = 1, record_events: bool = False) -> Trajectory:
    """Compose ``schedule.n`` particle steps of size ``(t - s) / n``."""
    if abs(state0.clock - schedule.s) > 1e-9 * max(1.0, abs(schedule.s)):
        raise ValueError(f"state clock {state0.clock} does not match schedule start {schedule.s}")
    stream = EventStream(int(seed))
    dt = (schedule.t - schedule.s) / schedule.n
    states = [state0]
    reports = []
    state = state0
    for _ in range(schedule.n):
        state, rep = particle_step(state, dt, model, stream, threads=threads, record_events=record_events)
        states.append(state)
        reports.append(rep)
    return Trajectory(tuple(states), tuple(reports), int(seed), model)


def initial_state(rho0, N: int | None, seed: int, clock: float = 0.0) -> ParticleSystemState:
    """Initial configuration of ``N`` particles.

    ``rho0`` is either a law with a ``sample(n, rng)`` method (drawn iid) or an
    :class:`EmpiricalMeasure`, used as is when ``N`` matches its size and
    resampled with replacement otherwise.
    """
    rng = crng.generator(seed, "initial")
    if hasattr(rho0, "sample"):
        if N is None:
            raise ValueError("N is required when sampling from a law")
        pts = rho0.sample(int(N), rng)
    else:
        rho0 = rho0 if isinstance(rho0, EmpiricalMeasure) else EmpiricalMeasure(rho0)
        if N is None or N == rho0.size:
            pts = rho0.points
        else:
            pts = rho0.points[rng.integers(0, rho0.size, size=int(N))]
    return ParticleSystemState(pts, clock)


def export_trajectory(traj: Trajectory, out_dir, schedule: "PartitionSchedule | None" = None) -> Path:
    """Write one CSV per snapshot and a JSON manifest; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, st in enumerate(traj.states):
        name = f"snapshot_{k:04d}.csv"
        st.measure.to_csv(out / name)
        paths.append(name)
    manifest = {
        "seed": traj.seed,
        "model": traj.model.to_dict(),
        "schedule": None if schedule is None else {"s": schedule.s, "t": schedule.t, "n": schedule.n},
        "times": traj.times,
        "snapshots": paths,
        "step_reports": [r.to_dict() for r in traj.reports],
    }
    path = out / "trajectory.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path

"""Jump functional, weak-equation residuals and the synthetic moment oracle."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import MissingAux, QuadratureUnderResolved
from .kernels import ModelSpec, _rate, collision_c, drift_b, gaussian_density, lipschitz_budget, position_marginal
from .rng import generator

TEST_KINDS = ("tanh_coordinate", "product_tanh", "constant")


@dataclass(frozen=True)
class TestFunction:
    """Bounded C^1 observable with bounded gradient.

    ``tanh_coordinate``: tanh(lam * x[index]); ``product_tanh``:
    prod_k tanh(lam * x[k]); ``constant``: the value ``lam``.
    """

    __test__ = False  # not a pytest class

    kind: str
    lam: float = 1.0
    index: int = 0

    def __post_init__(self):
        if self.kind not in TEST_KINDS:
            raise ValueError(f"unknown test function kind {self.kind!r}")

    @classmethod
    def tanh_coordinate(cls, index: int = 0, lam: float = 1.0) -> "TestFunction":
        return cls("tanh_coordinate", lam, index)

    @classmethod
    def product_tanh(cls, lam: float = 1.0) -> "TestFunction":
        return cls("product_tanh", lam)

    @classmethod
    def constant(cls, value: float = 1.0) -> "TestFunction":
        return cls("constant", value)

    def __call__(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if self.kind == "tanh_coordinate":
            return np.tanh(self.lam * X[..., self.index])
        if self.kind == "product_tanh":
            return np.prod(np.tanh(self.lam * X), axis=-1)
        return np.full(X.shape[:-1], self.lam)

    def grad(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros_like(X)
        if self.kind == "tanh_coordinate":
            out[..., self.index] = self.lam / np.cosh(self.lam * X[..., self.index]) ** 2
        elif self.kind == "product_tanh":
            th = np.tanh(self.lam * X)
            for k in range(X.shape[-1]):
                others = np.prod(np.delete(th, k, axis=-1), axis=-1)
                out[..., k] = self.lam / np.cosh(self.lam * X[..., k]) ** 2 * others
        return out

    def grad_sup(self, dim: int) -> float:
        """Upper bound on sup |grad phi|."""
        if self.kind == "tanh_coordinate":
            return abs(self.lam)
        if self.kind == "product_tanh":
            return abs(self.lam) * math.sqrt(dim)
        return 0.0

    @property
    def name(self) -> str:
        if self.kind == "tanh_coordinate":
            return f"tanh({self.lam:g}*x{self.index + 1})"
        if self.kind == "product_tanh":
            return f"prod_tanh({self.lam:g})"
        return f"const({self.lam:g})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lam": self.lam, "index": self.index}

    @classmethod
    def from_dict(cls, d: dict) -> "TestFunction":
        return cls(d["kind"], float(d.get("lam", 1.0)), int(d.get("index", 0)))


@dataclass(frozen=True)
class Combination:
    """Finite linear combination of test functions."""

    terms: tuple[tuple[float, TestFunction], ...]

    def __call__(self, X):
        return sum(a * f(X) for a, f in self.terms)

    def grad(self, X):
        return sum(a * f.grad(X) for a, f in self.terms)


# -- angular quadrature ----------------------------------------------------------------


@lru_cache(maxsize=64)
def _angular_nodes(nu: float, zeta_min: float, n_quad: int):
    """Tensor nodes and weights for zeta^-(1+nu) dzeta dphi on [zeta_min, pi] x [0, 2pi).

    Gauss-Legendre in w = zeta^-nu (where the weight becomes dw / nu) and the
    midpoint rule in the azimuth.
    """
    x, wx = np.polynomial.legendre.leggauss(n_quad)
    lo, hi = math.pi**-nu, zeta_min**-nu
    w = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    ww = 0.5 * (hi - lo) * wx / nu
    zeta = w ** (-1.0 / nu)
    phi = 2.0 * math.pi * (np.arange(n_quad) + 0.5) / n_quad
    wphi = 2.0 * math.pi / n_quad
    Z, P = np.meshgrid(zeta, phi, indexing="ij")
    W = np.outer(ww, np.full(n_quad, wphi))
    return Z.ravel(), P.ravel(), W.ravel()


def _jump_integral(model: ModelSpec, phi, V, X, n_quad: int, chunk_nodes: int = 1 << 20) -> np.ndarray:
    """For each pair, the integral of phi(x + c(v, z, x)) - phi(x) against the mark measure."""
    if not model.angular:
        return phi(X + collision_c(model, V, None, X)) - phi(X)
    Z, P, W = _angular_nodes(model.nu, model.zeta_min, n_quad)
    out = np.empty(V.shape[0])
    step = max(1, chunk_nodes // Z.size)
    for lo in range(0, V.shape[0], step):
        v = V[lo:lo + step, None, :]
        x = X[lo:lo + step, None, :]
        c = collision_c(model, v, (Z[None, :], P[None, :]), x)
        diff = phi(x + c) - phi(x)
        out[lo:lo + step] = diff @ W
    return out


def lambda_batch(model: ModelSpec, phi, V, X, density=None, n_quad: int = 32) -> np.ndarray:
    """Lambda_phi(v_m, x_m) for paired rows of V and X (density = mean-field factor at x_m)."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    gam = _rate(model, V, X, density)
    out = np.zeros(V.shape[0])
    live = gam != 0
    if np.any(live):
        out[live] = gam[live] * _jump_integral(model, phi, V[live], X[live], n_quad)
    return out


def lambda_phi(model: ModelSpec, phi, v, x, aux=None, n_quad: int = 32, tol: float = 1e-6) -> float:
    """Jump functional Lambda_phi(v, x): the rate times the mark integral of phi(x + c) - phi(x).

    The quadrature is refined once (n_quad -> 2 n_quad); a change larger than
    ``tol`` raises :class:`QuadratureUnderResolved`.  Returns the refined value.
    """
    if n_quad < 8:
        raise ValueError("n_quad must be >= 8")
    V = np.asarray(v, dtype=np.float64).reshape(1, model.dim)
    X = np.asarray(x, dtype=np.float64).reshape(1, model.dim)
    density = _mean_field_density(model, X, aux)
    coarse = float(lambda_batch(model, phi, V, X, density, n_quad)[0])
    if not model.angular:
        return coarse
    fine = float(lambda_batch(model, phi, V, X, density, 2 * n_quad)[0])
    if abs(fine - coarse) > tol:
        raise QuadratureUnderResolved(f"doubling n_quad={n_quad} moved Lambda by {abs(fine - coarse):.3g} > {tol:g}")
    return fine


def _mean_field_density(model: ModelSpec, X, aux):
    if model.variant != "MeanFieldEnskog":
        return None
    if aux is None:
        raise MissingAux("MeanFieldEnskog needs the position marginal as aux")
    return gaussian_density(X[:, :3], position_marginal(aux), model.R)


def lambda_bound(model: ModelSpec, phi: TestFunction, v, x, first_moment: float) -> np.ndarray:
    """Sublinear growth bound C_mu * sup|grad phi| * (1 + |v| + |x| + first moment)."""
    C = lipschitz_budget(model).C_mu
    nv = np.linalg.norm(np.atleast_2d(v), axis=-1)
    nx = np.linalg.norm(np.atleast_2d(x), axis=-1)
    return C * phi.grad_sup(model.dim) * (1.0 + nv + nx + first_moment)


# -- residuals -----------------------------------------------------------------------


def _pair_indices(N: int, max_pairs: int, rng):
    """All N^2 pairs (i, j), or ``max_pairs`` pairs drawn uniformly with replacement."""
    if N * N <= max_pairs:
        i, j = np.divmod(np.arange(N * N), N)
        return i, j
    return rng.integers(0, N, size=max_pairs), rng.integers(0, N, size=max_pairs)


def interaction_mean(model: ModelSpec, phi, X, max_pairs: int, rng, n_quad: int = 32) -> float:
    """(1/N^2) sum_{i,j} Lambda_phi(X_j, X_i), exact or as an incomplete U-statistic."""
    X = np.asarray(X, dtype=np.float64)
    i, j = _pair_indices(X.shape[0], max_pairs, rng)
    density = None
    if model.variant == "MeanFieldEnskog":
        density = gaussian_density(X[:, :3], X[:, :3], model.R)[i]
    return float(np.mean(lambda_batch(model, phi, X[j], X[i], density, n_quad)))


@dataclass
class ResidualReport:
    phi: list[str]
    times: list[float]
    residual_series: dict[str, list[float]]
    max_residual: float
    budget: float | None = None
    passed: bool | None = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"phi": self.phi, "times": self.times, "residual_series": self.residual_series,
                "max_residual": self.max_residual, "budget": self.budget, "pass": self.passed, "params": self.params}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _unpack_trajectory(trajectory, times):
    if hasattr(trajectory, "states"):
        return list(trajectory.times), [s.particles for s in trajectory.states]
    pts = [getattr(m, "points", getattr(m, "particles", m)) for m in trajectory]
    if times is None:
        raise ValueError("times are required when passing a list of measures")
    return [float(t) for t in times], [np.asarray(p, dtype=np.float64).reshape(len(p), -1) for p in pts]


def residual_series(trajectory, model: ModelSpec, phi, times=None, max_pairs: int = 200_000, n_quad: int = 32,
                    seed: int = 0, quad_tol: float = 1e-5) -> list[float]:
    """Weak-form residual at every grid node for one test function (left-endpoint rule in time)."""
    ts, pts = _unpack_trajectory(trajectory, times)
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise ValueError("trajectory must be time-ordered")
    if model.angular and isinstance(phi, TestFunction) and phi.kind != "constant":
        _check_quadrature(model, phi, pts[0], n_quad, quad_tol, seed)
    base = float(np.mean(phi(pts[0])))
    out = [0.0]
    integral = 0.0
    for k in range(1, len(pts)):
        X = pts[k - 1]
        dt = ts[k] - ts[k - 1]
        drift_term = float(np.mean(np.sum(drift_b(model, X) * phi.grad(X), axis=-1)))
        jump_term = interaction_mean(model, phi, X, max_pairs, generator(seed, "pairs", k - 1), n_quad)
        integral += dt * (drift_term + jump_term)
        out.append(float(np.mean(phi(pts[k]))) - base - integral)
    return out


def _check_quadrature(model, phi, X, n_quad, tol, seed, samples: int = 64):
    rng = generator(seed, "quadrature-check")
    i = rng.integers(0, X.shape[0], size=samples)
    j = rng.integers(0, X.shape[0], size=samples)
    density = gaussian_density(X[i, :3], X[:, :3], model.R) if model.variant == "MeanFieldEnskog" else None
    a = lambda_batch(model, phi, X[j], X[i], density, n_quad)
    b = lambda_batch(model, phi, X[j], X[i], density, 2 * n_quad)
    worst = float(np.max(np.abs(a - b)))
    if worst > tol:
        raise QuadratureUnderResolved(f"doubling n_quad={n_quad} moved Lambda by {worst:.3g} > {tol:g}")


def weak_residual(trajectory, model: ModelSpec, phi_set, times=None, budget: float | None = None,
                  max_pairs: int = 200_000, n_quad: int = 32, seed: int = 0, quad_tol: float = 1e-5) -> ResidualReport:
    """Maximum over test functions and grid nodes of the weak-equation residual."""
    series = {}
    for phi in phi_set:
        series[getattr(phi, "name", repr(phi))] = residual_series(trajectory, model, phi, times, max_pairs, n_quad, seed, quad_tol)
    ts, _ = _unpack_trajectory(trajectory, times)
    worst = max(max(abs(r) for r in s) for s in series.values())
    passed = None if budget is None else bool(worst <= budget)
    return ResidualReport(list(series), ts, series, worst, budget, passed,
                          {"max_pairs": max_pairs, "n_quad": n_quad, "seed": seed, "quad_tol": quad_tol})


def synthetic_budget(N: int, n: int, factor: float = 5.0) -> float:
    """Residual tolerance factor * (N^-1/2 + 1/n)."""
    return factor * (N**-0.5 + 1.0 / n)


def moment_ode_oracle(kappa: float, g: float, mean0: float, var0: float, t: float) -> tuple[float, float]:
    """Mean and variance of the synthetic model at time t: the mean is conserved and
    the variance solves dVar/dt = 2 g kappa (kappa - 1) Var."""
    if var0 < 0:
        raise ValueError("var0 must be nonnegative")
    if t < 0:
        raise ValueError("t must be nonnegative")
    return float(mean0), float(var0 * math.exp(2.0 * g * kappa * (kappa - 1.0) * t))

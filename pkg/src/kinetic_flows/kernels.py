"""Coefficient triplets (drift, jump, rate) for the supported collision models.

All kernel functions broadcast over leading axes: a point is an array whose
last axis is the state dimension, so the same call serves one point or a
batch of ``M`` points.

Variants
--------
``Synthetic1D``
    d = 1, a single-atom mark space of unit mass, jump ``kappa * (v - x)`` at
    constant rate ``g``, optional affine drift ``b0 + b1 * x``.
``Boltzmann3D``
    Homogeneous hard-potential Boltzmann kernel in velocity space, truncated
    at ``gamma_cap`` with an angular cutoff ``zeta_min``.
``Enskog``
    Phase space R^6 = position (first 3) x velocity (last 3).  Positions are
    transported by velocities; the Boltzmann jump acts on the velocity block,
    scaled by a smooth localization ``beta``.
``MeanFieldEnskog``
    Same transport, unscaled jump, rate multiplied by a Gaussian kernel
    density estimate of the position marginal.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import DegenerateCutoff, DimensionMismatch, MissingAux, ZeroVector

VARIANTS = ("Synthetic1D", "Boltzmann3D", "Enskog", "MeanFieldEnskog")
CONVENTIONS = ("energy", "paper_literal")
BETA_KINDS = ("smoothstep",)
_DIMS = {"Synthetic1D": 1, "Boltzmann3D": 3, "Enskog": 6, "MeanFieldEnskog": 6}
_JSON_KEYS = ("variant", "a", "nu", "gamma_cap", "zeta_min", "R", "beta", "kappa", "g", "convention", "dim")


class AngularParams(NamedTuple):
    zeta: float
    phi: float


@dataclass(frozen=True)
class LipschitzBudget:
    L_b: float
    L_mu: float
    C_mu: float

    @property
    def L_total(self) -> float:
        """Exponent rate of the stability envelope exp(L_total * t)."""
        return 2.0 * self.L_b + 3.0 * self.L_mu


@dataclass(frozen=True)
class ModelSpec:
    variant: str
    a: float = 0.5
    nu: float = 0.5
    gamma_cap: float = 2.0
    zeta_min: float = 0.2
    R: float = 1.0
    beta: str | None = None
    kappa: float = 0.5
    g: float = 1.0
    convention: str = "energy"
    dim: int | None = None
    drift: tuple[float, float] = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.dim is None:
            object.__setattr__(self, "dim", _DIMS[self.variant])
        if self.dim != _DIMS[self.variant]:
            raise DimensionMismatch(f"{self.variant} lives in dimension {_DIMS[self.variant]}, got dim={self.dim}")
        if self.variant == "Enskog" and self.beta is None:
            object.__setattr__(self, "beta", "smoothstep")
        if self.beta is not None and self.beta not in BETA_KINDS:
            raise ValueError(f"unknown beta kind {self.beta!r}")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        object.__setattr__(self, "drift", tuple(float(c) for c in self.drift))
        if len(self.drift) != 2:
            raise ValueError("drift must be (b0, b1)")
        if self.variant != "Synthetic1D" and any(self.drift):
            raise ValueError("affine drift is only available for Synthetic1D")
        if not 0.0 <= self.a <= 1.0:
            raise ValueError("a must lie in [0, 1]")
        if not 0.0 < self.nu < 1.0:
            raise ValueError("nu must lie in (0, 1)")
        if not self.gamma_cap >= 1.0:
            raise ValueError("gamma_cap must be >= 1")
        if not 0.0 <= self.zeta_min <= math.pi:
            raise ValueError("zeta_min must lie in [0, pi]")
        if not self.R > 0.0:
            raise ValueError("R must be positive")
        if self.g < 0.0:
            raise ValueError("g must be nonnegative")

    # -- constructors ------------------------------------------------------

    @classmethod
    def synthetic(cls, kappa=0.5, g=1.0, b0=0.0, b1=0.0) -> "ModelSpec":
        return cls("Synthetic1D", kappa=kappa, g=g, drift=(b0, b1))

    @classmethod
    def boltzmann3d(cls, a=0.5, nu=0.5, gamma_cap=2.0, zeta_min=0.2, convention="energy") -> "ModelSpec":
        return cls("Boltzmann3D", a=a, nu=nu, gamma_cap=gamma_cap, zeta_min=zeta_min, convention=convention)

    @classmethod
    def enskog(cls, a=0.5, nu=None, gamma_cap=2.0, zeta_min=0.2, R=1.0, convention="energy") -> "ModelSpec":
        # the angular exponent defaults to the hard-potential exponent for this variant
        return cls("Enskog", a=a, nu=a if nu is None else nu, gamma_cap=gamma_cap, zeta_min=zeta_min,
                   R=R, beta="smoothstep", convention=convention)

    @classmethod
    def mean_field_enskog(cls, a=0.5, nu=0.5, gamma_cap=2.0, zeta_min=0.2, R=1.0, convention="energy") -> "ModelSpec":
        return cls("MeanFieldEnskog", a=a, nu=nu, gamma_cap=gamma_cap, zeta_min=zeta_min, R=R, convention=convention)

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)

    @property
    def angular(self) -> bool:
        return self.variant != "Synthetic1D"

    @property
    def phase_space(self) -> bool:
        return self.variant in ("Enskog", "MeanFieldEnskog")

    # -- JSON ----------------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        out = {k: d[k] for k in _JSON_KEYS}
        if any(self.drift):
            out["drift"] = list(self.drift)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        keys = set(d)
        unknown = keys - set(_JSON_KEYS) - {"drift"}
        if unknown:
            raise ValueError(f"unknown ModelSpec keys: {sorted(unknown)}")
        missing = set(_JSON_KEYS) - keys
        if missing:
            raise ValueError(f"missing ModelSpec keys: {sorted(missing)}")
        kwargs = dict(d)
        if "drift" in kwargs:
            kwargs["drift"] = tuple(kwargs["drift"])
        for k in ("a", "nu", "gamma_cap", "zeta_min", "R", "kappa", "g"):
            kwargs[k] = float(kwargs[k])
        kwargs["dim"] = int(kwargs["dim"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls.from_dict(json.loads(text))


# -- geometry ----------------------------------------------------------------


def _norm(v: np.ndarray) -> np.ndarray:
    # coordinate-by-coordinate accumulation keeps results independent of batch shape
    sq = v[..., 0] * v[..., 0]
    for k in range(1, v.shape[-1]):
        sq = sq + v[..., k] * v[..., k]
    return np.sqrt(sq)


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    s = u[..., 0] * v[..., 0]
    for k in range(1, u.shape[-1]):
        s = s + u[..., k] * v[..., k]
    return s


def truncate(v, gamma_cap: float) -> np.ndarray:
    """Radial projection onto the closed ball of radius ``gamma_cap``."""
    v = np.asarray(v, dtype=np.float64)
    r = _norm(v)
    over = r > gamma_cap
    scale = np.where(over, gamma_cap / np.where(over, r, 1.0), 1.0)
    return np.where(over[..., None], v * scale[..., None], v)


def _frame(X: np.ndarray):
    r = _norm(X)
    axis = np.argmin(np.abs(X), axis=-1)
    e = np.zeros_like(X)
    np.put_along_axis(e, axis[..., None], 1.0, axis=-1)
    XE = np.cross(X, e)
    s = _norm(XE)
    I = XE * (r / np.where(s > 0, s, 1.0))[..., None]
    J = np.cross(X, I) / np.where(r > 0, r, 1.0)[..., None]
    return I, J


def frame(X):
    """Orthogonal pair (I, J) completing X to an orthogonal basis, |I| = |J| = |X|.

    The auxiliary axis is the standard basis vector along the smallest
    ``|X_k|`` (lowest index on ties).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != 3:
        raise DimensionMismatch("frame is defined in R^3")
    if np.any(_norm(X) == 0):
        raise ZeroVector("frame of the zero vector is undefined")
    return _frame(X)


def delta(X, phi) -> np.ndarray:
    """cos(phi) I(X) + sin(phi) J(X), with delta(0, .) = 0."""
    X = np.asarray(X, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    I, J = _frame(X)
    return np.cos(phi)[..., None] * I + np.sin(phi)[..., None] * J


def _deflection(w: np.ndarray, zeta, phi, convention: str) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=np.float64)
    drift = 0.5 * (1.0 - np.cos(zeta))
    if convention == "paper_literal":
        drift = -drift
    return drift[..., None] * w + (0.5 * np.sin(zeta))[..., None] * delta(w, phi)


def smoothstep_indicator(r, R: float) -> np.ndarray:
    """C^1 cutoff: 1 on [0, R], 0 on [2R, inf), cubic Hermite in between."""
    s = np.clip((np.asarray(r, dtype=np.float64) - R) / R, 0.0, 1.0)
    return 1.0 - s * s * (3.0 - 2.0 * s)


def localization(model: ModelSpec, vbar, xbar) -> np.ndarray:
    """beta(v_bar, x_bar) evaluated on truncated positions."""
    hv = truncate(vbar, model.gamma_cap)
    hx = truncate(xbar, model.gamma_cap)
    return smoothstep_indicator(_norm(hx - hv), model.R)


def _check_dim(model: ModelSpec, *arrays):
    for arr in arrays:
        if arr.shape[-1] != model.dim:
            raise DimensionMismatch(f"{model.variant} expects dimension {model.dim}, got {arr.shape[-1]}")


def collision_c(model: ModelSpec, v, z, x) -> np.ndarray:
    """Jump of the typical particle ``x`` colliding with partner ``v`` at marks ``z``.

    ``z`` is an :class:`AngularParams` (or any ``(zeta, phi)`` pair of
    broadcastable arrays); it is ignored by ``Synthetic1D``.  Phase-space
    variants return a full R^6 jump with a zero position block.
    """
    v = np.asarray(v, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model, v, x)
    if model.variant == "Synthetic1D":
        return model.kappa * (v - x)
    zeta, phi = z
    G = model.gamma_cap
    if model.variant == "Boltzmann3D":
        return _deflection(truncate(v, G) - truncate(x, G), zeta, phi, model.convention)
    jump = _deflection(truncate(v[..., 3:], G) - truncate(x[..., 3:], G), zeta, phi, model.convention)
    if model.variant == "Enskog":
        jump = jump * localization(model, v[..., :3], x[..., :3])[..., None]
    return np.concatenate([np.zeros_like(jump), jump], axis=-1)


def gaussian_density(points, centers, R: float, chunk: int = 2048) -> np.ndarray:
    """(1/M) sum_j p_R(x - c_j) for each x in ``points``; p_R isotropic Gaussian in R^3."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    norm = (2.0 * math.pi * R * R) ** -1.5
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        p = points[start:start + chunk]
        d = p[:, None, :] - centers[None, :, :]
        sq = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]
        out[start:start + chunk] = norm * np.mean(np.exp(-sq / (2.0 * R * R)), axis=1)
    return out


def position_marginal(aux) -> np.ndarray:
    """Accept positions in R^3 or phase-space points in R^6; return (M, 3) positions."""
    pts = getattr(aux, "points", aux)
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if pts.shape[-1] == 6:
        return pts[:, :3]
    if pts.shape[-1] != 3:
        raise DimensionMismatch("mean-field aux must hold positions in R^3 (or states in R^6)")
    return pts


def _rate(model: ModelSpec, v: np.ndarray, x: np.ndarray, density=None) -> np.ndarray:
    if model.variant == "Synthetic1D":
        return np.full(np.broadcast_shapes(v.shape[:-1], x.shape[:-1]), model.g)
    G = model.gamma_cap
    if model.phase_space:
        v, x = v[..., 3:], x[..., 3:]
    gam = _norm(truncate(v, G) - truncate(x, G)) ** model.a
    if model.variant == "MeanFieldEnskog":
        gam = gam * density
    return gam


def rate_gamma(model: ModelSpec, v, x, aux=None) -> np.ndarray | float:
    """Collision rate between typical particle ``x`` and partner ``v``.

    ``aux`` (the position marginal, an EmpiricalMeasure or array) is required
    for ``MeanFieldEnskog`` and ignored otherwise.
    """
    v = np.asarray(v, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_dim(model, v, x)
    density = None
    if model.variant == "MeanFieldEnskog":
        if aux is None:
            raise MissingAux("MeanFieldEnskog needs the position marginal as aux")
        xb = np.atleast_2d(x[..., :3]).reshape(-1, 3)
        density = gaussian_density(xb, position_marginal(aux), model.R).reshape(x.shape[:-1])
    out = _rate(model, v, x, density)
    return float(out) if np.ndim(out) == 0 else out


def drift_b(model: ModelSpec, state) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    _check_dim(model, state)
    if model.variant == "Synthetic1D":
        b0, b1 = model.drift
        return b0 + b1 * state
    if model.variant == "Boltzmann3D":
        return np.zeros_like(state)
    return np.concatenate([state[..., 3:], np.zeros_like(state[..., 3:])], axis=-1)


# -- angular measure zeta^-(1+nu) dzeta dphi on [zeta_min, pi] x [0, 2pi) -------


def _check_cutoff(model: ModelSpec):
    if model.zeta_min >= math.pi:
        raise DegenerateCutoff("zeta_min >= pi leaves an empty angular window")
    if model.zeta_min <= 0.0:
        raise DegenerateCutoff("zeta_min = 0 gives an infinite angular mass")


def angular_from_uniforms(model: ModelSpec, u_zeta, u_phi):
    """Inverse-CDF map from uniforms on [0, 1] to (zeta, phi)."""
    _check_cutoff(model)
    nu = model.nu
    lo = model.zeta_min**-nu
    hi = math.pi**-nu
    zeta = (lo - np.asarray(u_zeta, dtype=np.float64) * (lo - hi)) ** (-1.0 / nu)
    zeta = np.clip(zeta, model.zeta_min, math.pi)
    phi = np.mod(2.0 * math.pi * np.asarray(u_phi, dtype=np.float64), 2.0 * math.pi)
    return zeta, phi


def angular_cdf(model: ModelSpec, zeta) -> np.ndarray:
    nu = model.nu
    lo = model.zeta_min**-nu
    return (lo - np.asarray(zeta, dtype=np.float64) ** -nu) / (lo - math.pi**-nu)


def sample_angular(model: ModelSpec, rng: np.random.Generator, size=None):
    """Draw (zeta, phi) from the normalized cutoff angular measure."""
    u1 = rng.random(size)
    u2 = rng.random(size)
    zeta, phi = angular_from_uniforms(model, u1, u2)
    if size is None:
        return AngularParams(float(zeta), float(phi))
    return AngularParams(zeta, phi)


def mu_mass(model: ModelSpec) -> float:
    """Total mass of the mark space."""
    if not model.angular:
        return 1.0
    _check_cutoff(model)
    nu = model.nu
    return 2.0 * math.pi * (model.zeta_min**-nu - math.pi**-nu) / nu


def rate_cap(model: ModelSpec) -> float:
    """Uniform upper bound on the rate over the truncated state space."""
    if model.variant == "Synthetic1D":
        return model.g
    cap = (2.0 * model.gamma_cap) ** model.a
    if model.variant == "MeanFieldEnskog":
        cap *= (2.0 * math.pi * model.R**2) ** -1.5
    return cap


def alpha_integral(model: ModelSpec) -> float:
    """Integral of the deflection Lipschitz weight 2*zeta against the angular measure."""
    nu = model.nu
    return 4.0 * math.pi * (math.pi ** (1.0 - nu) - model.zeta_min ** (1.0 - nu)) / (1.0 - nu)


def lipschitz_budget(model: ModelSpec) -> LipschitzBudget:
    G, a = model.gamma_cap, model.a
    if model.variant == "Synthetic1D":
        L_mu = model.g * abs(model.kappa)
        return LipschitzBudget(L_b=abs(model.drift[1]), L_mu=L_mu, C_mu=L_mu)
    A = alpha_integral(model)
    if model.variant == "Boltzmann3D":
        L_mu = 6.0 * G**a * A
        return LipschitzBudget(L_b=0.0, L_mu=L_mu, C_mu=L_mu)
    if model.variant == "Enskog":
        lip_beta = 1.5 / model.R  # max slope of the smoothstep cutoff
        L_mu = 6.0 * G**a * (2.0 * G * lip_beta + 1.0) * A
        return LipschitzBudget(L_b=1.0, L_mu=L_mu, C_mu=L_mu)
    p_sup = (2.0 * math.pi * model.R**2) ** -1.5
    L_mu = p_sup * G**a * A * (6.0 + 4.0 * G / model.R)
    return LipschitzBudget(L_b=1.0, L_mu=L_mu, C_mu=L_mu)


def increment_bound(model: ModelSpec, first_moment: float) -> float:
    """Constant C with E|X_{s,t} - X| <= C (t - s) for one Euler step."""
    budget = lipschitz_budget(model)
    b0 = abs(model.drift[0]) if model.variant == "Synthetic1D" else 0.0
    return b0 + budget.C_mu + (2.0 * budget.L_b + 3.0 * budget.C_mu) * first_moment

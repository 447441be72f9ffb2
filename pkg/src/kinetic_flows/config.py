"""Experiment configuration files."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kernels import ModelSpec
from .measures import EmpiricalMeasure, GaussianLaw
from .weakform import TestFunction

COMMANDS = ("simulate", "rate-time", "rate-particles", "weak-residual", "conserve", "stability", "validate-kernels")
MAX_PARTICLES = 200_000


@dataclass
class ExperimentConfig:
    command: str
    model: ModelSpec
    seed: int
    N: int = 1000
    n: int = 10
    T: float = 1.0
    replicas: int = 8
    n_list: tuple[int, ...] | None = None
    N_list: tuple[int, ...] | None = None
    reference_N: int | None = None
    initial: dict = field(default_factory=lambda: {"kind": "gaussian", "mean": 0.0, "std": 1.0})
    output_dir: str = "kinetic-flows-out"
    threads: int = 1
    h_list: tuple[float, ...] | None = None
    shift: float | tuple[float, ...] = 0.5
    samples: int = 100_000
    phi: tuple[dict, ...] | None = None
    max_pairs: int = 200_000
    n_quad: int = 32
    quad_tol: float = 1e-5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"field 'command': unknown command {self.command!r}; expected one of {COMMANDS}")
        if not isinstance(self.model, ModelSpec):
            raise ConfigError("field 'model': expected a ModelSpec")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ConfigError("field 'seed': a 64-bit unsigned integer is required")
        for name in ("N", "n", "replicas", "threads", "samples", "max_pairs", "n_quad"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise ConfigError(f"field {name!r}: expected a positive integer, got {v!r}")
        if self.N > MAX_PARTICLES:
            raise ConfigError(f"field 'N': {self.N} exceeds the cap {MAX_PARTICLES}")
        if not (isinstance(self.T, (int, float)) and self.T >= 0):
            raise ConfigError("field 'T': expected a nonnegative number")
        for name in ("n_list", "N_list"):
            ladder = getattr(self, name)
            if ladder is None:
                continue
            ladder = tuple(ladder)
            if not ladder or any(not isinstance(v, int) or v < 1 for v in ladder):
                raise ConfigError(f"field {name!r}: expected a list of positive integers")
            if any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ConfigError(f"field {name!r}: ladder must be strictly increasing")
            if name == "N_list" and ladder[-1] > MAX_PARTICLES:
                raise ConfigError(f"field 'N_list': {ladder[-1]} exceeds the cap {MAX_PARTICLES}")
            setattr(self, name, ladder)
        if self.h_list is not None:
            self.h_list = tuple(float(h) for h in self.h_list)
        if self.phi is not None:
            self.phi = tuple(self.phi)
            try:
                [TestFunction.from_dict(p) for p in self.phi]
            except (KeyError, ValueError, TypeError) as exc:
                raise ConfigError(f"field 'phi': {exc}") from exc
        if isinstance(self.shift, list):
            self.shift = tuple(float(s) for s in self.shift)
        kind = self.initial.get("kind") if isinstance(self.initial, dict) else None
        if kind not in ("gaussian", "csv"):
            raise ConfigError("field 'initial': expected {'kind': 'gaussian', ...} or {'kind': 'csv', 'path': ...}")
        if kind == "csv" and "path" not in self.initial:
            raise ConfigError("field 'initial': a csv initial law needs 'path'")

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, ModelSpec):
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = list(v)
            out[f.name] = v
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict, command: str | None = None) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown field(s): {', '.join(unknown)}")
        d = dict(d)
        if command is not None:
            if "command" in d and d["command"] != command:
                raise ConfigError(f"field 'command': file says {d['command']!r} but {command!r} was requested")
            d["command"] = command
        for required in ("command", "model", "seed"):
            if required not in d:
                raise ConfigError(f"field {required!r} is required")
        try:
            d["model"] = ModelSpec.from_dict(d["model"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field 'model': {exc}") from exc
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str, command: str | None = None) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data, command)

    @classmethod
    def load(cls, path, command: str | None = None) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text, command)

    # -- derived objects -----------------------------------------------------

    def initial_law(self, base_dir: Path | None = None):
        if self.initial["kind"] == "gaussian":
            return GaussianLaw(self.model.dim, self.initial.get("mean", 0.0), float(self.initial.get("std", 1.0)))
        path = Path(self.initial["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mu = EmpiricalMeasure.from_csv(path)
        if mu.dim != self.model.dim:
            raise ConfigError(f"field 'initial': csv has dimension {mu.dim}, model expects {self.model.dim}")
        return mu

    def initial_variance(self) -> float | None:
        """Per-coordinate variance of a Gaussian initial law (None for data files)."""
        if self.initial["kind"] == "gaussian":
            return float(self.initial.get("std", 1.0)) ** 2
        return None

    def test_functions(self) -> list[TestFunction]:
        if self.phi is not None:
            return [TestFunction.from_dict(p) for p in self.phi]
        if self.model.dim == 1:
            return [TestFunction.tanh_coordinate(0, 0.5), TestFunction.tanh_coordinate(0, 1.0)]
        return [TestFunction.tanh_coordinate(0, 1.0), TestFunction.product_tanh(1.0)]


def merged(config: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Copy of ``config`` with the non-None overrides applied (and revalidated)."""
    d = asdict(config)
    d["model"] = config.model
    for k, v in overrides.items():
        if v is not None:
            d[k] = v
    return ExperimentConfig(**d)

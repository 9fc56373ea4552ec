"""Experiment configuration (JSON document, ``schema_version: 1``)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

from ..mdp import (EnvValidationError, HardInstanceSpec, make_hard_instance,
                   make_random_linear_mdp, make_random_linear_mixture)

SCHEMA_VERSION = 1
ALGORITHMS = ("lsvi-ucb", "ucrl-vtr")
ENV_KINDS = ("hard", "random-linear", "random-mixture")
FORMATS = ("csv", "json", "svg")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class EnvConfig:
    kind: str = "hard"
    d: int = 3
    H: int = 3
    gap: Optional[float] = 0.05
    escape: Optional[float] = None
    relaxed: bool = False
    signs: Optional[tuple] = None
    S: Optional[int] = None
    A: Optional[int] = None
    seed: Optional[int] = 0

    def hard_spec(self) -> HardInstanceSpec:
        signs = None if self.signs is None else tuple(tuple(r) for r in self.signs)
        return HardInstanceSpec(self.d, self.H, self.gap, self.escape, signs, self.relaxed)


@dataclass(frozen=True)
class Hyper:
    lam: Optional[float] = None
    c_beta: float = 1.0
    delta: float = 0.01
    delta_preset: Optional[str] = None
    clip: bool = True


@dataclass(frozen=True)
class Diagnostics:
    optimism: bool = True
    decomposition: bool = False
    confidence_set: bool = True
    linalg_check_every: int = 0
    ridge_check: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    algorithm: str = "lsvi-ucb"
    hyper: Hyper = field(default_factory=Hyper)
    K: int = 1000
    seeds: tuple = (0,)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    out_dir: str = "out"
    formats: tuple = ("csv",)
    sweep_c_beta: tuple = (1.0, 0.1, 0.01)
    workers: int = 1
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> "ExperimentConfig":
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if int(self.K) != self.K or self.K < 1:
            raise ConfigError("K must be a positive integer")
        if not self.seeds:
            raise ConfigError("at least one run seed is required")
        if any(int(s) != s or s < 0 for s in self.seeds):
            raise ConfigError("run seeds must be non-negative integers")
        h = self.hyper
        if h.delta_preset not in (None, "union-bound"):
            raise ConfigError(f"unknown delta preset {h.delta_preset!r}")
        if not 0 < h.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if h.c_beta < 0 or any(c < 0 for c in self.sweep_c_beta):
            raise ConfigError("c_beta must be non-negative")
        if h.lam is not None and not h.lam > 0:
            raise ConfigError("lam must be positive")
        if any(f not in FORMATS for f in self.formats):
            raise ConfigError(f"formats must be drawn from {FORMATS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        kind = self.env.kind
        if kind not in ENV_KINDS:
            raise ConfigError(f"env.kind must be one of {ENV_KINDS}, got {kind!r}")
        if kind == "random-linear" and self.algorithm != "lsvi-ucb":
            raise ConfigError("random-linear environments only support lsvi-ucb")
        if kind == "random-mixture" and self.algorithm != "ucrl-vtr":
            raise ConfigError("random-mixture environments only support ucrl-vtr")
        if kind != "hard" and (self.env.S is None or self.env.A is None):
            raise ConfigError("random environments need S and A")
        try:
            self.build_env()
        except EnvValidationError as exc:
            raise ConfigError(f"invalid environment: {exc}") from exc
        return self

    @property
    def delta(self) -> float:
        if self.hyper.delta_preset == "union-bound":
            from ..lsvi import union_bound_delta
            return union_bound_delta(self.K, self.env.H)
        return self.hyper.delta

    def build_env(self):
        """The environment the configured algorithm runs on."""
        e = self.env
        if e.kind == "hard":
            _, lin, mix = make_hard_instance(e.hard_spec())
            return lin if self.algorithm == "lsvi-ucb" else mix
        if e.kind == "random-linear":
            return make_random_linear_mdp(e.d, e.S, e.A, e.H, e.seed)
        return make_random_linear_mixture(e.d, e.S, e.A, e.H, e.seed)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        hyper_keys = {"c_beta", "delta", "lam", "clip", "delta_preset"}
        hyper_kw = {k: kw.pop(k) for k in list(kw) if k in hyper_keys}
        cfg = replace(self, **kw)
        if hyper_kw:
            cfg = replace(cfg, hyper=replace(cfg.hyper, **hyper_kw))
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = dict(doc)
        if "schema_version" not in doc:
            raise ConfigError("config is missing schema_version")
        try:
            env = EnvConfig(**doc.pop("env", {}))
            hyper = Hyper(**doc.pop("hyper", {}))
            diag = Diagnostics(**doc.pop("diagnostics", {}))
            for key in ("seeds", "formats", "sweep_c_beta"):
                if key in doc:
                    doc[key] = tuple(doc[key])
            cfg = cls(env=env, hyper=hyper, diagnostics=diag, **doc)
        except TypeError as exc:
            raise ConfigError(f"unknown or malformed config field: {exc}") from exc
        return cfg.validate()

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(doc)

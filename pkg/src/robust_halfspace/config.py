"""Experiment configuration, read from TOML or JSON.

The file has top-level keys plus one level of sections; every key is
optional.  See the README for the full list.  A JSON file with the same
layout is accepted too.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import rng as rng_mod
from .attack import AttackBudget
from .dist import DataSpec, Halfspace, PlantedSource
from .partition import ClassifierConfig
from .regression import RegressionConfig

# section -> field names; top-level keys map to the fields in "experiment"
SECTIONS = {
    "experiment": ("seed", "r", "eps", "delta", "out_dir", "eval_seed", "record_timings"),
    "data": ("d", "marginal", "noise", "rho", "offset", "data_seed"),
    "regression": ("degree", "n_samples", "m", "rounds", "solver", "ns_cap", "psi_cap"),
    "classifier": ("n_thresholds", "n_rounding", "n_mean", "n_test", "phi_m", "slack",
                   "partition_slack"),
    "evaluation": ("n_eval", "verify_margin"),
    "attack": ("restarts", "steps", "refine"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    # experiment
    seed: int = 0
    r: float = 0.05
    eps: float = 0.1
    delta: float = 0.1
    out_dir: str = "runs"
    eval_seed: int | None = None  # default: derived from seed
    record_timings: bool = True
    # data
    d: int = 8
    marginal: str = "standard_gaussian"
    noise: str = "random_flip"
    rho: float = 0.05
    offset: float = 0.0
    data_seed: int | None = None  # planted halfspace; default: seed
    # regression
    degree: int = 3
    n_samples: int = 4000
    m: int = 256
    rounds: int | None = None
    solver: str = "auto"
    ns_cap: float | None = None
    psi_cap: float | None = None
    # classifier
    n_thresholds: int | None = None
    n_rounding: int = 2000
    n_mean: int | None = None
    n_test: int = 4000
    phi_m: int = 4096
    slack: float = 4.0
    partition_slack: float = 4.0
    # evaluation
    n_eval: int = 2000
    verify_margin: float = 0.02
    # attack
    restarts: int = 16
    steps: int = 8
    refine: int = 20

    def __post_init__(self):
        for name in ("r", "eps", "delta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.n_eval < 1 or self.n_samples < 1:
            raise ConfigError("sample sizes must be positive")
        if not 0.0 <= self.verify_margin < 0.1:
            raise ConfigError("verify_margin must lie in [0, 0.1)")

    # --- derived objects -----------------------------------------------------
    def data_spec(self) -> DataSpec:
        seed = self.seed if self.data_seed is None else self.data_seed
        return DataSpec(self.d, Halfspace.random(self.d, seed, self.offset), self.marginal,
                        self.noise, self.rho, seed)

    def train_source(self) -> PlantedSource:
        return PlantedSource(self.data_spec(), rng_mod.derive_seed(self.seed, "train"))

    def eval_source(self) -> PlantedSource:
        seed = rng_mod.derive_seed(self.seed, "eval") if self.eval_seed is None else self.eval_seed
        return PlantedSource(self.data_spec(), seed, stream="eval")

    def regression(self) -> RegressionConfig:
        return RegressionConfig(
            degree=self.degree, r=self.r, eps=self.eps, delta=self.delta,
            ns_cap=self.ns_cap, psi_cap=self.psi_cap, n_samples=self.n_samples, m=self.m,
            rounds=self.rounds, seed=rng_mod.derive_seed(self.seed, "regression-stage"),
            solver=self.solver,
        )

    def classifier(self, attempt: int = 0) -> ClassifierConfig:
        return ClassifierConfig(
            r=self.r, eps=self.eps, delta=self.delta, slack=self.slack,
            partition_slack=self.partition_slack, n_thresholds=self.n_thresholds,
            n_eval=self.n_rounding, n_mean=self.n_mean, n_test=self.n_test,
            phi_m=self.phi_m, seed=rng_mod.derive_seed(self.seed, "classifier-stage", attempt),
        )

    def attack_budget(self) -> AttackBudget:
        return AttackBudget(self.restarts, self.steps, self.refine)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # --- files -------------------------------------------------------------------
    def to_dict(self) -> dict:
        flat = dataclasses.asdict(self)
        return {sec: {k: flat[k] for k in keys if flat[k] is not None}
                for sec, keys in SECTIONS.items()}

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {k: sec for sec, keys in SECTIONS.items() for k in keys}
        flat = {}
        for key, value in obj.items():
            if isinstance(value, dict):
                if key not in SECTIONS:
                    raise ConfigError(f"unknown section [{key}]")
                for k, v in value.items():
                    if known.get(k) != key:
                        raise ConfigError(f"unknown key {k!r} in section [{key}]")
                    flat[k] = v
            elif known.get(key) == "experiment":
                flat[key] = value
            else:
                raise ConfigError(f"unknown top-level key {key!r}")
        try:
            return cls(**flat)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".json":
            return cls.from_dict(json.loads(text))
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None

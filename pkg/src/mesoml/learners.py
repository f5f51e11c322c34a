"""Learner registry: name -> training function with its hyperparameters.

Every learner maps a training :class:`Dataset` (raw schema, imputed) to a
model with ``predict_distribution(X)`` over rows in that same schema.
Linear, kernel and neural learners are wrapped so that one-hot encoding
and standardization are fitted on the training rows only.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .dataset import Dataset, Scaling, one_hot_encode, standardize
from .errors import SchemaError
from .linear import (
    KernelSpec, KLRConfig, PegasosConfig, SGDConfig, VotedPerceptronConfig,
    klr_train, pegasos_train, sgd_train, voted_perceptron_train,
)
from .mlp import TrainConfig, mlp_train
from .trees import VFDTConfig, adaboost_m1_train, vfdt_train

PRIOR_EPS = 1e-6

ROSTER = ("sgd", "adaboost", "klr", "mlp", "vp", "vfdt", "zero_rule", "pegasos")


@dataclass(frozen=True)
class ZeroRuleModel:
    """Always predicts the training majority; distribution is the prior."""

    majority: int
    prior: float  # P(class 1), clamped to (eps, 1 - eps)

    def __post_init__(self):
        if not 0.0 < self.prior < 1.0:
            raise ValueError("prior must lie strictly inside (0, 1)")

    def predict_distribution(self, X) -> np.ndarray:
        X = np.asarray(X)
        single = X.ndim == 1
        n = 1 if single else X.shape[0]
        P = np.tile([1.0 - self.prior, self.prior], (n, 1))
        return P[0] if single else P


def zero_rule_train(d: Dataset) -> ZeroRuleModel:
    if d.n == 0:
        raise SchemaError("zero_rule needs at least one training row")
    counts = d.class_counts()
    prior = float(np.clip(counts[1] / d.n, PRIOR_EPS, 1.0 - PRIOR_EPS))
    return ZeroRuleModel(int(counts[1] > counts[0]), prior)


@dataclass(frozen=True)
class Preprocessed:
    """A model trained on encoded, standardized columns."""

    model: Any
    attributes: tuple
    class_attribute: Any
    scaling: Scaling

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        raw = Dataset(self.attributes, X, np.zeros(X.shape[0], dtype=np.int8), self.class_attribute)
        return self.scaling.apply(one_hot_encode(raw)).X

    def predict_distribution(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        P = np.asarray(self.model.predict_distribution(self.transform(X)))
        return P[0] if single else P


def preprocessed(train: Callable[[Dataset], Any]) -> Callable[[Dataset], Preprocessed]:
    def fit(d: Dataset) -> Preprocessed:
        enc = one_hot_encode(d)
        with warnings.catch_warnings():
            # indicator columns are often constant inside one fold
            warnings.simplefilter("ignore", RuntimeWarning)
            scaled, scaling = standardize(enc)
        return Preprocessed(train(scaled), d.attributes, d.class_attribute, scaling)

    return fit


# ---------------------------------------------------------------- registry


def _klr_config(kernel: str = "rbf", gamma: float | None = None, degree: int = 2,
                coef0: float = 1.0, **rest) -> Callable[[int], KLRConfig]:
    """KLR needs the encoded width for its default gamma, so resolve late."""

    def make(p: int) -> KLRConfig:
        if kernel == "rbf":
            spec = KernelSpec.rbf(gamma if gamma is not None else 1.0 / max(p, 1))
        elif kernel in ("poly", "polynomial"):
            spec = KernelSpec.polynomial(degree, coef0)
        elif kernel == "linear":
            spec = KernelSpec.linear()
        else:
            raise ValueError(f"unknown kernel {kernel!r}")
        return KLRConfig(kernel=spec, **rest)

    return make


@dataclass(frozen=True)
class AdaBoostConfig:
    rounds: int = 10


@dataclass(frozen=True)
class ZeroRuleConfig:
    pass


@dataclass(frozen=True)
class KLRSettings:
    kernel: str = "rbf"
    gamma: float | None = None
    degree: int = 2
    coef0: float = 1.0
    lam: float = 1e-5
    max_iter: int = 100


CONFIGS = {
    "sgd": SGDConfig,
    "pegasos": PegasosConfig,
    "vp": VotedPerceptronConfig,
    "klr": KLRSettings,
    "mlp": TrainConfig,
    "adaboost": AdaBoostConfig,
    "vfdt": VFDTConfig,
    "zero_rule": ZeroRuleConfig,
}

SEEDED = ("sgd", "pegasos", "vp", "mlp")


def _coerce(field: dataclasses.Field, raw):
    """Parse an override string into the type of ``field``'s default."""
    if not isinstance(raw, str):
        return raw
    default = field.default
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if field.name == "hidden":
        return tuple(int(v) for v in raw.replace(";", ",").split(",") if v.strip())
    if field.name == "gamma":
        return float(raw)
    return raw


def make_config(name: str, overrides: dict | None = None, seed: int | None = None):
    """Build the config dataclass for ``name`` from string overrides."""
    if name not in CONFIGS:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(ROSTER)}")
    cls = CONFIGS[name]
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kw = {}
    for key, raw in (overrides or {}).items():
        if key not in fields:
            raise ValueError(f"{name}: unknown hyperparameter {key!r}")
        kw[key] = _coerce(fields[key], raw)
    if seed is not None and "seed" in fields and "seed" not in kw:
        kw["seed"] = seed
    return cls(**kw)


def make_learner(name: str, overrides: dict | None = None, seed: int | None = None) -> Callable[[Dataset], Any]:
    """Training function for roster entry ``name``."""
    cfg = make_config(name, overrides, seed)
    if name == "sgd":
        return preprocessed(lambda d: sgd_train(d, cfg))
    if name == "pegasos":
        return preprocessed(lambda d: pegasos_train(d, cfg))
    if name == "vp":
        return preprocessed(lambda d: voted_perceptron_train(d, cfg))
    if name == "mlp":
        return preprocessed(lambda d: mlp_train(d, cfg))
    if name == "klr":
        build = _klr_config(**dataclasses.asdict(cfg))
        return preprocessed(lambda d: klr_train(d, build(d.p)))
    if name == "adaboost":
        return lambda d: adaboost_m1_train(d, cfg.rounds)
    if name == "vfdt":
        return lambda d: vfdt_train(d, cfg)
    return zero_rule_train

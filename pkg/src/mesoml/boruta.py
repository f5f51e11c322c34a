"""All-relevant feature selection with shadow features (Boruta)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import AttributeSpec, Dataset
from .errors import SchemaError
from .trees import ForestConfig, forest_importance, forest_train

CONFIRMED = "Confirmed"
REJECTED = "Rejected"
TENTATIVE = "Tentative"

SHADOW_PREFIX = "shadow_"


@dataclass(frozen=True)
class BorutaConfig:
    max_iter: int = 100
    p_value: float = 0.01
    forest: ForestConfig = ForestConfig()
    seed: int = 0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.p_value < 0.5:
            raise ValueError("p_value must lie in (0, 0.5)")


def shadow_augment(d: Dataset, seed) -> Dataset:
    """Append a row-permuted copy of every predictor."""
    if d.p == 0:
        raise SchemaError("shadow_augment needs at least one predictor")
    rng = np.random.default_rng(seed)
    shadows = np.column_stack([rng.permutation(d.X[:, j]) for j in range(d.p)])
    attrs = list(d.attributes) + [
        replace(a, name=SHADOW_PREFIX + a.name, shadow=True) for a in d.attributes
    ]
    return Dataset(attrs, np.hstack([d.X, shadows]), d.y, d.class_attribute)


@dataclass(frozen=True)
class StepResult:
    hits: np.ndarray
    z: np.ndarray
    shadow_max: float


def boruta_step(d: Dataset, cfg: BorutaConfig, iteration: int = 0) -> StepResult:
    """One shadow-augment / forest / importance round.

    A feature scores a hit when its Z-score beats every shadow's Z-score.
    """
    if d.p == 0:
        raise SchemaError("Boruta needs at least one predictor")
    ss = np.random.SeedSequence([cfg.seed, iteration])
    shadow_seed, forest_seed, perm_seed = (int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(3))
    aug = shadow_augment(d, shadow_seed)
    forest = forest_train(aug, replace(cfg.forest, seed=forest_seed))
    z = forest_importance(forest, aug, perm_seed).z
    real, shadow = z[: d.p], z[d.p:]
    smax = float(shadow.max())
    return StepResult(real > smax, real, smax)


def binomial_two_sided(k: int, n: int) -> float:
    """Exact two-sided binomial test p-value with success probability 1/2."""
    if n == 0:
        return 1.0
    lo = sum(math.comb(n, i) for i in range(0, min(k, n - k) + 1))
    return min(1.0, 2.0 * lo / 2.0 ** n)


@dataclass(frozen=True)
class BorutaResult:
    names: tuple[str, ...]
    decisions: dict
    hits: dict
    trials: dict
    z_history: np.ndarray = field(repr=False)       # iterations x features, NaN once rejected
    shadow_max_history: np.ndarray = field(repr=False)
    iterations: int = 0
    decided_at: dict = field(default_factory=dict)

    def confirmed(self) -> list[str]:
        return [n for n in self.names if self.decisions[n] == CONFIRMED]

    def rejected(self) -> list[str]:
        return [n for n in self.names if self.decisions[n] == REJECTED]

    def tentative(self) -> list[str]:
        return [n for n in self.names if self.decisions[n] == TENTATIVE]

    def median_z(self, name: str) -> float:
        col = self.z_history[:, self.names.index(name)]
        col = col[~np.isnan(col)]
        return float(np.median(col)) if col.size else float("nan")

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "decision", "median_z", "hits", "trials"])
            for n in self.names:
                w.writerow([n, self.decisions[n], repr(self.median_z(n)), self.hits[n], self.trials[n]])


def boruta_run(d: Dataset, cfg: BorutaConfig = BorutaConfig()) -> BorutaResult:
    """Iterate :func:`boruta_step`, deciding features by a binomial test.

    After every iteration each Tentative feature is tested against a hit
    probability of 1/2; significantly many hits confirm it, significantly
    few reject it. Rejected features leave the pool; Confirmed ones stay
    as competitors. Stops when nothing is Tentative or at ``max_iter``.
    """
    if d.p == 0:
        raise SchemaError("Boruta needs at least one predictor")
    names = tuple(d.names)
    decisions = {n: TENTATIVE for n in names}
    hits = {n: 0 for n in names}
    trials = {n: 0 for n in names}
    decided_at = {}
    z_hist, smax_hist = [], []
    it = 0
    for it in range(1, cfg.max_iter + 1):
        active = [n for n in names if decisions[n] != REJECTED]
        step = boruta_step(d.select(active), cfg, it)
        row = np.full(len(names), np.nan)
        for n, h, z in zip(active, step.hits, step.z):
            row[names.index(n)] = z
            trials[n] += 1
            hits[n] += int(h)
        z_hist.append(row)
        smax_hist.append(step.shadow_max)
        for n in active:
            if decisions[n] != TENTATIVE:
                continue
            if binomial_two_sided(hits[n], trials[n]) < cfg.p_value:
                decisions[n] = CONFIRMED if 2 * hits[n] > trials[n] else REJECTED
                decided_at[n] = it
        if all(v != TENTATIVE for v in decisions.values()):
            break
    return BorutaResult(
        names, decisions, hits, trials,
        np.array(z_hist), np.array(smax_hist), it, decided_at,
    )

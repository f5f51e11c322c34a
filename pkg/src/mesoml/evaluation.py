"""Confusion-matrix metrics, ROC/PRC areas, cross-validation and the
corrected resampled paired t-test."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.stats import rankdata

from .dataset import Dataset, FoldPlan
from .errors import FoldError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(predictions, truths, positive=1) -> ConfusionMatrix:
    pred = np.asarray(predictions)
    true = np.asarray(truths)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("empty evaluation")
    pp = pred == positive
    tp_ = true == positive
    return ConfusionMatrix(
        tp=int(np.sum(pp & tp_)),
        tn=int(np.sum(~pp & ~tp_)),
        fp=int(np.sum(pp & ~tp_)),
        fn=int(np.sum(~pp & tp_)),
    )


@dataclass(frozen=True)
class BasicMetrics:
    accuracy: float
    precision: float
    recall: float
    f_measure: float
    undefined: frozenset = frozenset()


def basic_metrics(c: ConfusionMatrix) -> BasicMetrics:
    """Accuracy, precision, recall and F1; a 0/0 ratio yields 0 and is
    named in ``undefined``."""
    if c.total <= 0:
        raise ValueError("confusion matrix is empty")
    undefined = set()

    def ratio(num, den, name):
        if den == 0:
            undefined.add(name)
            return 0.0
        return num / den

    acc = (c.tp + c.tn) / c.total
    prec = ratio(c.tp, c.tp + c.fp, "precision")
    rec = ratio(c.tp, c.tp + c.fn, "recall")
    f = ratio(2 * prec * rec, prec + rec, "f_measure")
    return BasicMetrics(acc, prec, rec, f, frozenset(undefined))


def rmse(scores, truths) -> float:
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {t.shape}")
    if s.size == 0:
        raise ValueError("empty evaluation")
    return math.sqrt(float(np.mean((s - t) ** 2)))


def _binary(scores, truths):
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truths).astype(bool)
    if s.shape != t.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {t.shape}")
    return s, t


def roc_auc(scores, truths) -> float:
    """Mann-Whitney estimate P(s+ > s-) + P(s+ = s-)/2 from average ranks."""
    s, t = _binary(scores, truths)
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both classes")
    ranks = rankdata(s)
    u = ranks[t].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def prc_auc(scores, truths) -> float:
    """Average precision: sum over distinct descending thresholds of
    (recall gain) x (precision at that threshold)."""
    s, t = _binary(scores, truths)
    n_pos = int(t.sum())
    if n_pos == 0:
        raise ValueError("PRC AUC needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s, t = s[order], t[order]
    tp = np.cumsum(t)
    fp = np.cumsum(~t)
    last = np.r_[s[1:] != s[:-1], True]  # final position of each tied group
    tp, fp = tp[last], fp[last]
    recall = tp / n_pos
    precision = tp / (tp + fp)
    gain = np.diff(np.r_[0.0, recall])
    return float(np.sum(gain * precision))


# ---------------------------------------------------------------- CV


@dataclass(frozen=True)
class EvalReport:
    model: str
    accuracy: float
    f_measure: float
    recall: float
    precision: float
    roc_auc: float
    prc_auc: float
    rmse: float
    fold_accuracy: tuple[float, ...] = ()
    fold_sizes: tuple[int, ...] = ()
    seed: int = 0
    confusion: ConfusionMatrix | None = None
    undefined: frozenset = frozenset()

    METRICS = ("accuracy", "f_measure", "recall", "precision", "roc_auc", "prc_auc", "rmse")

    def metrics(self) -> dict[str, float]:
        return {m: getattr(self, m) for m in self.METRICS}


def predicted_labels(P: np.ndarray) -> np.ndarray:
    """Argmax of a (n, 2) distribution; exact ties go to class 1."""
    return (P[:, 1] >= P[:, 0]).astype(np.int8)


def evaluate_predictions(name, P, truths, positive=0, seed=0, fold_accuracy=(), fold_sizes=()) -> EvalReport:
    truths = np.asarray(truths)
    pred = predicted_labels(P)
    cm = confusion(pred, truths, positive)
    bm = basic_metrics(cm)
    score = P[:, positive]
    is_pos = (truths == positive).astype(np.float64)
    try:
        roc = roc_auc(score, is_pos)
    except ValueError:
        roc = float("nan")
    try:
        prc = prc_auc(score, is_pos)
    except ValueError:
        prc = float("nan")
    return EvalReport(
        name, bm.accuracy, bm.f_measure, bm.recall, bm.precision, roc, prc,
        rmse(score, is_pos), tuple(fold_accuracy), tuple(fold_sizes), seed, cm, bm.undefined,
    )


def cross_validate(learner: Callable[[Dataset], object], d: Dataset, plan: FoldPlan,
                   name: str = "model", positive: int = 0, workers: int = 1) -> EvalReport:
    """k-fold evaluation with pooled held-out predictions.

    ``learner`` maps a training :class:`Dataset` to a fitted model exposing
    ``predict_distribution(X)``; it sees only training-fold rows, so any
    preprocessing it fits cannot observe the test fold. Metrics use
    ``positive`` (a class index) as the positive class. Per-fold accuracy
    is kept for paired tests.
    """
    if plan.assignment.shape != (d.n,):
        raise ValueError("fold plan was built for a different dataset")

    def run(fold):
        train_idx, test_idx = plan.train_indices(fold), plan.test_indices(fold)
        try:
            model = learner(d.subset(train_idx))
            test = d.subset(test_idx)
            P = np.asarray(model.predict_distribution(test.X), dtype=np.float64)
        except Exception as exc:
            raise FoldError(fold, exc) from exc
        if P.shape != (len(test_idx), 2) or not np.isfinite(P).all():
            raise FoldError(fold, "learner returned an invalid class distribution")
        return test_idx, P

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(plan.k)))
    else:
        results = [run(f) for f in range(plan.k)]

    P_all = np.empty((d.n, 2))
    fold_acc, sizes = [], []
    for test_idx, P in results:
        P_all[test_idx] = P
        fold_acc.append(float(np.mean(predicted_labels(P) == d.y[test_idx])))
        sizes.append(len(test_idx))
    return evaluate_predictions(name, P_all, d.y, positive, plan.seed, fold_acc, sizes)


# ---------------------------------------------------------------- t-test


def _betacf(a, b, x, max_iter=500, eps=1e-16):
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            break
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with ``df`` degrees of freedom."""
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    return min(1.0, betainc_regularized(df / 2.0, 0.5, df / (df + t * t)))


@dataclass(frozen=True)
class TTestResult:
    mean_difference: float
    variance: float
    corrected_variance: float
    variance_multiplier: float
    t: float
    df: int
    p_value: float
    significant: bool
    alpha: float


def variance_multiplier(k: int, n_train, n_test) -> float:
    """1/k + n_test/n_train, computed exactly for rational inputs."""
    try:
        return float(Fraction(1, k) + Fraction(n_test) / Fraction(n_train))
    except (TypeError, ValueError):
        return 1.0 / k + float(n_test) / float(n_train)


def corrected_paired_ttest(a, b, n_train, n_test, alpha: float = 0.05) -> TTestResult:
    """Paired t-test on per-fold scores with the resampled-variance correction.

    t = mean(d) / sqrt(var(d) * (1/k + n_test/n_train)), df = k - 1.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    k = a.size
    if k < 2:
        raise ValueError("need at least 2 paired scores")
    diff = a - b
    mean = float(diff.mean())
    var = float(diff.var(ddof=1))
    mult = variance_multiplier(k, n_train, n_test)
    cvar = var * mult
    df = k - 1
    if cvar == 0.0:
        if mean == 0.0:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, mean), 0.0
    else:
        t = mean / math.sqrt(cvar)
        p = student_t_two_sided_p(t, df)
    return TTestResult(mean, var, cvar, mult, t, df, p, p < alpha, alpha)


def cv_sizes(n: int, k: int) -> tuple[Fraction, Fraction]:
    """Average (n_train, n_test) for k-fold CV on n rows."""
    n_test = Fraction(n, k)
    return n - n_test, n_test

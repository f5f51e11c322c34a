"""Decision stumps, AdaBoost.M1, random forests and the Hoeffding tree.

These learners read nominal attributes natively from a :class:`Dataset`
(category index codes), so they need no one-hot encoding.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .dataset import Dataset
from .errors import SchemaError

_TIE = 1e-12


def _check_no_missing(d: Dataset):
    if np.isnan(d.X).any():
        raise SchemaError("tree learners need a dataset without missing values (impute first)")


def _pair(p1):
    p1 = np.asarray(p1, dtype=np.float64)
    return np.stack([1.0 - p1, p1], axis=-1)


# ---------------------------------------------------------------- stump


@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float = math.inf
    left_categories: frozenset | None = None
    left_label: int = 1
    right_label: int = 0
    error: float = 0.0

    def goes_left(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=np.float64)[..., self.feature]
        if self.left_categories is not None:
            return np.isin(x, list(self.left_categories))
        return x <= self.threshold

    def predict(self, X) -> np.ndarray:
        return np.where(self.goes_left(X), self.left_label, self.right_label).astype(np.int8)


def stump_train(d: Dataset, weights) -> Stump:
    """Exhaustive search for the stump with least weighted 0-1 error.

    Numeric attributes split at midpoints between consecutive distinct
    values; nominal attributes send every category whose class-1 weight
    exceeds its class-0 weight to the left (class 1) branch, which is the
    optimal subset. Ties go to the lowest feature index, then the lowest
    threshold.
    """
    _check_no_missing(d)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (d.n,) or (w < 0).any():
        raise ValueError("weights must be a nonnegative vector with one entry per row")
    y = d.y
    w1 = np.where(y == 1, w, 0.0)
    w0 = w - w1
    W0, W1 = w0.sum(), w1.sum()
    best = Stump(-1, math.inf, None, 1 if W1 >= W0 else 0, 1 if W1 >= W0 else 0, float(min(W0, W1)))
    best_err = math.inf
    for j, a in enumerate(d.attributes):
        x = d.X[:, j]
        if a.is_nominal:
            codes = x.astype(np.intp)
            c0 = np.bincount(codes, w0, minlength=len(a.categories))
            c1 = np.bincount(codes, w1, minlength=len(a.categories))
            err = float(np.minimum(c0, c1).sum())
            if err < best_err - _TIE:
                left = frozenset(int(c) for c in np.flatnonzero(c1 > c0))
                best_err = err
                best = Stump(j, math.nan, left, 1, 0, err)
            continue
        order = np.argsort(x, kind="stable")
        xs = x[order]
        L0 = np.cumsum(w0[order])
        L1 = np.cumsum(w1[order])
        errs = np.minimum(L0, L1) + np.minimum(W0 - L0, W1 - L1)
        cand = np.flatnonzero(xs[:-1] != xs[1:])
        if cand.size == 0:
            err, k, thr = float(min(W0, W1)), len(xs) - 1, math.inf
        else:
            e = errs[cand]
            k = int(cand[np.flatnonzero(e <= e.min() + _TIE)[0]])
            err = float(errs[k])
            thr = 0.5 * (xs[k] + xs[k + 1])
        if err < best_err - _TIE:
            l0, l1 = L0[k], L1[k]
            r0, r1 = W0 - l0, W1 - l1
            best_err = err
            best = Stump(j, thr, None, 1 if l1 >= l0 else 0, 1 if r1 >= r0 else 0, err)
    return best


# ---------------------------------------------------------------- AdaBoost.M1


@dataclass(frozen=True)
class BoostEnsemble:
    stumps: tuple[Stump, ...]
    alphas: tuple[float, ...]
    errors: tuple[float, ...]
    prior: float = 0.5
    misclassified_mass: tuple[float, ...] = ()

    @property
    def rounds(self) -> int:
        return len(self.stumps)

    def vote(self, X, rounds: int | None = None) -> np.ndarray:
        """Signed vote sum_t alpha_t h_t(x), with h in {-1, +1}."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        F = np.zeros(X.shape[0])
        for s, a in list(zip(self.stumps, self.alphas))[:rounds]:
            F += a * (2.0 * s.predict(X) - 1.0)
        return F

    def predict_distribution(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        if not self.stumps:
            n = 1 if single else np.asarray(X).shape[0]
            P = _pair(np.full(n, self.prior))
        else:
            P = _pair(expit(self.vote(X)))
        return P[0] if single else P


def alpha_for(eps: float) -> float:
    eps = min(max(eps, 1e-10), 1.0 - 1e-10)
    return 0.5 * math.log((1.0 - eps) / eps)


def adaboost_m1_train(d: Dataset, rounds: int = 10) -> BoostEnsemble:
    """AdaBoost.M1 over decision stumps with reweighting.

    A perfect stump (error 0) is kept and ends training; a stump with error
    >= 0.5 is discarded and ends training. If the very first stump is
    discarded the model falls back to the training class prior.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    _check_no_missing(d)
    n = d.n
    w = np.full(n, 1.0 / n)
    y = d.y
    stumps, alphas, errors, masses = [], [], [], []
    for _ in range(rounds):
        s = stump_train(d, w)
        miss = s.predict(d.X) != y
        eps = math.fsum(w[miss])
        if eps >= 0.5:
            break
        a = alpha_for(eps)
        stumps.append(s)
        alphas.append(a)
        errors.append(eps)
        if eps == 0.0:
            break
        w = w * np.where(miss, math.exp(a), math.exp(-a))
        w /= math.fsum(w)
        masses.append(math.fsum(w[miss]))
    prior = (float(y.sum()) + 1.0) / (n + 2.0)
    if not stumps:
        warnings.warn("AdaBoost.M1: first stump no better than chance, using class prior", RuntimeWarning)
    return BoostEnsemble(tuple(stumps), tuple(alphas), tuple(errors), prior, tuple(masses))


def exponential_error(model: BoostEnsemble, d: Dataset, rounds: int | None = None) -> float:
    """Mean of exp(-y F_t(x)) over the training rows, y in {-1, +1}."""
    ypm = 2.0 * d.y - 1.0
    return float(np.mean(np.exp(-ypm * model.vote(d.X, rounds))))


def training_error(model: BoostEnsemble, d: Dataset, rounds: int | None = None) -> float:
    """0-1 error of the first ``rounds`` stumps (sign(0) counts as class 1)."""
    pred = (model.vote(d.X, rounds) >= 0.0).astype(np.int8)
    return float(np.mean(pred != d.y))


# ---------------------------------------------------------------- forest


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    bootstrap: np.ndarray = field(repr=False)
    oob: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        leaf = _kernels.tree_apply(self.feature, self.threshold, self.left, self.right, X)
        return (self.value[leaf] >= 0.5).astype(np.int8)


def grow_tree(X, y, rows, mtry, rng, min_node=2, rank=None):
    """Grow an unpruned Gini tree on ``rows`` (a sorted bootstrap multiset).

    Each node that may split draws ``mtry`` candidate features without
    replacement; the draws come from one block of uniform keys per tree.
    Returns ``(feature, threshold, left, right, value)``.
    """
    if rank is None:
        rank = _kernels.column_ranks(X)
    rows = np.ascontiguousarray(rows, dtype=np.intp)
    keys = rng.random((2 * np.unique(rows).size + 1, X.shape[1]))
    *parts, _ = _kernels.grow_tree(X, y, rank, rows, keys, int(mtry), int(min_node))
    return tuple(parts)


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    mtry: int | None = None  # None -> ceil(sqrt(p))
    seed: int = 0
    min_node: int = 2


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    n_features: int
    mtry: int
    seed: int

    def votes(self, X) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def predict_distribution(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        P = _pair(self.votes(X))
        return P[0] if single else P

    def oob_accuracy(self, d: Dataset) -> float:
        """Accuracy of the out-of-bag majority vote over rows with any OOB tree."""
        X = np.ascontiguousarray(d.X)
        s = np.zeros(d.n)
        c = np.zeros(d.n)
        for t in self.trees:
            if t.oob.size:
                s[t.oob] += t.predict(X[t.oob])
                c[t.oob] += 1
        ok = c > 0
        pred = (s[ok] / c[ok] >= 0.5).astype(np.int8)
        return float(np.mean(pred == d.y[ok]))


def forest_train(d: Dataset, cfg: ForestConfig = ForestConfig()) -> Forest:
    """Random forest of bootstrap Gini trees, one seeded stream per tree.

    Nominal attributes are split on their category codes as if ordered.
    """
    if cfg.n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    _check_no_missing(d)
    if d.p == 0:
        raise SchemaError("forest needs at least one predictor")
    X = np.ascontiguousarray(d.X, dtype=np.float64)
    y = np.ascontiguousarray(d.y, dtype=np.int8)
    mtry = cfg.mtry or math.ceil(math.sqrt(d.p))
    rank = _kernels.column_ranks(X)
    trees = []
    for b in range(cfg.n_trees):
        rng = np.random.default_rng([cfg.seed, b])
        boot = rng.integers(0, d.n, size=d.n).astype(np.intp)
        inbag = np.zeros(d.n, dtype=bool)
        inbag[boot] = True
        parts = grow_tree(X, y, np.sort(boot), mtry, rng, cfg.min_node, rank)
        trees.append(Tree(*parts, bootstrap=boot, oob=np.flatnonzero(~inbag)))
    return Forest(tuple(trees), d.p, mtry, cfg.seed)


@dataclass(frozen=True)
class Importance:
    z: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    per_tree: np.ndarray = field(repr=False)


def _default_permute(rng, k, m):
    """``k`` independent permutations of range(m), one per row."""
    return rng.permuted(np.tile(np.arange(m, dtype=np.intp), (k, 1)), axis=1)


def forest_importance(f: Forest, d: Dataset, seed: int, permute=None) -> Importance:
    """Permutation importance per tree on its out-of-bag rows, as Z-scores.

    Importance of feature j in tree b is OOB accuracy minus OOB accuracy
    after permuting column j among the OOB rows; Z is the mean over trees
    divided by its standard error. Features no tree splits on get Z = 0.
    ``permute(rng, k, m)`` supplies the k row permutations of the m OOB
    rows used for one tree.
    """
    B = len(f.trees)
    if B < 2:
        raise ValueError("need at least 2 trees for a standard error")
    if d.p != f.n_features:
        raise SchemaError("dataset does not match the forest's schema")
    permute = permute or _default_permute
    rng = np.random.default_rng(seed)
    X = np.ascontiguousarray(d.X, dtype=np.float64)
    y = np.ascontiguousarray(d.y, dtype=np.int8)
    imp = np.zeros((B, d.p))
    used_any = np.zeros(d.p, dtype=bool)
    for b, t in enumerate(f.trees):
        used = t.used_features()
        used_any[used] = True
        if t.oob.size == 0:
            continue
        m = t.oob.size
        perms = np.ascontiguousarray(permute(rng, len(used), m), dtype=np.intp)
        base, hit = _kernels.oob_permutation_correct(
            t.feature, t.threshold, t.left, t.right, t.value, X, y, t.oob, used.astype(np.intp), perms)
        imp[b, used] = (base - hit) / m
    mean = imp.mean(axis=0)
    sd = imp.std(axis=0, ddof=1)
    se = sd / math.sqrt(B)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, mean / se, np.where(mean == 0, 0.0, np.copysign(np.inf, mean)))
    z[~used_any] = 0.0
    return Importance(z, mean, sd, imp)


# ---------------------------------------------------------------- Hoeffding tree


def hoeffding_bound(R: float, delta: float, n: int) -> float:
    """sqrt(R^2 ln(1/delta) / (2n))."""
    if not R > 0:
        raise ValueError("R must be > 0")
    if not 0 < delta <= 1:
        raise ValueError("delta must be in (0, 1]")
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(R * R * math.log(1.0 / delta) / (2.0 * n))


def _entropy(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    tot = counts.sum()
    if tot <= 0:
        return 0.0
    p = counts[counts > 0] / tot
    return float(-(p * np.log2(p)).sum())


def _split_entropy(table) -> float:
    """Weighted child entropy for a (branches x classes) count table."""
    tot = table.sum()
    if tot <= 0:
        return 0.0
    return sum(row.sum() / tot * _entropy(row) for row in table if row.sum() > 0)


class _Leaf:
    __slots__ = ("counts", "nominal", "numeric", "n_stats", "since_eval", "candidates")

    def __init__(self, attrs, candidates, counts=None):
        self.counts = np.zeros(2) if counts is None else np.asarray(counts, dtype=np.float64)
        self.candidates = candidates
        self.nominal = {j: np.zeros((len(attrs[j].categories), 2)) for j in candidates if attrs[j].is_nominal}
        self.numeric = {j: ([], []) for j in candidates if not attrs[j].is_nominal}
        self.n_stats = 0
        self.since_eval = 0


class _Split:
    __slots__ = ("attribute", "threshold", "children")

    def __init__(self, attribute, threshold, children):
        self.attribute = attribute
        self.threshold = threshold
        self.children = children


@dataclass(frozen=True)
class VFDTConfig:
    delta: float = 1e-7
    tau: float = 0.05
    n_min: int = 200
    bins: int = 10


def _apportion(total: float, shares) -> np.ndarray:
    """Split an integer count over children in proportion to ``shares``
    (largest remainder, so the parts sum exactly to ``total``)."""
    shares = np.asarray(shares, dtype=np.float64)
    if total <= 0:
        return np.zeros_like(shares)
    if shares.sum() <= 0:
        out = np.zeros_like(shares)
        out[0] = total
        return out
    raw = total * shares / shares.sum()
    base = np.floor(raw)
    rest = int(round(total - base.sum()))
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:rest]] += 1
    return base


class HoeffdingTree:
    """Incremental decision tree that splits once the Hoeffding bound
    separates the best attribute's information gain from the runner-up.

    Numeric attributes are binned per leaf into ``bins`` equal-width bins
    over the range seen at that leaf; the split is the best bin edge.
    """

    def __init__(self, attributes, cfg: VFDTConfig = VFDTConfig()):
        self.attributes = tuple(attributes)
        self.cfg = cfg
        self.root = _Leaf(self.attributes, tuple(range(len(self.attributes))))
        self.n_observed = 0

    # -- routing

    def _route(self, node, x):
        while isinstance(node, _Split):
            a = self.attributes[node.attribute]
            v = x[node.attribute]
            if a.is_nominal:
                k = int(v) if not math.isnan(v) else int(np.argmax([_node_total(c) for c in node.children]))
                node = node.children[k]
            else:
                node = node.children[0 if v <= node.threshold else 1]
        return node

    def leaves(self):
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, _Split):
                stack.extend(node.children)
            else:
                out.append(node)
        return out

    @property
    def root_attribute(self) -> int | None:
        return self.root.attribute if isinstance(self.root, _Split) else None

    @property
    def n_nodes(self) -> int:
        n, stack = 0, [self.root]
        while stack:
            node = stack.pop()
            n += 1
            if isinstance(node, _Split):
                stack.extend(node.children)
        return n

    # -- learning

    def update(self, x, label: int) -> "HoeffdingTree":
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (len(self.attributes),):
            raise SchemaError(f"expected {len(self.attributes)} values, got {x.shape}")
        leaf = self._route(self.root, x)
        label = int(label)
        leaf.counts[label] += 1
        leaf.n_stats += 1
        leaf.since_eval += 1
        for j, table in leaf.nominal.items():
            if not math.isnan(x[j]):
                table[int(x[j]), label] += 1
        for j, (vals, labs) in leaf.numeric.items():
            if not math.isnan(x[j]):
                vals.append(x[j])
                labs.append(label)
        self.n_observed += 1
        if leaf.since_eval >= self.cfg.n_min:
            leaf.since_eval = 0
            self._attempt_split(leaf)
        return self

    def _gains(self, leaf):
        """Per candidate attribute: (gain, threshold or None, child class table)."""
        out = {}
        for j, table in leaf.nominal.items():
            tot = table.sum(axis=0)
            out[j] = (_entropy(tot) - _split_entropy(table), None, table.copy())
        for j, (vals, labs) in leaf.numeric.items():
            if not vals:
                out[j] = (0.0, None, None)
                continue
            v = np.asarray(vals)
            lab = np.asarray(labs)
            tot = np.bincount(lab, minlength=2).astype(np.float64)
            lo, hi = v.min(), v.max()
            if hi <= lo:
                out[j] = (0.0, None, None)
                continue
            h = _entropy(tot)
            best = (0.0, None, None)
            for k in range(1, self.cfg.bins):
                edge = lo + (hi - lo) * k / self.cfg.bins
                left = np.bincount(lab[v <= edge], minlength=2).astype(np.float64)
                table = np.stack([left, tot - left])
                g = h - _split_entropy(table)
                if g > best[0] + _TIE:
                    best = (g, edge, table)
            out[j] = best
        return out

    def _attempt_split(self, leaf):
        gains = self._gains(leaf)
        if not gains:
            return
        ranked = sorted(gains.items(), key=lambda kv: (-kv[1][0], kv[0]))
        j, (g_best, thr, table) = ranked[0]
        g_second = ranked[1][1][0] if len(ranked) > 1 else 0.0
        if g_best <= 0 or table is None:
            return
        eps = hoeffding_bound(1.0, self.cfg.delta, leaf.n_stats)
        if not (g_best - g_second > eps or eps < self.cfg.tau):
            return
        self._split(leaf, j, thr, table)

    def _split(self, leaf, j, thr, table):
        a = self.attributes[j]
        candidates = tuple(c for c in leaf.candidates if not (a.is_nominal and c == j))
        # counts the leaf inherited before its own statistics started
        residual = leaf.counts - table.sum(axis=0)
        child_counts = table.copy()
        for c in (0, 1):
            child_counts[:, c] += _apportion(residual[c], table[:, c])
        children = [_Leaf(self.attributes, candidates, child_counts[k]) for k in range(table.shape[0])]
        node = _Split(j, thr, children)
        self._replace(leaf, node)

    def _replace(self, old, new):
        if self.root is old:
            self.root = new
            return
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, _Split):
                for k, c in enumerate(node.children):
                    if c is old:
                        node.children[k] = new
                        return
                    stack.append(c)

    # -- prediction

    def predict_distribution(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        rows = X.reshape(1, -1) if single else X
        out = np.empty((rows.shape[0], 2))
        for i, x in enumerate(rows):
            c = self._route(self.root, x).counts
            out[i] = (c + 1.0) / (c.sum() + 2.0)
        return out[0] if single else out


def _node_total(node) -> float:
    if isinstance(node, _Split):
        return sum(_node_total(c) for c in node.children)
    return float(node.counts.sum())


def vfdt_update(tree: HoeffdingTree, instance, label) -> HoeffdingTree:
    return tree.update(instance, label)


def vfdt_train(d: Dataset, cfg: VFDTConfig = VFDTConfig()) -> HoeffdingTree:
    """Stream the rows of ``d`` in order through a fresh Hoeffding tree."""
    tree = HoeffdingTree(d.attributes, cfg)
    for x, label in zip(d.X, d.y):
        tree.update(x, label)
    return tree


def tree_predict_distribution(model, instance) -> np.ndarray:
    return model.predict_distribution(instance)

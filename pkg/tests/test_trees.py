import itertools
import math

import numpy as np
import pytest

from mesoml.errors import SchemaError
from mesoml.trees import (
    ForestConfig, HoeffdingTree, VFDTConfig, adaboost_m1_train, alpha_for, exponential_error,
    forest_importance, forest_train, hoeffding_bound, stump_train, training_error, vfdt_train,
)

from conftest import gaussian_blobs, make_dataset


# ---------------------------------------------------------------- stump


def brute_force_stump_error(d, w):
    """Least weighted error over every threshold/subset and label pair."""
    best = min(w[d.y == 0].sum(), w[d.y == 1].sum())
    for j, a in enumerate(d.attributes):
        x = d.X[:, j]
        if a.is_nominal:
            cats = range(len(a.categories))
            masks = [np.isin(x, s) for r in range(len(a.categories) + 1)
                     for s in itertools.combinations(cats, r)]
        else:
            vals = np.unique(x)
            masks = [x <= t for t in (vals[:-1] + vals[1:]) / 2]
        for left in masks:
            for ll, rl in itertools.product((0, 1), repeat=2):
                pred = np.where(left, ll, rl)
                best = min(best, w[pred != d.y].sum())
    return best


@pytest.mark.parametrize("seed", range(8))
def test_stump_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = 15
    X = np.column_stack([rng.integers(0, 5, n), rng.normal(size=n), rng.integers(0, 3, n)])
    y = rng.integers(0, 2, n)
    d = make_dataset(X, y, nominal={2: ("a", "b", "c")})
    w = rng.random(n)
    s = stump_train(d, w)
    assert s.error == pytest.approx(brute_force_stump_error(d, w), abs=1e-12)
    assert w[s.predict(d.X) != y].sum() == pytest.approx(s.error, abs=1e-12)


def test_stump_rejects_bad_weights(blobs):
    with pytest.raises(ValueError):
        stump_train(blobs, -np.ones(blobs.n))


def test_stump_rejects_missing():
    d = make_dataset([[np.nan], [1.0]], [0, 1])
    with pytest.raises(SchemaError):
        stump_train(d, np.ones(2))


# ---------------------------------------------------------------- AdaBoost.M1


def noisy_dataset(seed, n=80):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    y = ((X[:, 0] + 0.5 * X[:, 1] + rng.normal(scale=0.8, size=n)) > 0).astype(int)
    return make_dataset(X, y)


@pytest.mark.parametrize("seed", range(5))
def test_adaboost_reweighting_halves_mass(seed):
    model = adaboost_m1_train(noisy_dataset(seed), rounds=10)
    assert model.misclassified_mass
    assert np.allclose(model.misclassified_mass, 0.5, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_adaboost_exponential_error_is_product_bound(seed):
    d = noisy_dataset(seed)
    model = adaboost_m1_train(d, rounds=10)
    prev = 1.0
    bound = 1.0
    for t, eps in enumerate(model.errors, start=1):
        bound *= 2.0 * math.sqrt(eps * (1.0 - eps))
        e = exponential_error(model, d, t)
        assert e == pytest.approx(bound, rel=1e-9)
        assert e <= prev + 1e-12
        assert training_error(model, d, t) <= e
        prev = e


def test_adaboost_stops_on_perfect_stump():
    d = make_dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
    model = adaboost_m1_train(d, rounds=10)
    assert model.rounds == 1 and model.errors == (0.0,)
    assert np.array_equal(model.predict_distribution(d.X).argmax(axis=1), d.y)


def test_adaboost_falls_back_to_prior():
    d = make_dataset([[1.0], [1.0], [1.0], [1.0]], [0, 1, 0, 1])
    with pytest.warns(RuntimeWarning):
        model = adaboost_m1_train(d, rounds=5)
    assert model.rounds == 0
    assert np.allclose(model.predict_distribution(d.X), 0.5)


def test_alpha_symmetry():
    assert alpha_for(0.5) == pytest.approx(0.0)
    assert alpha_for(0.1) == pytest.approx(-alpha_for(0.9))


# ---------------------------------------------------------------- forest


def test_forest_deterministic(blobs):
    cfg = ForestConfig(n_trees=10, seed=4)
    a, b = forest_train(blobs, cfg), forest_train(blobs, cfg)
    for ta, tb in zip(a.trees, b.trees):
        assert np.array_equal(ta.feature, tb.feature)
        assert np.array_equal(ta.threshold, tb.threshold)
    assert np.array_equal(a.votes(blobs.X), b.votes(blobs.X))


def test_forest_learns_separable_blobs():
    d = gaussian_blobs(n=200, shift=3.0)
    f = forest_train(d, ForestConfig(n_trees=30))
    assert f.oob_accuracy(d) > 0.95
    assert f.mtry == 2


def test_tree_leaves_are_pure_on_training_rows(blobs):
    f = forest_train(blobs, ForestConfig(n_trees=3, min_node=1))
    for t in f.trees:
        rows = np.unique(t.bootstrap)
        assert np.array_equal(t.predict(blobs.X[rows]), blobs.y[rows])


def test_identity_permutation_gives_zero_importance(blobs):
    f = forest_train(blobs, ForestConfig(n_trees=12))
    imp = forest_importance(f, blobs, seed=0, permute=lambda rng, k, m: np.tile(np.arange(m), (k, 1)))
    assert np.all(imp.per_tree == 0.0)
    assert np.all(imp.z == 0.0)


def test_importance_ranks_signal_first():
    d = gaussian_blobs(n=200, p=4, shift=1.5, seed=2)
    f = forest_train(d, ForestConfig(n_trees=40))
    imp = forest_importance(f, d, seed=1)
    assert int(np.argmax(imp.z)) == 0
    assert imp.z[0] > 3.0


def test_importance_needs_two_trees(blobs):
    f = forest_train(blobs, ForestConfig(n_trees=1))
    with pytest.raises(ValueError):
        forest_importance(f, blobs, seed=0)


# ---------------------------------------------------------------- Hoeffding tree


def test_hoeffding_bound_value():
    assert hoeffding_bound(1.0, 1e-7, 1000) == pytest.approx(0.08977, abs=5e-6)


@pytest.mark.parametrize("args", [(0.0, 0.1, 10), (1.0, 0.0, 10), (1.0, 0.1, 0)])
def test_hoeffding_bound_domain(args):
    with pytest.raises(ValueError):
        hoeffding_bound(*args)


def labeled_stream(seed, n=10000, target=2):
    """Nominal and numeric attributes; the label is a function of ``target``."""
    rng = np.random.default_rng(seed)
    X = np.column_stack([
        rng.integers(0, 3, n), rng.normal(size=n), rng.integers(0, 2, n), rng.uniform(size=n),
    ]).astype(float)
    y = X[:, target].astype(int)
    d = make_dataset(X, y, nominal={0: ("a", "b", "c"), 2: ("no", "yes")})
    return d


def test_vfdt_root_is_labeling_attribute():
    hits = sum(vfdt_train(labeled_stream(s)).root_attribute == 2 for s in range(20))
    assert hits >= 19


def test_vfdt_numeric_threshold():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(2000, 1))
    d = make_dataset(x, (x[:, 0] > 0.5).astype(int))
    tree = vfdt_train(d)
    assert tree.root_attribute == 0
    assert tree.root.threshold == pytest.approx(0.5, abs=0.1)


def test_vfdt_counts_conserved():
    base = labeled_stream(1, n=10000)
    y = ((base.X[:, 2] == 1) | (base.X[:, 3] > 0.5)).astype(int)
    d = make_dataset(base.X, y, nominal={0: ("a", "b", "c"), 2: ("no", "yes")})
    tree = vfdt_train(d, VFDTConfig(n_min=50))
    total = sum(leaf.counts.sum() for leaf in tree.leaves())
    assert total == tree.n_observed == d.n
    assert tree.n_nodes >= 4


def test_vfdt_rejects_wrong_width(blobs):
    tree = HoeffdingTree(blobs.attributes)
    with pytest.raises(SchemaError):
        tree.update(np.zeros(blobs.p + 1), 0)


def test_vfdt_distribution_is_laplace_smoothed(blobs):
    tree = HoeffdingTree(blobs.attributes)
    assert np.allclose(tree.predict_distribution(blobs.X[0]), [0.5, 0.5])
    tree.update(blobs.X[0], 1)
    assert np.allclose(tree.predict_distribution(blobs.X[0]), [1 / 3, 2 / 3])


def test_vfdt_does_not_split_on_noise_without_tie_breaking():
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.integers(0, 2, 10000), rng.normal(size=10000)]).astype(float)
    d = make_dataset(X, rng.integers(0, 2, 10000), nominal={0: ("a", "b")})
    assert vfdt_train(d, VFDTConfig(tau=0.0)).root_attribute is None


def test_vfdt_grace_period():
    d = labeled_stream(0, n=199)
    assert vfdt_train(d).n_nodes == 1


@pytest.mark.parametrize("seed", range(5))
def test_hoeffding_bound_monotone(seed):
    rng = np.random.default_rng(seed)
    R, delta, n = rng.uniform(0.1, 3), rng.uniform(1e-9, 0.5), int(rng.integers(1, 10 ** 6))
    assert hoeffding_bound(R, delta, n + 1) < hoeffding_bound(R, delta, n)
    assert hoeffding_bound(R * 1.5, delta, n) > hoeffding_bound(R, delta, n)


def test_oob_is_complement_of_bootstrap(blobs):
    for t in forest_train(blobs, ForestConfig(n_trees=5)).trees:
        inbag = np.unique(t.bootstrap)
        assert np.array_equal(np.sort(np.r_[inbag, t.oob]), np.arange(blobs.n))
        assert not np.intersect1d(inbag, t.oob).size


def test_single_stump_probability_monotone_in_alpha():
    from mesoml.trees import BoostEnsemble, Stump

    s = Stump(0, 0.5)
    x = np.array([[0.0]])
    probs = [BoostEnsemble((s,), (a,), (0.1,)).predict_distribution(x)[0, 1] for a in np.linspace(0.1, 3, 10)]
    assert np.all(np.diff(probs) > 0)

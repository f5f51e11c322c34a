import numpy as np
import pytest

from mesoml.mlp import MlpModel, TrainConfig, default_hidden, mlp_backprop, mlp_init, mlp_loss, mlp_train

from conftest import make_dataset


def finite_difference(model, X, y, h=1e-6):
    theta = model.flat()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        fu = mlp_loss(MlpModel.from_flat(model.sizes, up, model.activation), X, y)
        fd = mlp_loss(MlpModel.from_flat(model.sizes, down, model.activation), X, y)
        grad[i] = (fu - fd) / (2 * h)
    return grad * len(y)  # backprop returns the summed loss gradient


@pytest.mark.parametrize("activation", ["sigmoid", "tanh", "relu"])
@pytest.mark.parametrize("sizes", [(3, 2), (3, 4, 2), (4, 3, 3, 2)])
def test_backprop_matches_finite_differences(activation, sizes):
    rng = np.random.default_rng(len(sizes))
    # nonzero biases keep ReLU pre-activations off the kink at 0
    init = mlp_init(sizes, activation, seed=7)
    theta = init.flat() + rng.uniform(-0.3, 0.3, init.flat().size)
    model = MlpModel.from_flat(sizes, theta, activation)
    X = rng.normal(size=(6, sizes[0]))
    y = rng.integers(0, 2, 6)
    exact = mlp_backprop(model, X, y).flat()
    approx = finite_difference(model, X, y)
    assert np.allclose(exact, approx, rtol=1e-5, atol=1e-6)


def test_init_ranges():
    model = mlp_init((5, 4, 2), seed=1)
    for W, b in zip(model.weights, model.biases):
        assert np.all(np.abs(W) <= 0.5)
        assert np.all(b == 0.0)


def test_flat_round_trip():
    model = mlp_init((3, 5, 2), "tanh", seed=2)
    back = MlpModel.from_flat(model.sizes, model.flat(), model.activation)
    assert all(np.array_equal(a, b) for a, b in zip(model.weights, back.weights))


def test_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        MlpModel((3, 2), (np.zeros((2, 4)),), (np.zeros(2),))


def test_distribution_sums_to_one():
    model = mlp_init((3, 4, 2), seed=0)
    P = model.predict_distribution(np.random.default_rng(0).normal(size=(10, 3)))
    assert P.shape == (10, 2)
    assert np.allclose(P.sum(axis=1), 1.0)


def test_default_hidden_width():
    assert default_hidden(10) == (6,)
    assert default_hidden(3) == (3,)


def test_train_learns_xor():
    X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 10, dtype=float)
    y = (X[:, 0] != X[:, 1]).astype(int)
    d = make_dataset(X, y)
    model = mlp_train(d, TrainConfig(epochs=400, hidden=(4,), seed=1))
    assert np.array_equal(model.predict_distribution(X).argmax(axis=1), y)
    assert model.train_loss < 0.1


def test_train_deterministic(blobs):
    cfg = TrainConfig(epochs=5, seed=3)
    a, b = mlp_train(blobs, cfg), mlp_train(blobs, cfg)
    assert np.array_equal(a.flat(), b.flat())


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1.0)


def test_zero_weights_give_even_output():
    model = MlpModel.from_flat((3, 4, 2), np.zeros(4 * 4 + 5 * 2), "sigmoid")
    from mesoml.mlp import mlp_forward

    acts, prob = mlp_forward(model, np.array([1.0, -2.0, 3.0]))
    assert np.all(acts[1] == 0.5)
    assert prob.tolist() == [0.5, 0.5]


def test_duplicate_instance_doubles_gradient():
    model = mlp_init((3, 4, 2), "tanh", seed=4)
    x = np.array([0.2, -0.1, 0.7])
    once = mlp_backprop(model, x, 1).flat()
    twice = mlp_backprop(model, np.stack([x, x]), [1, 1]).flat()
    assert np.allclose(twice, 2 * once, rtol=1e-14, atol=1e-16)


def test_zero_learning_rate_keeps_parameters(blobs):
    model = mlp_train(blobs, TrainConfig(learning_rate=0.0, epochs=2, seed=5))
    assert np.array_equal(model.flat(), mlp_init(model.sizes, seed=5).flat())


def test_training_reduces_loss(blobs):
    X, y = blobs.X, blobs.y
    for seed in range(3):
        start = mlp_loss(mlp_init((blobs.p, 3, 2), seed=seed), X, y)
        assert mlp_train(blobs, TrainConfig(epochs=20, seed=seed)).train_loss < start

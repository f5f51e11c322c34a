"""Linear and kernel classifiers trained by (sub)gradient or Newton steps.

All models here take an *encoded* dataset (every predictor numeric) and
label class index 1 as +1, class index 0 as -1. A zero margin is resolved
in favour of class 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from . import _kernels
from .dataset import Dataset
from .errors import DivergenceError, SchemaError

HINGE = "hinge"
LOGISTIC = "logistic"


def _xy(d: Dataset):
    if any(a.is_nominal for a in d.attributes):
        raise SchemaError("linear models need an encoded (all-numeric) dataset")
    if np.isnan(d.X).any():
        raise SchemaError("linear models need a dataset without missing values")
    X = np.ascontiguousarray(d.X, dtype=np.float64)
    y = np.where(d.y == 1, 1.0, -1.0)
    return X, y


def _as_matrix(x, p):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != p:
        raise SchemaError(f"expected {p} features, got {X.shape[1]}")
    return X, single


def _pair(p1, single):
    P = np.column_stack([1.0 - p1, p1])
    return P[0] if single else P


# ---------------------------------------------------------------- calibration


def fit_platt(margins: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Fit sigma(a*m + b) to +/-1 labels with Platt's smoothed targets.

    Returns ``(1.0, 0.0)`` when all margins coincide, so an untrained
    model keeps the plain logistic of its margin.
    """
    if margins.size == 0 or np.ptp(margins) == 0:
        return 1.0, 0.0
    n_pos = float((y > 0).sum())
    n_neg = float(y.size - n_pos)
    t = np.where(y > 0, (n_pos + 1) / (n_pos + 2), 1 / (n_neg + 2))
    scale = float(np.abs(margins).max())

    def nll(theta):
        z = theta[0] * margins / scale + theta[1]
        # log(1+exp(z)) - t*z, stable
        return float(np.sum(np.logaddexp(0.0, z) - t * z))

    def grad(theta):
        z = theta[0] * margins / scale + theta[1]
        r = expit(z) - t
        return np.array([r @ (margins / scale), r.sum()])

    prior = math.log((n_pos + 1) / (n_neg + 1))
    res = minimize(nll, np.array([1.0, prior]), jac=grad, method="BFGS")
    a, b = res.x
    return float(a / scale), float(b)


# ---------------------------------------------------------------- linear model


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0
    loss: str = HINGE
    calibration: tuple[float, float] = (1.0, 0.0)
    objective: float | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if not (np.isfinite(w).all() and math.isfinite(self.bias)):
            raise DivergenceError("non-finite linear model parameters")

    def decision_function(self, X) -> np.ndarray:
        X, single = _as_matrix(X, self.weights.size)
        m = X @ self.weights + self.bias
        return m[0] if single else m

    def predict_distribution(self, X) -> np.ndarray:
        X, single = _as_matrix(X, self.weights.size)
        a, b = self.calibration
        return _pair(expit(a * (X @ self.weights + self.bias) + b), single)


@dataclass(frozen=True)
class SGDConfig:
    loss: str = HINGE
    learning_rate: float = 0.01
    lam: float = 1e-4
    epochs: int = 500
    seed: int = 0


def sgd_train(d: Dataset, cfg: SGDConfig = SGDConfig()) -> LinearModel:
    """Single-example SGD on an L2-regularised hinge or logistic loss.

    Step size at update t (counting from 0) is
    ``learning_rate / (1 + learning_rate * lam * t)``.
    """
    if cfg.loss not in (HINGE, LOGISTIC):
        raise ValueError(f"unknown loss {cfg.loss!r}")
    if cfg.learning_rate < 0 or cfg.epochs < 1:
        raise ValueError("need learning_rate >= 0 and epochs >= 1")
    X, y = _xy(d)
    rng = np.random.default_rng(cfg.seed)
    w = np.zeros(X.shape[1])
    b, t = 0.0, 0
    code = 0 if cfg.loss == HINGE else 1
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(X.shape[0]).astype(np.intp)
        b, t = _kernels.sgd_epoch(w, b, X, y, order, t, cfg.learning_rate, cfg.lam, code)
        if not (np.isfinite(w).all() and math.isfinite(b)):
            raise DivergenceError(f"SGD diverged in epoch {epoch}")
    return LinearModel(w, b, cfg.loss, fit_platt(X @ w + b, y))


# ---------------------------------------------------------------- pegasos


def pegasos_objective(w, X, y, lam: float) -> float:
    """lam/2 * ||w||^2 + mean hinge loss (no bias term)."""
    w = np.asarray(w, dtype=np.float64)
    hinge = np.maximum(0.0, 1.0 - y * (X @ w))
    return 0.5 * lam * float(w @ w) + float(hinge.mean())


@dataclass(frozen=True)
class PegasosConfig:
    lam: float = 1e-4
    iterations: int = 50_000
    seed: int = 0


def _augment(X):
    return np.ascontiguousarray(np.column_stack([X, np.ones(X.shape[0])]))


def pegasos_train(d: Dataset, cfg: PegasosConfig = PegasosConfig()) -> LinearModel:
    """Primal sub-gradient SVM with step size 1/(lam*t), no projection.

    The intercept is learned as the weight of an appended constant feature
    and is therefore regularised like any other weight. The stored
    ``objective`` is the primal objective on that augmented problem.
    """
    if cfg.lam <= 0 or cfg.iterations < 1:
        raise ValueError("need lam > 0 and iterations >= 1")
    X, y = _xy(d)
    Xa = _augment(X)
    rng = np.random.default_rng(cfg.seed)
    picks = rng.integers(0, X.shape[0], size=cfg.iterations).astype(np.intp)
    w = np.zeros(Xa.shape[1])
    _kernels.pegasos_run(w, Xa, y, picks, cfg.lam, 0)
    if not np.isfinite(w).all():
        raise DivergenceError("Pegasos diverged")
    obj = pegasos_objective(w, Xa, y, cfg.lam)
    m = Xa @ w
    return LinearModel(w[:-1], float(w[-1]), HINGE, fit_platt(m, y), obj)


def pegasos_trace(d: Dataset, cfg: PegasosConfig, checkpoints) -> list[float]:
    """Primal objective of the Pegasos iterate at each checkpoint t (1-based)."""
    X, y = _xy(d)
    Xa = _augment(X)
    rng = np.random.default_rng(cfg.seed)
    picks = rng.integers(0, X.shape[0], size=cfg.iterations).astype(np.intp)
    w = np.zeros(Xa.shape[1])
    out, t = [], 0
    for c in sorted(checkpoints):
        t = _kernels.pegasos_run(w, Xa, y, picks[t:c], cfg.lam, t)
        out.append(pegasos_objective(w, Xa, y, cfg.lam))
    return out


# ---------------------------------------------------------------- voted perceptron


@dataclass(frozen=True)
class VotedPerceptronModel:
    vectors: np.ndarray
    biases: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if self.counts.size == 0 or (self.counts < 1).any():
            raise ValueError("survival counts must all be >= 1")

    def vote(self, X) -> np.ndarray:
        """Survival-weighted sum of the stored perceptrons' signs."""
        X, single = _as_matrix(X, self.vectors.shape[1])
        s = X @ self.vectors.T + self.biases
        v = np.where(s >= 0.0, 1.0, -1.0) @ self.counts.astype(np.float64)
        return v[0] if single else v

    def predict_distribution(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        return _pair(expit(np.atleast_1d(self.vote(X))), single)


@dataclass(frozen=True)
class VotedPerceptronConfig:
    epochs: int = 10
    seed: int = 0


def voted_perceptron_train(d: Dataset, cfg: VotedPerceptronConfig = VotedPerceptronConfig()) -> VotedPerceptronModel:
    """Mistake-driven perceptron keeping every intermediate vector.

    Each vector starts with survival count 1 and gains one per correct
    prediction; a mistake (``y * (w.x + b) <= 0``) freezes it and starts
    ``w + y*x``.
    """
    if cfg.epochs < 1:
        raise ValueError("epochs must be >= 1")
    X, y = _xy(d)
    n, p = X.shape
    rng = np.random.default_rng(cfg.seed)
    orders = np.ascontiguousarray(np.stack([rng.permutation(n) for _ in range(cfg.epochs)]).astype(np.intp))
    cap = cfg.epochs * n + 1
    V = np.zeros((cap, p))
    bias = np.zeros(cap)
    counts = np.zeros(cap, dtype=np.int64)
    P = _kernels.voted_perceptron(X, y, orders, V, bias, counts)
    return VotedPerceptronModel(V[:P].copy(), bias[:P].copy(), counts[:P].copy())


def mistakes_per_epoch(d: Dataset, cfg: VotedPerceptronConfig) -> list[int]:
    """New vectors created in each epoch of :func:`voted_perceptron_train`."""
    X, y = _xy(d)
    n, p = X.shape
    rng = np.random.default_rng(cfg.seed)
    orders = np.stack([rng.permutation(n) for _ in range(cfg.epochs)]).astype(np.intp)
    cap = cfg.epochs * n + 1
    V, bias, counts = np.zeros((cap, p)), np.zeros(cap), np.zeros(cap, dtype=np.int64)
    out, before = [], 1
    for e in range(cfg.epochs):
        P = _kernels.voted_perceptron(X, y, np.ascontiguousarray(orders[: e + 1]), V, bias, counts)
        out.append(P - before)
        before = P
    return out


# ---------------------------------------------------------------- kernels


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "rbf"
    degree: int = 2
    coef0: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial", "rbf"):
            raise ValueError(f"unknown kernel {self.kind!r}")
        if self.kind == "polynomial" and (self.degree < 1 or int(self.degree) != self.degree):
            raise ValueError("polynomial degree must be an integer >= 1")
        if self.kind == "rbf" and not self.gamma > 0:
            raise ValueError("rbf gamma must be > 0")

    @classmethod
    def linear(cls):
        return cls("linear")

    @classmethod
    def polynomial(cls, degree=2, coef0=1.0):
        return cls("polynomial", degree=degree, coef0=coef0)

    @classmethod
    def rbf(cls, gamma=1.0):
        return cls("rbf", gamma=gamma)


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    if spec.kind == "linear":
        return float(x @ y)
    if spec.kind == "polynomial":
        return float((x @ y + spec.coef0) ** spec.degree)
    diff = x - y
    return math.exp(-spec.gamma * float(diff @ diff))


def gram(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel matrix K[i, j] = k(A[i], B[j])."""
    A = np.asarray(A, dtype=np.float64)
    B = A if B is None else np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise ValueError("feature length mismatch")
    if spec.kind == "linear":
        return A @ B.T
    if spec.kind == "polynomial":
        return (A @ B.T + spec.coef0) ** spec.degree
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.exp(-spec.gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class KernelModel:
    support: np.ndarray
    alpha: np.ndarray
    bias: float
    kernel: KernelSpec
    lam: float
    iterations: int = 0

    def decision_function(self, X) -> np.ndarray:
        X, single = _as_matrix(X, self.support.shape[1])
        f = gram(self.kernel, X, self.support) @ self.alpha + self.bias
        return f[0] if single else f

    def predict_distribution(self, X) -> np.ndarray:
        single = np.ndim(X) == 1
        return _pair(expit(np.atleast_1d(self.decision_function(X))), single)


@dataclass(frozen=True)
class KLRConfig:
    kernel: KernelSpec | None = None  # None -> rbf with gamma = 1/p
    lam: float = 1e-5
    max_iter: int = 100
    tol: float = 1e-8


def klr_objective(K, alpha, b, y01, lam) -> float:
    f = K @ alpha + b
    return lam * float(alpha @ K @ alpha) + float(np.mean(np.logaddexp(0.0, f) - y01 * f))


def klr_train(d: Dataset, cfg: KLRConfig = KLRConfig()) -> KernelModel:
    """Kernel logistic regression fitted by damped Newton (IRLS) steps.

    Minimises ``lam * a'Ka + mean logistic loss`` over
    ``f(x) = sum_i a_i k(x_i, x) + b``. The Newton system is solved in the
    K-preconditioned form, which stays well posed when K is singular; a
    singular system is retried once with 1e-8 ridge jitter.
    """
    if not cfg.lam > 0:
        raise ValueError("lam must be > 0")
    X, ypm = _xy(d)
    n, p = X.shape
    spec = cfg.kernel or KernelSpec.rbf(1.0 / max(p, 1))
    K = gram(spec, X)
    y01 = (ypm > 0).astype(np.float64)
    alpha = np.zeros(n)
    b = 0.0
    lam = cfg.lam
    obj = klr_objective(K, alpha, b, y01, lam)
    it = 0
    for it in range(1, cfg.max_iter + 1):
        f = K @ alpha + b
        prob = expit(f)
        w = prob * (1.0 - prob)
        r = (prob - y01) / n
        A = np.empty((n + 1, n + 1))
        A[:n, :n] = (w[:, None] * K) / n
        A[np.diag_indices(n)] += 2.0 * lam
        A[:n, n] = w / n
        A[n, :n] = (w @ K) / n
        A[n, n] = w.sum() / n
        rhs = -np.concatenate([2.0 * lam * alpha + r, [r.sum()]])
        try:
            step = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            try:
                step = np.linalg.solve(A + 1e-8 * np.eye(n + 1), rhs)
            except np.linalg.LinAlgError as exc:
                raise DivergenceError(f"KLR Newton system singular at iteration {it}") from exc
        # backtracking keeps each step a descent step
        t = 1.0
        while True:
            a_new = alpha + t * step[:n]
            b_new = b + t * step[n]
            new_obj = klr_objective(K, a_new, b_new, y01, lam)
            if new_obj <= obj or t < 1e-10:
                break
            t *= 0.5
        change = t * float(np.abs(step).max())
        alpha, b, obj = a_new, b_new, new_obj
        if not (np.isfinite(alpha).all() and math.isfinite(b)):
            raise DivergenceError(f"KLR diverged at iteration {it}")
        if change < cfg.tol:
            break
    return KernelModel(X.copy(), alpha, float(b), spec, lam, it)


# ---------------------------------------------------------------- dispatch


def predict_distribution(model, x) -> np.ndarray:
    """(P(class 0), P(class 1)) for one instance or each row of a matrix."""
    return model.predict_distribution(x)

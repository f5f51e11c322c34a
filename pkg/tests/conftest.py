import numpy as np
import pytest

from mesoml._kernels import backends
from mesoml.dataset import AttributeSpec, Dataset

CLASS = AttributeSpec("class", "nominal", ("0", "1"), role="class")


def make_dataset(X, y, names=None, nominal=None):
    """Numeric dataset from arrays; ``nominal`` maps column index -> categories."""
    X = np.asarray(X, dtype=np.float64)
    nominal = nominal or {}
    names = names or [f"x{j}" for j in range(X.shape[1])]
    attrs = [
        AttributeSpec(n, "nominal", tuple(nominal[j])) if j in nominal else AttributeSpec(n)
        for j, n in enumerate(names)
    ]
    return Dataset(attrs, X, y, CLASS)


def gaussian_blobs(n=120, p=3, shift=2.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.normal(size=(n, p))
    X[:, 0] += shift * (2 * y - 1)
    return make_dataset(X, y)


@pytest.fixture
def blobs():
    return gaussian_blobs()


BACKENDS = backends()


@pytest.fixture(params=sorted(BACKENDS))
def kernels(request):
    return BACKENDS[request.param]


# ---------------------------------------------------------------- acceptance summary

ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def acceptance_log(request):
    """Collects one status line per acceptance criterion for the run summary."""
    return request.config.stash[ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

"""Time every inner-loop kernel on both backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 500]

Prints best-of-N wall time per kernel and the compiled/pure speedup.
Both backends receive identical inputs; results are checked for equality
(or closeness for floating-point training loops) before timing.
"""

import argparse
import time

import numpy as np

from mesoml._kernels import backends


def _inputs(n, p, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y01 = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(np.int8)
    ypm = np.where(y01 == 1, 1.0, -1.0)
    return rng, X, y01, ypm


def cases(n, p):
    rng, X, y01, ypm = _inputs(n, p)
    order = rng.permutation(n).astype(np.intp)
    Xa = np.column_stack([X, np.ones(n)])
    picks = rng.integers(0, n, 20 * n).astype(np.intp)
    orders = np.stack([rng.permutation(n) for _ in range(10)]).astype(np.intp)
    rows = np.sort(rng.integers(0, n, n)).astype(np.intp)
    keys = rng.random((2 * n + 1, p))
    mtry = int(np.ceil(np.sqrt(p)))
    sizes = np.array([p, p // 2 + 1, 2], dtype=np.intp)
    n_par = sum((a + 1) * b for a, b in zip(sizes[:-1], sizes[1:]))
    params0 = rng.uniform(-0.5, 0.5, n_par)

    def sgd(k):
        w = np.zeros(p)
        return k.sgd_epoch(w, 0.0, X, ypm, order, 0, 0.01, 1e-4, 0), w

    def pegasos(k):
        w = np.zeros(p + 1)
        return k.pegasos_run(w, Xa, ypm, picks, 1e-2, 1), w

    def vp(k):
        V = np.zeros((10 * n + 1, p))
        b = np.zeros(10 * n + 1)
        c = np.zeros(10 * n + 1, dtype=np.intp)
        m = k.voted_perceptron(X, ypm, orders, V, b, c)
        return m, V[:m]

    def split(k):
        return k.best_split(X, y01, rows, np.arange(p, dtype=np.intp))

    rank = backends()["python"].column_ranks(X)

    def tree(k):
        return k.grow_tree(X, y01, rank, rows, keys, mtry, 2)

    def mlp(k):
        params = params0.copy()
        vel = np.zeros_like(params)
        return k.mlp_epoch(params, vel, sizes, 0, X, y01.astype(np.intp), order, 0.3, 0.2), params

    return {"sgd_epoch": sgd, "pegasos_run": pegasos, "voted_perceptron": vp,
            "best_split": split, "grow_tree": tree, "mlp_epoch": mlp}


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(np.asarray(a, dtype=float), np.asarray(b, dtype=float), rtol=1e-9, atol=1e-12)


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--p", type=int, default=20)
    args = ap.parse_args(argv)
    mods = backends()
    if "cython" not in mods:
        print("compiled backend not built; only the pure backend is available")
    print(f"{'kernel':<18}{'python (ms)':>14}{'cython (ms)':>14}{'speedup':>10}")
    for name, fn in cases(args.n, args.p).items():
        res = {b: fn(m) for b, m in mods.items()}
        if "cython" in res and not _same(res["python"], res["cython"]):
            raise SystemExit(f"{name}: backends disagree")
        t = {b: best_time(lambda m=m: fn(m), args.repeat) for b, m in mods.items()}
        tc = t.get("cython")
        line = f"{name:<18}{1e3 * t['python']:>14.3f}"
        line += f"{1e3 * tc:>14.3f}{t['python'] / tc:>9.1f}x" if tc else f"{'-':>14}{'-':>10}"
        print(line)


if __name__ == "__main__":
    main()

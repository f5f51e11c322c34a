"""Pure numpy fallback for the compiled kernels in ``_core.pyx``.

Same signatures and semantics; floating-point summation order may differ.
"""

import math

import numpy as np


def sgd_epoch(w, b, X, y, order, t, gamma0, lam, loss):
    for i in order:
        gamma = gamma0 / (1.0 + gamma0 * lam * t)
        m = y[i] * (float(X[i] @ w) + b)
        if loss == 0:
            g = y[i] if m < 1.0 else 0.0
        else:
            g = y[i] / (1.0 + math.exp(m)) if m < 700 else 0.0
        w *= 1.0 - gamma * lam
        w += (gamma * g) * X[i]
        b = b + gamma * g
        t += 1
    return b, t


def pegasos_run(w, X, y, picks, lam, t0):
    for k, i in enumerate(picks):
        t = t0 + k + 1
        eta = 1.0 / (lam * t)
        m = y[i] * float(X[i] @ w)
        w *= 1.0 - eta * lam
        if m < 1.0:
            w += (eta * y[i]) * X[i]
    return t0 + len(picks)


def voted_perceptron(X, y, orders, V, bias, counts):
    V[0] = 0.0
    bias[0] = 0.0
    counts[0] = 1
    cur = 0
    for order in orders:
        for i in order:
            m = y[i] * (float(X[i] @ V[cur]) + bias[cur])
            if m <= 0.0:
                V[cur + 1] = V[cur] + y[i] * X[i]
                bias[cur + 1] = bias[cur] + y[i]
                cur += 1
                counts[cur] = 1
            else:
                counts[cur] += 1
    return cur + 1


def best_split(X, y, rows, feats):
    yr = y[rows].astype(np.int64)
    n = len(rows)
    n1 = int(yr.sum())
    n0 = n - n1
    best_score = (float(n0) * n0 + float(n1) * n1) / n
    best_f, thr = -1, 0.0
    if n < 2:
        return best_f, thr, best_score
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    for f in feats:
        x = X[rows, f]
        order = np.lexsort((yr, x))
        xs, ys = x[order], yr[order]
        l1 = np.cumsum(ys)[:-1].astype(np.float64)
        l0 = nl - l1
        r1 = n1 - l1
        r0 = n0 - l0
        score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr
        valid = xs[:-1] != xs[1:]
        if not valid.any():
            continue
        score = np.where(valid, score, -np.inf)
        k = int(np.argmax(score))
        if score[k] > best_score:
            best_score = float(score[k])
            best_f = int(f)
            thr = 0.5 * (xs[k] + xs[k + 1])
    return best_f, thr, best_score


def grow_tree(X, y, rank, rows, keys, mtry, min_node):
    n, p = rows.shape[0], X.shape[1]
    mtry = min(mtry, p)
    feature, threshold, left, right = [-1], [0.0], [-1], [-1]
    value = [float(np.count_nonzero(y[rows])) / n]
    stack = [(0, np.asarray(rows, dtype=np.intp))]
    attempt = 0
    while stack:
        node, r = stack.pop()
        v = value[node]
        if r.size < min_node or v == 0.0 or v == 1.0:
            continue
        feats = np.sort(np.argsort(keys[attempt], kind="stable")[:mtry]).astype(np.intp)
        attempt += 1
        f, thr, _ = best_split(X, y, r, feats)
        if f < 0:
            continue
        mask = X[r, f] <= thr
        lr, rr = r[mask], r[~mask]
        feature[node] = f
        threshold[node] = thr
        for child in (lr, rr):
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(float(np.count_nonzero(y[child])) / child.size)
        left[node], right[node] = len(feature) - 2, len(feature) - 1
        stack.append((right[node], rr))
        stack.append((left[node], lr))
    return (
        np.array(feature, dtype=np.intp),
        np.array(threshold, dtype=np.float64),
        np.array(left, dtype=np.intp),
        np.array(right, dtype=np.intp),
        np.array(value, dtype=np.float64),
        attempt,
    )


def oob_permutation_correct(feature, threshold, left, right, value, X, y, oob, feats, perms):
    Xo = X[oob]
    yo = y[oob] == 1

    def correct(Z):
        leaf = tree_apply(feature, threshold, left, right, Z)
        return int(np.count_nonzero((value[leaf] >= 0.5) == yo))

    out = np.zeros(len(feats), dtype=np.intp)
    for q, j in enumerate(feats):
        Xp = Xo.copy()
        Xp[:, j] = Xo[perms[q], j]
        out[q] = correct(Xp)
    return correct(Xo), out


def column_ranks(X):
    X = np.asarray(X)
    out = np.empty(X.shape, dtype=np.int32)
    for j in range(X.shape[1]):
        out[:, j] = np.unique(X[:, j], return_inverse=True)[1].reshape(-1)
    return out


def tree_apply(feature, threshold, left, right, X):
    node = np.zeros(X.shape[0], dtype=np.intp)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        idx = rows[active]
        nd = node[idx]
        go_left = X[idx, feature[nd]] <= threshold[nd]
        node[idx] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return node


def _act(z, kind):
    if kind == 0:
        return 1.0 / (1.0 + np.exp(-z))
    if kind == 1:
        return np.tanh(z)
    return np.where(z > 0.0, z, 0.0)


def _dact(a, kind):
    if kind == 0:
        return a * (1.0 - a)
    if kind == 1:
        return 1.0 - a * a
    return (a > 0.0).astype(np.float64)


def mlp_epoch(params, velocity, sizes, act, X, y, order, lr, momentum):
    sizes = [int(s) for s in sizes]
    L = len(sizes) - 1
    views = []
    off = 0
    for l in range(L):
        nin, nout = sizes[l], sizes[l + 1]
        W = params[off:off + nout * nin].reshape(nout, nin)
        vW = velocity[off:off + nout * nin].reshape(nout, nin)
        off += nout * nin
        b = params[off:off + nout]
        vb = velocity[off:off + nout]
        off += nout
        views.append((W, b, vW, vb))
    loss = 0.0
    for i in order:
        acts = [X[i]]
        for l, (W, b, _, _) in enumerate(views):
            z = W @ acts[-1] + b
            acts.append(z if l == L - 1 else _act(z, act))
        z = acts[-1]
        e = np.exp(z - z.max())
        prob = e / e.sum()
        loss -= math.log(max(prob[y[i]], 1e-300))
        delta = prob.copy()
        delta[y[i]] -= 1.0
        for l in range(L - 1, -1, -1):
            W, b, vW, vb = views[l]
            nd = (W.T @ delta) * _dact(acts[l], act) if l > 0 else None
            vW *= momentum
            vW -= lr * np.outer(delta, acts[l])
            W += vW
            vb *= momentum
            vb -= lr * delta
            b += vb
            delta = nd
    return loss

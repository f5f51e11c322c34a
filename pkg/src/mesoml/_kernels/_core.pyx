# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled inner loops. Signatures mirror ``_pure.py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, tanh, log
from libcpp.vector cimport vector
from libcpp.utility cimport pair
from libcpp.algorithm cimport sort
from libc.stdint cimport uint64_t, int32_t

cnp.import_array()

ctypedef cnp.intp_t intp


cdef inline double _log(double v) noexcept nogil:
    if v < 1e-300:
        v = 1e-300
    return log(v)


cdef inline double _dot(const double[:, ::1] X, intp i, const double[::1] w, intp p) noexcept nogil:
    cdef double s = 0.0
    cdef intp j
    for j in range(p):
        s += X[i, j] * w[j]
    return s


def sgd_epoch(double[::1] w, double b, const double[:, ::1] X, const double[::1] y,
              const intp[::1] order, long t, double gamma0, double lam, int loss):
    """One pass of single-example updates; ``loss`` 0 = hinge, 1 = logistic."""
    cdef intp p = X.shape[1], k, i, j
    cdef double m, g, gamma, shrink
    with nogil:
        for k in range(order.shape[0]):
            i = order[k]
            gamma = gamma0 / (1.0 + gamma0 * lam * t)
            m = y[i] * (_dot(X, i, w, p) + b)
            if loss == 0:
                g = y[i] if m < 1.0 else 0.0
            else:
                g = y[i] / (1.0 + exp(m))
            shrink = 1.0 - gamma * lam
            for j in range(p):
                w[j] = shrink * w[j] + gamma * g * X[i, j]
            b = b + gamma * g
            t += 1
    return b, t


def pegasos_run(double[::1] w, const double[:, ::1] X, const double[::1] y,
                const intp[::1] picks, double lam, long t0):
    """Pegasos iterations t0+1 .. t0+len(picks) with step 1/(lam*t)."""
    cdef intp p = X.shape[1], k, i, j
    cdef long t
    cdef double eta, m, shrink
    with nogil:
        for k in range(picks.shape[0]):
            t = t0 + k + 1
            i = picks[k]
            eta = 1.0 / (lam * t)
            m = y[i] * _dot(X, i, w, p)
            shrink = 1.0 - eta * lam
            if m < 1.0:
                for j in range(p):
                    w[j] = shrink * w[j] + eta * y[i] * X[i, j]
            else:
                for j in range(p):
                    w[j] = shrink * w[j]
    return t0 + picks.shape[0]


def voted_perceptron(const double[:, ::1] X, const double[::1] y, const intp[:, ::1] orders,
                     double[:, ::1] V, double[::1] bias, cnp.int64_t[::1] counts):
    """Fill V/bias/counts with every mistake vector; returns the number stored."""
    cdef intp p = X.shape[1], e, k, i, j, cur = 0
    cdef double m
    for j in range(p):
        V[0, j] = 0.0
    bias[0] = 0.0
    counts[0] = 1
    with nogil:
        for e in range(orders.shape[0]):
            for k in range(orders.shape[1]):
                i = orders[e, k]
                m = 0.0
                for j in range(p):
                    m += X[i, j] * V[cur, j]
                m = y[i] * (m + bias[cur])
                if m <= 0.0:
                    for j in range(p):
                        V[cur + 1, j] = V[cur, j] + y[i] * X[i, j]
                    bias[cur + 1] = bias[cur] + y[i]
                    cur += 1
                    counts[cur] = 1
                else:
                    counts[cur] += 1
    return cur + 1


cdef double _node_score(intp n0, intp n1, intp n) noexcept nogil:
    return (<double>n0 * n0 + <double>n1 * n1) / n


cdef intp _best_split(const double[:, ::1] X, const signed char[::1] y, const int32_t[:, ::1] rank,
                      const intp* rows, intp n, const intp* feats, intp nf, vector[uint64_t]& buf,
                      const int32_t* order, int32_t* cnt, double* thr_out, double* score_out) noexcept nogil:
    # Small nodes sort packed (column rank, row) keys; large ones scan the
    # presorted ``order`` (N rows per feature) weighting rows by their
    # multiplicity ``cnt`` in the node. Both visit value boundaries in
    # ascending order, and ties inside a value group never affect a score.
    cdef intp fi, f, k, i, l0, l1, r0, r1, n0 = 0, n1 = 0, best_f = -1
    cdef intp row, nxt, prev, c, N = X.shape[0]
    cdef double score, best_score
    cdef bint scan = order != NULL and n * 16 > N
    for k in range(n):
        if y[rows[k]] == 1:
            n1 += 1
    n0 = n - n1
    best_score = _node_score(n0, n1, n)
    if scan:
        for k in range(n):
            cnt[rows[k]] += 1
    for fi in range(nf):
        f = feats[fi]
        l0 = 0
        l1 = 0
        if scan:
            prev = -1
            for i in range(N):
                row = order[f * N + i]
                c = cnt[row]
                if c == 0:
                    continue
                if prev >= 0 and X[row, f] != X[prev, f]:
                    r0 = n0 - l0
                    r1 = n1 - l1
                    score = _node_score(l0, l1, l0 + l1) + _node_score(r0, r1, r0 + r1)
                    if score > best_score:
                        best_score = score
                        best_f = f
                        thr_out[0] = 0.5 * (X[prev, f] + X[row, f])
                if y[row] == 1:
                    l1 += c
                else:
                    l0 += c
                prev = row
            continue
        for k in range(n):
            buf[k] = ((<uint64_t>rank[rows[k], f]) << 32) | (<uint64_t>rows[k])
        sort(buf.begin(), buf.begin() + n)
        for k in range(n - 1):
            row = <intp>(buf[k] & 0xffffffffULL)
            if y[row] == 1:
                l1 += 1
            else:
                l0 += 1
            if (buf[k] >> 32) == (buf[k + 1] >> 32):
                continue
            r0 = n0 - l0
            r1 = n1 - l1
            score = _node_score(l0, l1, k + 1) + _node_score(r0, r1, n - k - 1)
            if score > best_score:
                best_score = score
                best_f = f
                nxt = <intp>(buf[k + 1] & 0xffffffffULL)
                thr_out[0] = 0.5 * (X[row, f] + X[nxt, f])
    if scan:
        for k in range(n):
            cnt[rows[k]] = 0
    score_out[0] = best_score
    return best_f


def column_ranks(X):
    """Dense per-column ranks of X as int32."""
    X = np.asarray(X)
    out = np.empty(X.shape, dtype=np.int32)
    for j in range(X.shape[1]):
        out[:, j] = np.unique(X[:, j], return_inverse=True)[1].reshape(-1)
    return out


def best_split(const double[:, ::1] X, const signed char[::1] y, const intp[::1] rows,
               const intp[::1] feats):
    """Best Gini threshold over ``feats`` for the node holding ``rows``.

    Maximises (l0^2 + l1^2)/nL + (r0^2 + r1^2)/nR, which is equivalent to
    minimising weighted Gini impurity. Returns (feature, threshold, score)
    with feature = -1 when no split beats the unsplit node.
    """
    cdef vector[uint64_t] buf
    cdef double thr = 0.0, score = 0.0
    cdef intp f
    cdef const int32_t[:, ::1] rank = column_ranks(X)
    buf.resize(rows.shape[0] + 1)
    f = _best_split(X, y, rank, &rows[0], rows.shape[0], &feats[0], feats.shape[0], buf, NULL, NULL, &thr, &score)
    return f, thr, score


def grow_tree(const double[:, ::1] X, const signed char[::1] y, const int32_t[:, ::1] rank,
              const intp[::1] rows, const double[:, ::1] keys, intp mtry, intp min_node):
    """Grow an unpruned Gini tree depth-first (left child first).

    ``rank`` holds dense per-column ranks of X (see ``column_ranks``).
    The k-th node that is eligible for splitting draws its candidate
    features as the ``mtry`` smallest entries of ``keys[k]``.
    """
    cdef intp n = rows.shape[0], p = X.shape[1], cap = 2 * n + 1
    cdef intp count = 0, attempt = 0, node, s, e, k, q, j, f, nl, nr, c1, sz, lo, hi
    cdef double v, thr = 0.0, score = 0.0, best
    feature_np = np.full(cap, -1, dtype=np.intp)
    threshold_np = np.zeros(cap, dtype=np.float64)
    left_np = np.full(cap, -1, dtype=np.intp)
    right_np = np.full(cap, -1, dtype=np.intp)
    value_np = np.zeros(cap, dtype=np.float64)
    cdef intp[::1] feature = feature_np
    cdef double[::1] threshold = threshold_np
    cdef intp[::1] left = left_np
    cdef intp[::1] right = right_np
    cdef double[::1] value = value_np
    cdef vector[intp] buf_rows = vector[intp](n + 1)
    cdef vector[intp] tmp = vector[intp](n + 1)
    cdef vector[intp] feats = vector[intp](p + 1)
    cdef vector[char] taken = vector[char](p + 1)
    cdef vector[uint64_t] sbuf = vector[uint64_t](n + 1)
    cdef intp N = X.shape[0], r
    cdef vector[int32_t] cnt = vector[int32_t](N + 1)
    cdef vector[int32_t] order = vector[int32_t](p * N + 1)
    cdef vector[intp] st_node, st_s, st_e
    if mtry > p:
        mtry = p
    with nogil:
        # counting sort of all N rows by rank, per feature
        for j in range(p):
            for r in range(N + 1):
                cnt[r] = 0
            for r in range(N):
                cnt[rank[r, j] + 1] += 1
            for r in range(N):
                cnt[r + 1] += cnt[r]
            for r in range(N):
                order[j * N + cnt[rank[r, j]]] = <int32_t>r
                cnt[rank[r, j]] += 1
        for r in range(N + 1):
            cnt[r] = 0
        for k in range(n):
            buf_rows[k] = rows[k]
        c1 = 0
        for k in range(n):
            c1 += y[rows[k]]
        value[0] = (<double>c1) / n
        count = 1
        st_node.push_back(0)
        st_s.push_back(0)
        st_e.push_back(n)
        while st_node.size() > 0:
            node = st_node.back()
            s = st_s.back()
            e = st_e.back()
            st_node.pop_back()
            st_s.pop_back()
            st_e.pop_back()
            v = value[node]
            sz = e - s
            if sz < min_node or v == 0.0 or v == 1.0:
                continue
            # mtry smallest keys of this attempt, then ascending feature order
            for j in range(p):
                taken[j] = 0
            for q in range(mtry):
                f = -1
                for j in range(p):
                    if not taken[j] and (f < 0 or keys[attempt, j] < best):
                        best = keys[attempt, j]
                        f = j
                taken[f] = 1
            q = 0
            for j in range(p):
                if taken[j]:
                    feats[q] = j
                    q += 1
            attempt += 1
            f = _best_split(X, y, rank, &buf_rows[s], sz, &feats[0], mtry, sbuf, &order[0], &cnt[0], &thr, &score)
            if f < 0:
                continue
            # stable partition of rows s..e by X[r, f] <= thr
            nl = 0
            nr = 0
            for k in range(s, e):
                if X[buf_rows[k], f] <= thr:
                    buf_rows[s + nl] = buf_rows[k]
                    nl += 1
                else:
                    tmp[nr] = buf_rows[k]
                    nr += 1
            for k in range(nr):
                buf_rows[s + nl + k] = tmp[k]
            feature[node] = f
            threshold[node] = thr
            left[node] = count
            right[node] = count + 1
            c1 = 0
            for k in range(s, s + nl):
                c1 += y[buf_rows[k]]
            value[count] = (<double>c1) / nl
            c1 = 0
            for k in range(s + nl, e):
                c1 += y[buf_rows[k]]
            value[count + 1] = (<double>c1) / nr
            count += 2
            st_node.push_back(right[node])
            st_s.push_back(s + nl)
            st_e.push_back(e)
            st_node.push_back(left[node])
            st_s.push_back(s)
            st_e.push_back(s + nl)
    return (feature_np[:count].copy(), threshold_np[:count].copy(), left_np[:count].copy(),
            right_np[:count].copy(), value_np[:count].copy(), attempt)


def oob_permutation_correct(const intp[::1] feature, const double[::1] threshold,
                            const intp[::1] left, const intp[::1] right, const double[::1] value,
                            const double[:, ::1] X, const signed char[::1] y, const intp[::1] oob,
                            const intp[::1] feats, const intp[:, ::1] perms):
    """Correct OOB votes of one tree: unpermuted, then with each feature of
    ``feats`` replaced by its values at ``oob[perms[q]]``."""
    cdef intp m = oob.shape[0], q, i, node, j, row, base = 0, c
    cdef double x
    out_np = np.zeros(feats.shape[0], dtype=np.intp)
    cdef intp[::1] out = out_np
    with nogil:
        for i in range(m):
            row = oob[i]
            node = 0
            while feature[node] >= 0:
                node = left[node] if X[row, feature[node]] <= threshold[node] else right[node]
            if (value[node] >= 0.5) == (y[row] == 1):
                base += 1
        for q in range(feats.shape[0]):
            j = feats[q]
            c = 0
            for i in range(m):
                row = oob[i]
                node = 0
                while feature[node] >= 0:
                    if feature[node] == j:
                        x = X[oob[perms[q, i]], j]
                    else:
                        x = X[row, feature[node]]
                    node = left[node] if x <= threshold[node] else right[node]
                if (value[node] >= 0.5) == (y[row] == 1):
                    c += 1
            out[q] = c
    return base, out_np


def tree_apply(const intp[::1] feature, const double[::1] threshold, const intp[::1] left,
               const intp[::1] right, const double[:, ::1] X):
    """Leaf node index reached by every row of X."""
    cdef intp n = X.shape[0], i, node
    out = np.empty(n, dtype=np.intp)
    cdef intp[::1] o = out
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            o[i] = node
    return out


cdef inline double _act(double z, int kind) noexcept nogil:
    if kind == 0:
        return 1.0 / (1.0 + exp(-z))
    if kind == 1:
        return tanh(z)
    return z if z > 0.0 else 0.0


cdef inline double _dact(double a, int kind) noexcept nogil:
    # derivative expressed through the activation value
    if kind == 0:
        return a * (1.0 - a)
    if kind == 1:
        return 1.0 - a * a
    return 1.0 if a > 0.0 else 0.0


def mlp_epoch(double[::1] params, double[::1] velocity, const intp[::1] sizes, int act,
              const double[:, ::1] X, const intp[::1] y, const intp[::1] order,
              double lr, double momentum):
    """Per-example momentum SGD over ``order`` on softmax cross-entropy.

    ``params`` packs, layer by layer, a row-major (out x in) weight block
    followed by the out-sized bias. Returns the summed loss of the pass
    (evaluated before each example's update).
    """
    cdef intp L = sizes.shape[0] - 1, l, i, j, k, kk, nin, nout, woff, aoff, aprev
    cdef intp total_units = 0
    cdef double z, s, mx, loss = 0.0, g, d
    for l in range(L + 1):
        total_units += sizes[l]
    act_buf = np.zeros(total_units, dtype=np.float64)
    delta_buf = np.zeros(total_units, dtype=np.float64)
    prev_buf = np.zeros(total_units, dtype=np.float64)
    offs_np = np.zeros(L + 1, dtype=np.intp)   # activation offsets
    woffs_np = np.zeros(L, dtype=np.intp)      # parameter offsets
    cdef double[::1] a = act_buf
    cdef double[::1] delta = delta_buf
    cdef double[::1] nd = prev_buf
    cdef intp[::1] offs = offs_np
    cdef intp[::1] woffs = woffs_np
    k = 0
    for l in range(L + 1):
        offs[l] = k
        k += sizes[l]
    k = 0
    for l in range(L):
        woffs[l] = k
        k += sizes[l + 1] * sizes[l] + sizes[l + 1]

    with nogil:
        for kk in range(order.shape[0]):
            i = order[kk]
            for j in range(sizes[0]):
                a[j] = X[i, j]
            # forward
            for l in range(L):
                nin = sizes[l]
                nout = sizes[l + 1]
                woff = woffs[l]
                aprev = offs[l]
                aoff = offs[l + 1]
                for j in range(nout):
                    z = params[woff + nout * nin + j]
                    for k in range(nin):
                        z += params[woff + j * nin + k] * a[aprev + k]
                    a[aoff + j] = z if l == L - 1 else _act(z, act)
            # softmax over the output pre-activations
            aoff = offs[L]
            nout = sizes[L]
            mx = a[aoff]
            for j in range(1, nout):
                if a[aoff + j] > mx:
                    mx = a[aoff + j]
            s = 0.0
            for j in range(nout):
                a[aoff + j] = exp(a[aoff + j] - mx)
                s += a[aoff + j]
            for j in range(nout):
                a[aoff + j] = a[aoff + j] / s
            loss -= _log(a[aoff + y[i]])
            for j in range(nout):
                delta[aoff + j] = a[aoff + j] - (1.0 if j == y[i] else 0.0)
            # backward, updating each layer after propagating through it
            for l in range(L - 1, -1, -1):
                nin = sizes[l]
                nout = sizes[l + 1]
                woff = woffs[l]
                aprev = offs[l]
                aoff = offs[l + 1]
                if l > 0:
                    for k in range(nin):
                        d = 0.0
                        for j in range(nout):
                            d += params[woff + j * nin + k] * delta[aoff + j]
                        nd[k] = d * _dact(a[aprev + k], act)
                for j in range(nout):
                    for k in range(nin):
                        g = delta[aoff + j] * a[aprev + k]
                        velocity[woff + j * nin + k] = momentum * velocity[woff + j * nin + k] - lr * g
                        params[woff + j * nin + k] += velocity[woff + j * nin + k]
                    g = delta[aoff + j]
                    velocity[woff + nout * nin + j] = momentum * velocity[woff + nout * nin + j] - lr * g
                    params[woff + nout * nin + j] += velocity[woff + nout * nin + j]
                if l > 0:
                    for k in range(nin):
                        delta[aprev + k] = nd[k]
    return loss

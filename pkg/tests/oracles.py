"""Independent reference implementations used as test oracles.

Everything here is written as plain loops over scalars, deliberately
avoiding the vectorized code paths in the package, so agreement between the
two is meaningful.
"""

import math

import numpy as np


def oracle_normalize_adjacency(a):
    a = np.asarray(a, float)
    n = a.shape[0]
    deg = [sum(a[i][j] for j in range(n)) for i in range(n)]
    inv = [1.0 / math.sqrt(d) if d > 0 else 0.0 for d in deg]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = inv[i] * a[i, j] * inv[j]
    return out


def oracle_tconv(x, w, b=None):
    """Direct 'same'-padded temporal convolution of one (C, T, V) sample."""
    c_in, t_len, v_dim = x.shape
    c_out, _, k_len = w.shape
    pad = (k_len - 1) // 2
    y = np.zeros((c_out, t_len, v_dim))
    for o in range(c_out):
        for t in range(t_len):
            for v in range(v_dim):
                acc = 0.0
                for c in range(c_in):
                    for k in range(k_len):
                        src = t + k - pad
                        if 0 <= src < t_len:
                            acc += w[o, c, k] * x[c, src, v]
                y[o, t, v] = acc + (b[o] if b is not None else 0.0)
    return y


def oracle_gcn(x, adjacency, w, b=None):
    """Sum over subsets of 1x1 maps applied to the joint contraction."""
    c_in, t_len, v_dim = x.shape
    k_v, c_out, _ = w.shape
    y = np.zeros((c_out, t_len, v_dim))
    for k in range(k_v):
        mixed = np.zeros((c_in, t_len, v_dim))
        for c in range(c_in):
            for t in range(t_len):
                for v in range(v_dim):
                    acc = 0.0
                    for u in range(v_dim):
                        acc += x[c, t, u] * adjacency[k, u, v]
                    mixed[c, t, v] = acc
        for o in range(c_out):
            for t in range(t_len):
                for v in range(v_dim):
                    acc = 0.0
                    for c in range(c_in):
                        acc += w[k, o, c] * mixed[c, t, v]
                    y[o, t, v] += acc + (b[k, o] if b is not None else 0.0)
    return y


def oracle_similarity_graph(x, theta_w, theta_b, phi_w, phi_b):
    """Column-normalized embedded-similarity graph of one sample, one subset."""
    c_in, t_len, v_dim = x.shape
    d = theta_w.shape[0]
    e1 = np.zeros((d, v_dim))
    e2 = np.zeros((d, v_dim))
    for i in range(d):
        for v in range(v_dim):
            s1 = s2 = 0.0
            for t in range(t_len):
                a1 = a2 = 0.0
                for c in range(c_in):
                    a1 += theta_w[i, c] * x[c, t, v]
                    a2 += phi_w[i, c] * x[c, t, v]
                s1 += a1 + theta_b[i]
                s2 += a2 + phi_b[i]
            e1[i, v] = s1 / t_len
            e2[i, v] = s2 / t_len
    scores = np.zeros((v_dim, v_dim))
    for u in range(v_dim):
        for v in range(v_dim):
            scores[u, v] = sum(e1[i, u] * e2[i, v] for i in range(d))
    cmat = np.zeros((v_dim, v_dim))
    for v in range(v_dim):
        col = scores[:, v]
        m = col.max()
        ex = np.exp(col - m)
        cmat[:, v] = ex / ex.sum()
    return cmat


def oracle_adaptive_gcn(x, bmat, theta_w, theta_b, phi_w, phi_b, alpha, w, b=None):
    c_in, t_len, v_dim = x.shape
    k_v, c_out, _ = w.shape
    y = np.zeros((c_out, t_len, v_dim))
    for k in range(k_v):
        cmat = oracle_similarity_graph(x, theta_w[k], theta_b[k], phi_w[k], phi_b[k])
        g = bmat[k] + alpha * cmat
        for o in range(c_out):
            for t in range(t_len):
                for v in range(v_dim):
                    acc = 0.0
                    for c in range(c_in):
                        for u in range(v_dim):
                            acc += w[k, o, c] * x[c, t, u] * g[u, v]
                    y[o, t, v] += acc + (b[k, o] if b is not None else 0.0)
    return y


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def _conv1d_same(series, kernel, bias):
    """series (C, L), kernel (C, K) -> (L,) single-output 'same' convolution."""
    c_dim, length = series.shape
    k_len = kernel.shape[1]
    pad = (k_len - 1) // 2
    out = np.zeros(length)
    for i in range(length):
        acc = bias
        for c in range(c_dim):
            for k in range(k_len):
                src = i + k - pad
                if 0 <= src < length:
                    acc += kernel[c, k] * series[c, src]
        out[i] = acc
    return out


def oracle_stc_attention(x, ws, ws_b, wt, wt_b, w1, b1, w2, b2):
    """Sequential residual spatial/temporal/channel attention, one sample."""
    c_dim, t_len, v_dim = [int(s) for s in x.shape]
    x = x.copy()

    pooled_t = np.zeros((c_dim, v_dim))
    for c in range(c_dim):
        for v in range(v_dim):
            pooled_t[c, v] = sum(x[c, t, v] for t in range(t_len)) / t_len
    ms = np.array([_sigmoid(z) for z in _conv1d_same(pooled_t, ws[0], ws_b[0])])
    for c in range(c_dim):
        for t in range(t_len):
            for v in range(v_dim):
                x[c, t, v] = x[c, t, v] * (1.0 + ms[v])

    pooled_v = np.zeros((c_dim, t_len))
    for c in range(c_dim):
        for t in range(t_len):
            pooled_v[c, t] = sum(x[c, t, v] for v in range(v_dim)) / v_dim
    mt = np.array([_sigmoid(z) for z in _conv1d_same(pooled_v, wt[0], wt_b[0])])
    for c in range(c_dim):
        for t in range(t_len):
            for v in range(v_dim):
                x[c, t, v] = x[c, t, v] * (1.0 + mt[t])

    pooled = np.array([
        sum(x[c, t, v] for t in range(t_len) for v in range(v_dim)) / (t_len * v_dim)
        for c in range(c_dim)
    ])
    hidden = [max(0.0, sum(w1[i, c] * pooled[c] for c in range(c_dim)) + b1[i])
              for i in range(w1.shape[0])]
    mc = np.array([
        _sigmoid(sum(w2[c, i] * hidden[i] for i in range(len(hidden))) + b2[c])
        for c in range(c_dim)
    ])
    for c in range(c_dim):
        for t in range(t_len):
            for v in range(v_dim):
                x[c, t, v] = x[c, t, v] * (1.0 + mc[c])
    return x


def oracle_pearson(a, b):
    n = len(a)
    ma = sum(a) / n
    mb = sum(b) / n
    cov = sum((a[i] - ma) * (b[i] - mb) for i in range(n))
    va = sum((a[i] - ma) ** 2 for i in range(n))
    vb = sum((b[i] - mb) ** 2 for i in range(n))
    return cov / math.sqrt(va * vb)


def oracle_cca_first(x, y, ridge=1e-10):
    """First canonical correlation and weight vectors via the generalized
    eigenproblem route (inverse cross-products), independent of the SVD path."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    cxx = xc.T @ xc / (n - 1) + ridge * np.eye(x.shape[1])
    cyy = yc.T @ yc / (n - 1) + ridge * np.eye(y.shape[1])
    cxy = xc.T @ yc / (n - 1)
    m = np.linalg.inv(cxx) @ cxy @ np.linalg.inv(cyy) @ cxy.T
    vals, vecs = np.linalg.eig(m)
    order = np.argsort(-vals.real)
    r1 = math.sqrt(max(vals.real[order[0]], 0.0))
    a = vecs[:, order[0]].real
    bvec = np.linalg.inv(cyy) @ cxy.T @ a
    return r1, a, bvec


def oracle_hjorth_window(vel, acc, jerk):
    """Population-variance Hjorth parameters of one already-sliced window."""
    def var(s):
        m = sum(s) / len(s)
        return sum((x - m) ** 2 for x in s) / len(s)

    activity = var(vel)
    mobility = math.sqrt(var(acc)) / math.sqrt(var(vel))
    complexity = (math.sqrt(var(jerk)) / math.sqrt(var(acc))) / mobility
    return activity, mobility, complexity


def oracle_rank_sum_exact_p(a, b):
    """Exact two-sided p-value of the rank-sum statistic by enumerating all
    group assignments (small samples only, no ties)."""
    import itertools

    combined = list(a) + list(b)
    n1 = len(a)
    order = sorted(range(len(combined)), key=lambda i: combined[i])
    ranks = [0.0] * len(combined)
    for pos, idx in enumerate(order):
        ranks[idx] = pos + 1.0
    observed = sum(ranks[:n1])
    mean_r = n1 * (len(combined) + 1) / 2.0
    count = 0
    total = 0
    for comb in itertools.combinations(range(len(combined)), n1):
        total += 1
        stat = sum(ranks[i] for i in comb)
        if abs(stat - mean_r) >= abs(observed - mean_r) - 1e-12:
            count += 1
    return count / total


def oracle_u_statistic(a, b):
    """U of the first group: pairs won plus half-credit for ties."""
    u = 0.0
    for x in a:
        for y in b:
            if x > y:
                u += 1.0
            elif x == y:
                u += 0.5
    return u

"""Pure-Python MCMC kernels (fallback for the compiled ``_core`` extension).

Both backends consume the same uniform stream in the same order so that a
given seed yields the same chain whichever backend is loaded. Each iteration
uses one row of ``2n + 3`` uniforms: ``n`` for the Gibbs sweep (one per
context, in rank order) and ``n + 3`` for the split-merge step (two for the
anchor pair, one coin per context for split assignments, one for acceptance).

Labels are 0-based and canonical on entry and on exit of every move.
"""
from math import exp, lgamma, log

LOG_HALF = log(0.5)


def uniforms_per_iteration(n):
    return 2 * n + 3


def canonicalize_inplace(labels):
    mapping = {}
    for k in range(len(labels)):
        labels[k] = mapping.setdefault(labels[k], len(mapping))


def _logm(row, a, alpha, lg_a, k_lg_alpha):
    tot = 0
    s = 0.0
    for c in row:
        tot += c
        s += lgamma(alpha + c)
    return lg_a - lgamma(a + tot) + s - k_lg_alpha


class _State:
    """Per-block sufficient statistics for one labeling."""

    __slots__ = ("sizes", "counts", "logm")

    def __init__(self, labels, counts, K, lm):
        m = max(labels) + 1
        self.sizes = [0] * m
        self.counts = [[0] * K for _ in range(m)]
        for x, g in enumerate(labels):
            self.sizes[g] += 1
            row = self.counts[g]
            for c in range(K):
                row[c] += counts[x][c]
        self.logm = [lm(r) for r in self.counts]


def _setup(counts, a):
    K = len(counts[0])
    alpha = a / K
    lg_a = lgamma(a)
    k_lg_alpha = K * lgamma(alpha)

    def lm(row):
        return _logm(row, a, alpha, lg_a, k_lg_alpha)

    return K, lm


def _remove(x, labels, st, counts, K, lm):
    b = labels[x]
    st.sizes[b] -= 1
    if st.sizes[b] == 0:
        del st.sizes[b]
        del st.counts[b]
        del st.logm[b]
        for y in range(len(labels)):
            if labels[y] > b:
                labels[y] -= 1
        labels[x] = -1
    else:
        row = st.counts[b]
        cx = counts[x]
        for c in range(K):
            row[c] -= cx[c]
        st.logm[b] = lm(row)
        labels[x] = -1


def _weights(x, labels, st, counts, W, log_kappa, K, lm):
    """Log weights for every existing block then a new block; caches joined log m."""
    m = len(st.sizes)
    pen = [0.0] * m
    wx = W[x]
    for y in range(len(labels)):
        g = labels[y]
        if g >= 0:
            pen[g] += wx[y]
    cx = counts[x]
    lw = [0.0] * (m + 1)
    joined = [0.0] * m
    for k in range(m):
        row = st.counts[k]
        jm = lm([row[c] + cx[c] for c in range(K)])
        joined[k] = jm
        lw[k] = log(st.sizes[k]) - 2.0 * pen[k] + jm - st.logm[k]
    solo = lm(cx)
    lw[m] = log_kappa + solo
    return lw, joined, solo


def _pick(lw, u):
    mx = max(lw)
    ws = [exp(v - mx) for v in lw]
    total = 0.0
    for v in ws:
        total += v
    target = u * total
    acc = 0.0
    for k, v in enumerate(ws):
        acc += v
        if acc > target:
            return k
    return len(ws) - 1


def conditional_log_weights(x, labels, counts, W, log_kappa, a):
    """Full-conditional log weights for context ``x`` given the others.

    Returns ``(remaining_labels, log_weights)``: the labeling with ``x``
    removed (``-1`` at ``x``, emptied block deleted) and one weight per
    remaining block followed by the new-block weight.
    """
    labels = list(labels)
    K, lm = _setup(counts, a)
    st = _State(labels, counts, K, lm)
    _remove(x, labels, st, counts, K, lm)
    lw, _, _ = _weights(x, labels, st, counts, W, log_kappa, K, lm)
    return labels, lw


def gibbs_sweep(labels, counts, W, log_kappa, a, u):
    """One Polya-urn sweep over all contexts in rank order (in place)."""
    n = len(labels)
    K, lm = _setup(counts, a)
    st = _State(labels, counts, K, lm)
    for x in range(n):
        _remove(x, labels, st, counts, K, lm)
        lw, joined, solo = _weights(x, labels, st, counts, W, log_kappa, K, lm)
        k = _pick(lw, u[x])
        cx = counts[x]
        if k == len(st.sizes):
            st.sizes.append(1)
            st.counts.append(list(cx))
            st.logm.append(solo)
        else:
            st.sizes[k] += 1
            row = st.counts[k]
            for c in range(K):
                row[c] += cx[c]
            st.logm[k] = joined[k]
        labels[x] = k
    canonicalize_inplace(labels)


def merge_log_ratio(A, B, counts, W, log_kappa, a):
    """Log acceptance ratio of merging blocks ``A`` and ``B`` (lists of contexts)."""
    K, lm = _setup(counts, a)
    na = [0] * K
    nb = [0] * K
    for x in A:
        for c in range(K):
            na[c] += counts[x][c]
    for x in B:
        for c in range(K):
            nb[c] += counts[x][c]
    lik = lm([na[c] + nb[c] for c in range(K)]) - lm(na) - lm(nb)
    cross = 0.0
    for x in A:
        wx = W[x]
        for y in B:
            cross += wx[y]
    sa, sb = len(A), len(B)
    prior = -log_kappa + lgamma(sa + sb) - lgamma(sa) - lgamma(sb) - 2.0 * cross
    prop = (sa + sb - 2) * LOG_HALF
    return lik + prior + prop


def split_merge(labels, counts, W, log_kappa, a, u):
    """One split-merge Metropolis-Hastings step (in place); returns 1 if accepted."""
    n = len(labels)
    if n < 2:
        return 0
    i = min(int(u[0] * n), n - 1)
    j = min(int(u[1] * (n - 1)), n - 2)
    if j >= i:
        j += 1
    ki, kj = labels[i], labels[j]
    if ki != kj:
        A = [x for x in range(n) if labels[x] == ki]
        B = [x for x in range(n) if labels[x] == kj]
        r = merge_log_ratio(A, B, counts, W, log_kappa, a)
        if r >= 0.0 or u[n + 2] < exp(r):
            for x in B:
                labels[x] = ki
            canonicalize_inplace(labels)
            return 1
        return 0
    A = []
    B = []
    for x in range(n):
        if labels[x] != ki:
            continue
        if x == j:
            B.append(x)
        elif x == i:
            A.append(x)
        elif u[2 + x] < 0.5:
            B.append(x)
        else:
            A.append(x)
    r = -merge_log_ratio(A, B, counts, W, log_kappa, a)
    if r >= 0.0 or u[n + 2] < exp(r):
        new = max(labels) + 1
        for x in B:
            labels[x] = new
        canonicalize_inplace(labels)
        return 1
    return 0


def run(labels, counts, W, log_kappa, a, U, keep, out, gibbs=True, split=True):
    """Run ``len(U)`` iterations in place, storing kept states into ``out``.

    ``keep[t]`` marks iterations whose end state is recorded (in order).
    Returns the number of accepted split-merge proposals.
    """
    lab = [int(x) for x in labels]
    cnt = [[int(c) for c in row] for row in counts]
    Wl = [list(map(float, row)) for row in W]
    n = len(lab)
    accepted = 0
    r = 0
    for t in range(len(U)):
        row = U[t].tolist()
        if gibbs:
            gibbs_sweep(lab, cnt, Wl, log_kappa, a, row[:n])
        if split:
            accepted += split_merge(lab, cnt, Wl, log_kappa, a, row[n:])
        if keep[t]:
            out[r, :] = lab
            r += 1
    labels[:] = lab
    return accepted

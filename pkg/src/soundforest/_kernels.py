"""Compiled CART growing and forest traversal.

Trees are stored as flat node arrays: ``feature`` (-1 marks a leaf),
``threshold``, ``left`` (the right child is always ``left + 1``),
``counts`` (class counts of the bagged samples reaching the node) and
``gain`` (Gini decrease of the split).  Samples go left when
``x[feature] <= threshold``.

Split scores are compared exactly: for a cut with class counts
``(l0, l1 | r0, r1)`` the weighted child Gini is ``1 - S/n`` with
``S = (l0^2 + l1^2)/nl + (r0^2 + r1^2)/nr``, and ``S`` is kept as the
integer fraction ``num/den`` so equal scores compare equal and ties go to
the first candidate in (feature, threshold) order.
"""

import numpy as np
from numba import njit, prange

from .rng import uniform_int

# int64 cross-multiplication of scores is exact while n**5 < 2**63
EXACT_LIMIT = 6000


@njit(cache=True)
def _better(num, den, best_num, best_den, exact):
    if exact:
        return num * best_den > best_num * den
    return num / den > best_num / best_den


@njit(cache=True)
def node_best_split(ranks, uniq, n_uniq, y, samples, start, end, cand, h0, h1, exact):
    """Best cut over candidate features for ``samples[start:end]``.

    Returns ``(feature, cut_rank, threshold, num, den, l0, l1)`` with
    ``feature = -1`` when every candidate is constant on the node.
    """
    n = end - start
    c1 = 0
    for i in range(start, end):
        c1 += y[samples[i]]
    c0 = n - c1
    best_f = -1
    best_cut = -1
    best_thr = 0.0
    best_num = 0
    best_den = 1
    best_l0 = 0
    best_l1 = 0
    for ci in range(cand.shape[0]):
        f = cand[ci]
        K = n_uniq[f]
        for k in range(K):
            h0[k] = 0
            h1[k] = 0
        for i in range(start, end):
            s = samples[i]
            if y[s] == 0:
                h0[ranks[s, f]] += 1
            else:
                h1[ranks[s, f]] += 1
        l0 = 0
        l1 = 0
        last = -1
        for k in range(K):
            if h0[k] + h1[k] == 0:
                continue
            if last >= 0:
                nl = l0 + l1
                nr = n - nl
                r0 = c0 - l0
                r1 = c1 - l1
                num = (l0 * l0 + l1 * l1) * nr + (r0 * r0 + r1 * r1) * nl
                den = nl * nr
                if best_f < 0 or _better(num, den, best_num, best_den, exact):
                    best_f = f
                    best_cut = last
                    best_thr = 0.5 * (uniq[f, last] + uniq[f, k])
                    best_num = num
                    best_den = den
                    best_l0 = l0
                    best_l1 = l1
            l0 += h0[k]
            l1 += h1[k]
            last = k
    return best_f, best_cut, best_thr, best_num, best_den, best_l0, best_l1


@njit(cache=True)
def grow_tree(ranks, uniq, n_uniq, y, n_draw, replace, mtry, min_node_size, seed,
              feature, threshold, left, counts, gain, inbag):
    """Grow one tree into preallocated arrays; returns the node count.

    Randomness, all from one SplitMix64 stream seeded with ``seed``: first
    the bag (``n_draw`` uniform draws with replacement, or a partial
    Fisher-Yates shuffle without), then per split node in depth-first
    (left before right) order, ``mtry`` features by partial Fisher-Yates.
    """
    N, p = ranks.shape
    state = np.empty(1, np.uint64)
    state[0] = np.uint64(seed)
    samples = np.empty(n_draw, np.int64)
    if replace:
        for k in range(n_draw):
            s = uniform_int(state, N)
            samples[k] = s
            inbag[s] += 1
    else:
        perm = np.arange(N)
        for k in range(n_draw):
            j = k + uniform_int(state, N - k)
            tmp = perm[k]
            perm[k] = perm[j]
            perm[j] = tmp
            samples[k] = perm[k]
            inbag[perm[k]] += 1
    exact = n_draw <= EXACT_LIMIT
    feats = np.arange(p)
    kmax = uniq.shape[1]
    h0 = np.zeros(kmax, np.int64)
    h1 = np.zeros(kmax, np.int64)
    buf = np.empty(n_draw, np.int64)
    max_nodes = feature.shape[0]
    st_node = np.empty(max_nodes, np.int64)
    st_start = np.empty(max_nodes, np.int64)
    st_end = np.empty(max_nodes, np.int64)
    top = 1
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_draw
    n_nodes = 1
    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        n = end - start
        c1 = 0
        for i in range(start, end):
            c1 += y[samples[i]]
        c0 = n - c1
        counts[node, 0] = c0
        counts[node, 1] = c1
        feature[node] = -1
        if c0 == 0 or c1 == 0 or n <= min_node_size:
            continue
        for k in range(mtry):
            j = k + uniform_int(state, p - k)
            tmp = feats[k]
            feats[k] = feats[j]
            feats[j] = tmp
        cand = np.sort(feats[:mtry])
        f, cut, thr, num, den, l0, l1 = node_best_split(
            ranks, uniq, n_uniq, y, samples, start, end, cand, h0, h1, exact)
        if f < 0:
            continue
        # stable in-place partition: rows with rank <= cut first
        mid = start
        nb = 0
        for i in range(start, end):
            s = samples[i]
            if ranks[s, f] <= cut:
                samples[mid] = s
                mid += 1
            else:
                buf[nb] = s
                nb += 1
        for i in range(nb):
            samples[mid + i] = buf[i]
        child = n_nodes
        n_nodes += 2
        feature[node] = f
        threshold[node] = thr
        left[node] = child
        gain[node] = (num / den) / n - (c0 * c0 + c1 * c1) / (n * n)
        st_node[top] = child + 1
        st_start[top] = mid
        st_end[top] = end
        top += 1
        st_node[top] = child
        st_start[top] = start
        st_end[top] = mid
        top += 1
    return n_nodes


@njit(cache=True, parallel=True)
def grow_trees(ranks, uniq, n_uniq, y, n_draw, replace, mtry, min_node_size, seeds, max_nodes):
    T = seeds.shape[0]
    N = ranks.shape[0]
    feature = np.full((T, max_nodes), -1, np.int32)
    threshold = np.zeros((T, max_nodes), np.float64)
    left = np.full((T, max_nodes), -1, np.int32)
    counts = np.zeros((T, max_nodes, 2), np.int32)
    gain = np.zeros((T, max_nodes), np.float64)
    inbag = np.zeros((T, N), np.uint16)
    n_nodes = np.zeros(T, np.int64)
    for t in prange(T):
        n_nodes[t] = grow_tree(ranks, uniq, n_uniq, y, n_draw, replace, mtry, min_node_size,
                               seeds[t], feature[t], threshold[t], left[t], counts[t],
                               gain[t], inbag[t])
    return feature, threshold, left, counts, gain, inbag, n_nodes


@njit(cache=True)
def _leaf_vote(X, r, feature, threshold, left, counts, base):
    node = base
    while feature[node] >= 0:
        if X[r, feature[node]] <= threshold[node]:
            node = base + left[node]
        else:
            node = base + left[node] + 1
    return 1 if counts[node, 1] > counts[node, 0] else 0


@njit(cache=True, parallel=True)
def tree_votes(X, feature, threshold, left, counts, offsets):
    """Per-tree class votes, shape ``(n_rows, n_trees)``."""
    n = X.shape[0]
    T = offsets.shape[0] - 1
    out = np.empty((n, T), np.int8)
    for r in prange(n):
        for t in range(T):
            out[r, t] = _leaf_vote(X, r, feature, threshold, left, counts, offsets[t])
    return out


@njit(cache=True, parallel=True)
def forest_votes(X, feature, threshold, left, counts, offsets):
    n = X.shape[0]
    T = offsets.shape[0] - 1
    out = np.zeros((n, 2), np.int64)
    for r in prange(n):
        v1 = 0
        for t in range(T):
            v1 += _leaf_vote(X, r, feature, threshold, left, counts, offsets[t])
        out[r, 0] = T - v1
        out[r, 1] = v1
    return out


@njit(cache=True, parallel=True)
def oob_votes(X, feature, threshold, left, counts, offsets, inbag):
    """Votes per training row from the trees whose bag excludes it."""
    n = X.shape[0]
    T = offsets.shape[0] - 1
    out = np.zeros((n, 2), np.int64)
    for r in prange(n):
        v0 = 0
        v1 = 0
        for t in range(T):
            if inbag[t, r] == 0:
                if _leaf_vote(X, r, feature, threshold, left, counts, offsets[t]):
                    v1 += 1
                else:
                    v0 += 1
        out[r, 0] = v0
        out[r, 1] = v1
    return out

"""Split-search and prediction kernels in two interchangeable backends.

The numba path compiles scalar loops; the numpy path vectorizes the same
arithmetic. Both are written so that every floating-point expression has the
same structure and operand order, and all class-count bookkeeping stays in
exact int64 (sums of squared counts), so the two backends return bit-identical
results. Tie-breaking is first-strict-minimum in both: boundaries are scanned
in mergesort order and features in sampled order.

The active backend is read from dgal._backend at call time.
"""

from __future__ import annotations

import numpy as np

from . import _backend

# weighted Gini cost of a node with counts c and size n is n - sum(c^2)/n;
# both kernels minimize the summed cost of the two children


def _best_split_numpy(Xn, yn, feats, num_classes, min_leaf):
    n = Xn.shape[0]
    onehot = np.zeros((n, num_classes), dtype=np.int64)
    onehot[np.arange(n), yn] = 1
    nl = np.arange(1, n, dtype=np.float64)
    nr = np.arange(n - 1, 0, -1, dtype=np.float64)

    best_cost = np.inf
    best_feat = -1
    best_thr = 0.0
    for f in feats:
        col = Xn[:, f]
        order = np.argsort(col, kind="mergesort")
        sv = col[order]
        if sv[0] == sv[-1]:
            continue
        counts_left = np.cumsum(onehot[order], axis=0)
        totals = counts_left[-1]
        sl = np.sum(counts_left**2, axis=1)[:-1]
        sr = np.sum((totals - counts_left) ** 2, axis=1)[:-1]
        cost = (nl - sl / nl) + (nr - sr / nr)
        valid = (sv[:-1] != sv[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        cost = np.where(valid, cost, np.inf)
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost = float(cost[i])
            best_feat = int(f)
            best_thr = 0.5 * (sv[i] + sv[i + 1])
    return best_feat, best_thr, best_cost


def _best_split_scalar(Xn, yn, feats, num_classes, min_leaf):
    n = Xn.shape[0]
    best_cost = np.inf
    best_feat = -1
    best_thr = 0.0
    for fi in range(feats.shape[0]):
        f = feats[fi]
        col = Xn[:, f].copy()
        order = np.argsort(col, kind="mergesort")
        sv = col[order]
        if sv[0] == sv[n - 1]:
            continue
        cl = np.zeros(num_classes, dtype=np.int64)
        cr = np.zeros(num_classes, dtype=np.int64)
        for i in range(n):
            cr[yn[i]] += 1
        sl = np.int64(0)
        sr = np.int64(0)
        for k in range(num_classes):
            sr += cr[k] * cr[k]
        for i in range(n - 1):
            k = yn[order[i]]
            sl += 2 * cl[k] + 1
            cl[k] += 1
            sr -= 2 * cr[k] - 1
            cr[k] -= 1
            if i + 1 < min_leaf or n - i - 1 < min_leaf:
                continue
            if sv[i] == sv[i + 1]:
                continue
            nlf = np.float64(i + 1)
            nrf = np.float64(n - i - 1)
            cost = (nlf - sl / nlf) + (nrf - sr / nrf)
            if cost < best_cost:
                best_cost = cost
                best_feat = f
                best_thr = 0.5 * (sv[i] + sv[i + 1])
    return int(best_feat), float(best_thr), float(best_cost)


def _predict_add_numpy(feature, threshold, left, right, leaf_proba, roots, X, out):
    n = X.shape[0]
    rows = np.arange(n)
    for root in roots:
        nodes = np.full(n, root, dtype=np.int64)
        pending = feature[nodes] >= 0
        while pending.any():
            idx = rows[pending]
            cur = nodes[idx]
            go_left = X[idx, feature[cur]] <= threshold[cur]
            nodes[idx] = np.where(go_left, left[cur], right[cur])
            pending = feature[nodes] >= 0
        out += leaf_proba[nodes]


def _predict_add_scalar(feature, threshold, left, right, leaf_proba, roots, X, out):
    n = X.shape[0]
    num_classes = out.shape[1]
    for i in range(n):
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            for k in range(num_classes):
                out[i, k] += leaf_proba[node, k]


if _backend.HAVE_NUMBA:
    from numba import njit

    _best_split_numba = njit(cache=True)(_best_split_scalar)
    _predict_add_numba = njit(cache=True)(_predict_add_scalar)


def best_split(Xn, yn, feats, num_classes, min_leaf):
    """Best (feature, threshold) over the sampled features, by summed child
    Gini cost. Returns (-1, 0.0, inf) when no valid split exists."""
    if _backend.BACKEND == "numba":
        return _best_split_numba(Xn, yn, feats, num_classes, min_leaf)
    return _best_split_numpy(Xn, yn, feats, num_classes, min_leaf)


def predict_add(feature, threshold, left, right, leaf_proba, roots, X, out):
    """Accumulate each tree's leaf distribution into out, trees in order."""
    if _backend.BACKEND == "numba":
        _predict_add_numba(feature, threshold, left, right, leaf_proba, roots, X, out)
    else:
        _predict_add_numpy(feature, threshold, left, right, leaf_proba, roots, X, out)

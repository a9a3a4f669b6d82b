"""Hot numeric kernels for tree building and ensemble scoring.

Two interchangeable backends are provided: numba @njit kernels (default)
and a pure-numpy fallback. Select with the environment variable
``HERDCFX_BACKEND=numba|numpy``; the default is numba when importable.

Both backends are written to produce bit-identical trees: every floating
accumulation happens in the same order (stable sort by feature value with
row-index tie-break, sequential prefix sums), and split tie-breaks are
first-strictly-greater in (feature index, threshold) scan order.

Flattened tree layout: parallel arrays indexed by node id. Internal nodes
have feature >= 0; leaves have feature == -1 and carry the Newton-step
value in ``value``. Children of a split node are allocated left-then-right
in node-id order. NaN inputs follow ``default_left``.
"""

from __future__ import annotations

import os

import numpy as np

_BACKEND = os.environ.get("HERDCFX_BACKEND", "").strip().lower()
if _BACKEND not in ("", "numba", "numpy"):
    raise ValueError(f"HERDCFX_BACKEND must be 'numba' or 'numpy', got {_BACKEND!r}")

NUMBA_AVAILABLE = False
if _BACKEND != "numpy":
    try:
        from numba import njit

        NUMBA_AVAILABLE = True
    except ImportError:
        if _BACKEND == "numba":
            raise

if not NUMBA_AVAILABLE:
    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(func):
            return func
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return wrap


# ---------------------------------------------------------------------------
# Tree building


def _max_nodes(max_depth: int) -> int:
    return 2 ** (max_depth + 1) - 1


@njit(cache=True)
def _build_tree_core_nb(X, g, h, presort, node_of, n_active, max_depth,
                        min_leaf, lam,
                        feature, threshold, left, right, value, stat_g, stat_h,
                        stat_c):
    n, nfeat = X.shape
    # root stats in ascending row order
    gs = 0.0
    hs = 0.0
    for i in range(n):
        if node_of[i] == 0:
            gs += g[i]
            hs += h[i]
    stat_g[0] = gs
    stat_h[0] = hs
    stat_c[0] = n_active

    lo = 0
    hi = 1
    nxt = 1
    width = 1
    for _depth in range(max_depth):
        best_gain = np.full(width, 0.0)
        best_feat = np.full(width, -1, dtype=np.int64)
        best_thr = np.zeros(width)
        gl = np.zeros(width)
        hl = np.zeros(width)
        cl = np.zeros(width, dtype=np.int64)
        prev = np.zeros(width)
        for f in range(nfeat):
            for k in range(width):
                gl[k] = 0.0
                hl[k] = 0.0
                cl[k] = 0
            for ii in range(n):
                i = presort[f, ii]
                nd = node_of[i]
                if nd < lo or nd >= hi:
                    continue
                k = nd - lo
                x = X[i, f]
                if cl[k] > 0 and x > prev[k]:
                    nl = cl[k]
                    nr = stat_c[nd] - nl
                    if nl >= min_leaf and nr >= min_leaf:
                        gr = stat_g[nd] - gl[k]
                        hr = stat_h[nd] - hl[k]
                        gain = (gl[k] * gl[k] / (hl[k] + lam)
                                + gr * gr / (hr + lam)
                                - stat_g[nd] * stat_g[nd] / (stat_h[nd] + lam))
                        if gain > best_gain[k]:
                            best_gain[k] = gain
                            best_feat[k] = f
                            best_thr[k] = 0.5 * (prev[k] + x)
                gl[k] += g[i]
                hl[k] += h[i]
                cl[k] += 1
                prev[k] = x
        # materialize splits, allocate children in node order
        any_split = False
        for k in range(width):
            nd = lo + k
            if best_feat[k] >= 0 and stat_c[nd] >= 2 * min_leaf:
                feature[nd] = best_feat[k]
                threshold[nd] = best_thr[k]
                left[nd] = nxt
                right[nd] = nxt + 1
                nxt += 2
                any_split = True
        if not any_split:
            break
        # route samples, accumulating child stats in ascending row order
        for i in range(n):
            nd = node_of[i]
            if nd < lo or nd >= hi or feature[nd] < 0:
                continue
            if X[i, feature[nd]] <= threshold[nd]:
                child = left[nd]
            else:
                child = right[nd]
            node_of[i] = child
            stat_g[child] += g[i]
            stat_h[child] += h[i]
            stat_c[child] += 1
        lo = hi
        hi = nxt
        width = hi - lo
        if width == 0:
            break
    # finalize leaves
    for nd in range(nxt):
        if feature[nd] < 0:
            value[nd] = -stat_g[nd] / (stat_h[nd] + lam)
    return nxt


def _build_tree_numba(X, g, h, presort, sample_mask, max_depth, min_leaf, lam):
    n = X.shape[0]
    node_of = np.where(sample_mask, 0, -1).astype(np.int64)
    n_active = int(sample_mask.sum())
    cap = _max_nodes(max_depth)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    stat_g = np.zeros(cap)
    stat_h = np.zeros(cap)
    stat_c = np.zeros(cap, dtype=np.int64)
    n_nodes = _build_tree_core_nb(X, g, h, presort, node_of, n_active,
                                  max_depth, min_leaf, lam, feature, threshold,
                                  left, right, value, stat_g, stat_h, stat_c)
    sl = slice(0, n_nodes)
    return (feature[sl].copy(), threshold[sl].copy(), left[sl].copy(),
            right[sl].copy(), value[sl].copy())


def _build_tree_numpy(X, g, h, presort, sample_mask, max_depth, min_leaf, lam):
    """Pure-numpy fallback: per-node stable argsort + sequential cumsums."""
    n, nfeat = X.shape
    node_of = np.where(sample_mask, 0, -1).astype(np.int64)
    cap = _max_nodes(max_depth)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    stat_g = np.zeros(cap)
    stat_h = np.zeros(cap)
    stat_c = np.zeros(cap, dtype=np.int64)

    root_rows = np.flatnonzero(sample_mask)
    stat_g[0] = np.cumsum(g[root_rows])[-1] if root_rows.size else 0.0
    stat_h[0] = np.cumsum(h[root_rows])[-1] if root_rows.size else 0.0
    stat_c[0] = root_rows.size

    lo, hi, nxt = 0, 1, 1
    for _depth in range(max_depth):
        any_split = False
        for nd in range(lo, hi):
            rows = np.flatnonzero(node_of == nd)
            cnt = rows.size
            if cnt < 2 * min_leaf:
                continue
            G, H = stat_g[nd], stat_h[nd]
            parent_score = G * G / (H + lam)
            best_gain, best_feat, best_thr = 0.0, -1, 0.0
            for f in range(nfeat):
                xv = X[rows, f]
                order = np.argsort(xv, kind="stable")
                xs = xv[order]
                gs = np.cumsum(g[rows][order])
                hs = np.cumsum(h[rows][order])
                # split after position k: left = xs[:k+1]
                k = np.arange(cnt - 1)
                ok = (xs[1:] > xs[:-1]) & (k + 1 >= min_leaf) & (cnt - k - 1 >= min_leaf)
                if not ok.any():
                    continue
                glv = gs[:-1]
                hlv = hs[:-1]
                grv = G - glv
                hrv = H - hlv
                gains = np.where(
                    ok,
                    glv * glv / (hlv + lam) + grv * grv / (hrv + lam) - parent_score,
                    -np.inf,
                )
                j = int(np.argmax(gains))
                if gains[j] > best_gain:
                    best_gain = float(gains[j])
                    best_feat = f
                    best_thr = 0.5 * (xs[j] + xs[j + 1])
            if best_feat >= 0:
                feature[nd] = best_feat
                threshold[nd] = best_thr
                left[nd] = nxt
                right[nd] = nxt + 1
                nxt += 2
                any_split = True
        if not any_split:
            break
        for nd in range(lo, hi):
            if feature[nd] < 0:
                continue
            rows = np.flatnonzero(node_of == nd)
            go_left = X[rows, feature[nd]] <= threshold[nd]
            lrows = rows[go_left]
            rrows = rows[~go_left]
            node_of[lrows] = left[nd]
            node_of[rrows] = right[nd]
            for child, crows in ((left[nd], lrows), (right[nd], rrows)):
                stat_g[child] = np.cumsum(g[crows])[-1] if crows.size else 0.0
                stat_h[child] = np.cumsum(h[crows])[-1] if crows.size else 0.0
                stat_c[child] = crows.size
        lo, hi = hi, nxt
        if hi == lo:
            break
    for nd in range(nxt):
        if feature[nd] < 0:
            value[nd] = -stat_g[nd] / (stat_h[nd] + lam)
    sl = slice(0, nxt)
    return (feature[sl].copy(), threshold[sl].copy(), left[sl].copy(),
            right[sl].copy(), value[sl].copy())


# ---------------------------------------------------------------------------
# Ensemble scoring


@njit(cache=True)
def _predict_margin_nb(X, feature, threshold, left, right, value, default_left,
                       offsets, learning_rate, base_score):
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            nd = offsets[t]
            while feature[nd] >= 0:
                x = X[i, feature[nd]]
                if np.isnan(x):
                    nd = left[nd] if default_left[nd] else right[nd]
                elif x <= threshold[nd]:
                    nd = left[nd]
                else:
                    nd = right[nd]
            acc += value[nd]
        out[i] = base_score + learning_rate * acc
    return out


def _predict_margin_numba(X, feature, threshold, left, right, value,
                          default_left, offsets, learning_rate, base_score):
    return _predict_margin_nb(X, feature, threshold, left, right, value,
                              default_left, offsets, learning_rate, base_score)


def _predict_margin_numpy(X, feature, threshold, left, right, value,
                          default_left, offsets, learning_rate, base_score):
    n = X.shape[0]
    acc = np.zeros(n)
    n_trees = offsets.shape[0] - 1
    for t in range(n_trees):
        cur = np.full(n, offsets[t], dtype=np.int64)
        while True:
            feats = feature[cur]
            internal = feats >= 0
            if not internal.any():
                break
            rows = np.flatnonzero(internal)
            nd = cur[rows]
            xv = X[rows, feature[nd]]
            nan_mask = np.isnan(xv)
            go_left = np.where(nan_mask, default_left[nd], xv <= threshold[nd])
            cur[rows] = np.where(go_left, left[nd], right[nd])
        acc += value[cur]
    return base_score + learning_rate * acc


# ---------------------------------------------------------------------------
# Backend dispatch

if NUMBA_AVAILABLE:
    BACKEND = "numba"
    build_tree = _build_tree_numba
    predict_margin = _predict_margin_numba
else:
    BACKEND = "numpy"
    build_tree = _build_tree_numpy
    predict_margin = _predict_margin_numpy

BACKENDS = {
    "numpy": (_build_tree_numpy, _predict_margin_numpy),
}
if NUMBA_AVAILABLE:
    BACKENDS["numba"] = (_build_tree_numba, _predict_margin_numba)

"""Numba implementations of the hot kernels.

Bit-identical to _kernels_numpy.py: same evaluation order, no fastmath, and
prange only over fully independent outputs so results do not depend on the
thread count. Keep the two files in sync when touching either.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

BACKEND = "numba"


def set_threads(n: int) -> None:
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


@njit(cache=True, parallel=True, nogil=True)
def affine_trilinear(src, a, b, out_dims):
    m0, m1, m2 = src.shape
    n0, n1, n2 = out_dims
    out = np.empty((n0, n1, n2), dtype=np.float32)
    for i in prange(n0):
        fi = np.float64(i)
        for j in range(n1):
            fj = np.float64(j)
            for k in range(n2):
                fk = np.float64(k)
                q0 = a[0, 0] * fi + a[0, 1] * fj + a[0, 2] * fk + b[0]
                q1 = a[1, 0] * fi + a[1, 1] * fj + a[1, 2] * fk + b[1]
                q2 = a[2, 0] * fi + a[2, 1] * fj + a[2, 2] * fk + b[2]
                if q0 <= -1.0 or q0 >= m0 or q1 <= -1.0 or q1 >= m1 \
                        or q2 <= -1.0 or q2 >= m2:
                    out[i, j, k] = np.float32(0.0)
                    continue
                f0 = np.floor(q0)
                f1 = np.floor(q1)
                f2 = np.floor(q2)
                d0 = q0 - f0
                d1 = q1 - f1
                d2 = q2 - f2
                i0 = np.int64(f0)
                i1 = np.int64(f1)
                i2 = np.int64(f2)
                acc = 0.0
                for c0 in range(2):
                    ii = i0 + c0
                    if ii < 0 or ii >= m0:
                        continue
                    w0 = d0 if c0 == 1 else 1.0 - d0
                    for c1 in range(2):
                        jj = i1 + c1
                        if jj < 0 or jj >= m1:
                            continue
                        w1 = d1 if c1 == 1 else 1.0 - d1
                        for c2 in range(2):
                            kk = i2 + c2
                            if kk < 0 or kk >= m2:
                                continue
                            w2 = d2 if c2 == 1 else 1.0 - d2
                            acc += w0 * w1 * w2 * src[ii, jj, kk]
                out[i, j, k] = np.float32(acc)
    return out


@njit(cache=True, parallel=True, nogil=True)
def affine_nearest(src, a, b, out_dims):
    m0, m1, m2 = src.shape
    n0, n1, n2 = out_dims
    out = np.zeros((n0, n1, n2), dtype=src.dtype)
    for i in prange(n0):
        fi = np.float64(i)
        for j in range(n1):
            fj = np.float64(j)
            for k in range(n2):
                fk = np.float64(k)
                q0 = a[0, 0] * fi + a[0, 1] * fj + a[0, 2] * fk + b[0]
                q1 = a[1, 0] * fi + a[1, 1] * fj + a[1, 2] * fk + b[1]
                q2 = a[2, 0] * fi + a[2, 1] * fj + a[2, 2] * fk + b[2]
                i0 = np.int64(np.floor(q0 + 0.5))
                i1 = np.int64(np.floor(q1 + 0.5))
                i2 = np.int64(np.floor(q2 + 0.5))
                if 0 <= i0 < m0 and 0 <= i1 < m1 and 0 <= i2 < m2:
                    out[i, j, k] = src[i0, i1, i2]
    return out


@njit(cache=True, nogil=True)
def _column_best(x, y, idx, feat, min_leaf):
    """Best (impurity, threshold) for one feature column; inf when no split."""
    n = idx.shape[0]
    vals = np.empty(n, dtype=np.float32)
    for r in range(n):
        vals[r] = x[idx[r], feat]
    order = np.argsort(vals)
    n_f = np.float64(n)
    total1 = np.int64(0)
    for r in range(n):
        total1 += y[idx[r]]
    best_w = np.inf
    best_thr = 0.0
    c1 = np.int64(0)
    for p in range(n - 1):
        c1 += y[idx[order[p]]]
        if vals[order[p]] == vals[order[p + 1]]:
            continue
        pos = p + 1
        if pos < min_leaf or (n - pos) < min_leaf:
            continue
        nl = np.float64(pos)
        nr = n_f - nl
        n1l = np.float64(c1)
        n1r = np.float64(total1) - n1l
        p1l = n1l / nl
        p0l = (nl - n1l) / nl
        gl = 1.0 - p1l * p1l - p0l * p0l
        p1r = n1r / nr
        p0r = (nr - n1r) / nr
        gr = 1.0 - p1r * p1r - p0r * p0r
        w = (nl * gl + nr * gr) / n_f
        if w < best_w:
            best_w = w
            best_thr = (np.float64(vals[order[p]])
                        + np.float64(vals[order[p + 1]])) / 2.0
    return best_w, best_thr


@njit(cache=True, parallel=True, nogil=True)
def _best_split_impl(x, y, idx, feats, min_leaf):
    k = feats.shape[0]
    ws = np.empty(k, dtype=np.float64)
    thrs = np.empty(k, dtype=np.float64)
    for c in prange(k):
        w, t = _column_best(x, y, idx, feats[c], min_leaf)
        ws[c] = w
        thrs[c] = t
    best_w = np.inf
    best_f = np.int64(-1)
    best_thr = 0.0
    found = False
    for c in range(k):
        if not np.isfinite(ws[c]):
            continue
        if (not found) or ws[c] < best_w \
                or (ws[c] == best_w and feats[c] < best_f):
            found = True
            best_w = ws[c]
            best_f = feats[c]
            best_thr = thrs[c]
    return found, best_f, best_thr


def best_split(x, y, idx, feats, min_leaf):
    n = idx.shape[0]
    if n < 2 * min_leaf or n < 2 or feats.shape[0] == 0:
        return False, -1, 0.0
    found, f, thr = _best_split_impl(x, y, idx, feats, np.int64(min_leaf))
    return bool(found), int(f), float(thr)


@njit(cache=True, parallel=True, nogil=True)
def forest_predict(node_feature, node_threshold, node_left, node_right,
                   node_p1, tree_roots, x):
    n = x.shape[0]
    n_trees = tree_roots.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        acc = 0.0
        for t in range(n_trees):
            node = tree_roots[t]
            while node_feature[node] >= 0:
                if x[i, node_feature[node]] <= node_threshold[node]:
                    node = node_left[node]
                else:
                    node = node_right[node]
            acc += node_p1[node]
        out[i] = acc / n_trees
    return out

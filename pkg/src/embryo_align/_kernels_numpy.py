"""Pure numpy implementations of the hot kernels.

This is the reference backend. The numba backend in _kernels_numba.py must
produce bit-identical results, so the arithmetic here is written with an
explicit evaluation order that the compiled code mirrors. Keep the two files
in sync when touching either.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def set_threads(n: int) -> None:
    """Single-threaded backend; nothing to configure."""


def affine_trilinear(src, a, b, out_dims):
    """Sample src at q = a @ idx + b for every output index, trilinearly.

    Out-of-range corners contribute zero. Output voxels whose sample point
    lies entirely outside [-1, m] on any axis are zero.
    """
    m0, m1, m2 = src.shape
    n0, n1, n2 = out_dims
    out = np.empty((n0, n1, n2), dtype=np.float32)
    src64 = src  # gathered values are f32; products promote to f64
    j = np.arange(n1, dtype=np.float64)[:, None]
    k = np.arange(n2, dtype=np.float64)[None, :]
    for i in range(n0):
        fi = np.float64(i)
        q0 = a[0, 0] * fi + a[0, 1] * j + a[0, 2] * k + b[0]
        q1 = a[1, 0] * fi + a[1, 1] * j + a[1, 2] * k + b[1]
        q2 = a[2, 0] * fi + a[2, 1] * j + a[2, 2] * k + b[2]
        inside = (q0 > -1.0) & (q0 < m0) & (q1 > -1.0) & (q1 < m1) \
            & (q2 > -1.0) & (q2 < m2)
        f0 = np.floor(q0)
        f1 = np.floor(q1)
        f2 = np.floor(q2)
        d0 = q0 - f0
        d1 = q1 - f1
        d2 = q2 - f2
        i0 = f0.astype(np.int64)
        i1 = f1.astype(np.int64)
        i2 = f2.astype(np.int64)
        acc = np.zeros(q0.shape, dtype=np.float64)
        for c0 in (0, 1):
            ii = i0 + c0
            w0 = d0 if c0 else 1.0 - d0
            v0 = (ii >= 0) & (ii < m0)
            iic = np.clip(ii, 0, m0 - 1)
            for c1 in (0, 1):
                jj = i1 + c1
                w1 = d1 if c1 else 1.0 - d1
                v01 = v0 & (jj >= 0) & (jj < m1)
                jjc = np.clip(jj, 0, m1 - 1)
                for c2 in (0, 1):
                    kk = i2 + c2
                    w2 = d2 if c2 else 1.0 - d2
                    valid = v01 & (kk >= 0) & (kk < m2)
                    kkc = np.clip(kk, 0, m2 - 1)
                    vals = np.where(valid, src64[iic, jjc, kkc], np.float32(0.0))
                    acc += w0 * w1 * w2 * vals
        out[i] = np.where(inside, acc.astype(np.float32), np.float32(0.0))
    return out


def affine_nearest(src, a, b, out_dims):
    """Sample src at q = a @ idx + b with nearest-neighbour rounding.

    Rounding is floor(q + 0.5); out-of-range samples are zero. The output
    dtype matches src.
    """
    m0, m1, m2 = src.shape
    n0, n1, n2 = out_dims
    out = np.zeros((n0, n1, n2), dtype=src.dtype)
    j = np.arange(n1, dtype=np.float64)[:, None]
    k = np.arange(n2, dtype=np.float64)[None, :]
    for i in range(n0):
        fi = np.float64(i)
        q0 = a[0, 0] * fi + a[0, 1] * j + a[0, 2] * k + b[0]
        q1 = a[1, 0] * fi + a[1, 1] * j + a[1, 2] * k + b[1]
        q2 = a[2, 0] * fi + a[2, 1] * j + a[2, 2] * k + b[2]
        i0 = np.floor(q0 + 0.5).astype(np.int64)
        i1 = np.floor(q1 + 0.5).astype(np.int64)
        i2 = np.floor(q2 + 0.5).astype(np.int64)
        valid = (i0 >= 0) & (i0 < m0) & (i1 >= 0) & (i1 < m1) \
            & (i2 >= 0) & (i2 < m2)
        i0c = np.clip(i0, 0, m0 - 1)
        i1c = np.clip(i1, 0, m1 - 1)
        i2c = np.clip(i2, 0, m2 - 1)
        out[i] = np.where(valid, src[i0c, i1c, i2c], src.dtype.type(0))
    return out


def best_split(x, y, idx, feats, min_leaf):
    """Exhaustive best Gini split over the given feature subset.

    x is the full (n_samples, n_features) float32 matrix, y the uint8 labels,
    idx the row indices in this node, feats the candidate feature columns.
    Thresholds are midpoints between consecutive distinct sorted values.
    Ties on impurity break toward the lower global feature index, then the
    lower threshold. Returns (found, feature, threshold).
    """
    n = idx.shape[0]
    if n < 2 * min_leaf or n < 2 or feats.shape[0] == 0:
        return False, -1, 0.0
    vals = x[np.ix_(idx, feats)]                      # (n, k) float32
    order = np.argsort(vals, axis=0, kind="stable")
    sv = np.take_along_axis(vals, order, axis=0)
    sy = y[idx][order]                                # (n, k) uint8
    c1 = np.cumsum(sy, axis=0, dtype=np.int64)
    total1 = c1[-1, 0]
    n_f = np.float64(n)
    pos = np.arange(1, n, dtype=np.int64)[:, None]    # nl at split after i = i+1
    nl = pos.astype(np.float64)
    nr = n_f - nl
    n1l = c1[:-1].astype(np.float64)
    n1r = np.float64(total1) - n1l
    p1l = n1l / nl
    p0l = (nl - n1l) / nl
    gl = 1.0 - p1l * p1l - p0l * p0l
    p1r = n1r / nr
    p0r = (nr - n1r) / nr
    gr = 1.0 - p1r * p1r - p0r * p0r
    w = (nl * gl + nr * gr) / n_f
    valid = (sv[1:] != sv[:-1]) & (pos >= min_leaf) & ((n - pos) >= min_leaf)
    w = np.where(valid, w, np.inf)
    bi = np.argmin(w, axis=0)                         # first minimum: lowest threshold
    cols = np.arange(feats.shape[0])
    bw = w[bi, cols]
    order2 = np.lexsort((feats, bw))                  # impurity, then global feature index
    best = order2[0]
    if not np.isfinite(bw[best]):
        return False, -1, 0.0
    i = bi[best]
    thr = (np.float64(sv[i, best]) + np.float64(sv[i + 1, best])) / 2.0
    return True, int(feats[best]), float(thr)


def forest_predict(node_feature, node_threshold, node_left, node_right,
                   node_p1, tree_roots, x):
    """Mean leaf class-1 fraction across trees for each row of x.

    Nodes are flattened arrays; node_feature < 0 marks a leaf. Descent takes
    the left child when x[feature] <= threshold.
    """
    n = x.shape[0]
    n_trees = tree_roots.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
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

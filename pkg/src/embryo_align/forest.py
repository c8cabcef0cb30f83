"""From-scratch random forest over flattened mid-sagittal slice features.

Binary CART trees with Gini splits; bootstrap and per-node feature subsets
drawn from numpy's 64-bit permuted-congruential generator seeded by
(seed, tree_index), so each tree is reproducible independently of training
order. Growth order (depth-first, left child first) is part of the model
definition because the feature-subset draws consume the same stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ArgumentError, ModelShapeError, ParseError
from .volume import Volume3D, grid_center

FEATURE_LEN = 192 * 192
SLICE_GRID = 192
SLICE_INDEX = 96
BBOX_MARGIN = 1.1


def mid_sagittal_features(candidate_volume: Volume3D) -> np.ndarray:
    """Flattened, max-normalized central axis2 slice of a zoomed candidate.

    The zoom fits the volume's nonzero bounding box into the 192-wide grid
    with a 10% margin; an empty volume yields the all-zero vector. Only the
    index-96 plane is sampled; the affine is arranged so the result is
    bit-identical to slicing a full 192-cubed rescale.
    """
    data = candidate_volume.data
    nz = np.nonzero(data)
    if nz[0].size == 0:
        return np.zeros(FEATURE_LEN, dtype=np.float32)
    extent = max(
        float(nz[a].max() - nz[a].min() + 1) * candidate_volume.spacing[a]
        for a in range(3))
    s_in = float(min(candidate_volume.spacing))
    zoom = SLICE_GRID * s_in / (BBOX_MARGIN * extent)
    center = grid_center(candidate_volume)

    spacing_in = np.array(candidate_volume.spacing, dtype=np.float64)
    step = s_in / zoom
    c_idx = (SLICE_GRID - 1) / 2.0
    a = np.diag(step / spacing_in)
    b = (center - step * c_idx) / spacing_in
    b = b.copy()
    b[2] = a[2, 2] * np.float64(SLICE_INDEX) + b[2]
    slab = kernels.affine_trilinear(data, a, b, (SLICE_GRID, SLICE_GRID, 1))
    plane = slab[:, :, 0]
    peak = float(plane.max())
    if peak <= 0.0:
        return np.zeros(FEATURE_LEN, dtype=np.float32)
    return np.clip(plane / np.float32(peak), 0.0, 1.0).ravel()


def gini_impurity(counts) -> float:
    """1 - p0^2 - p1^2 for a (count0, count1) pair."""
    n0, n1 = counts
    if n0 < 0 or n1 < 0 or n0 + n1 < 1:
        raise ArgumentError(f"invalid class counts {counts!r}")
    total = n0 + n1
    p0 = n0 / total
    p1 = n1 / total
    return 1.0 - p0 * p0 - p1 * p1


@dataclass(frozen=True)
class TreeNode:
    """Internal node (feature >= 0) or leaf (feature = -1 with counts)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: tuple[int, int] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_features_rule: str = "sqrt"
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ArgumentError("n_trees must be >= 1")
        if self.max_features_rule not in ("sqrt", "all"):
            raise ArgumentError(
                f"unknown max_features_rule {self.max_features_rule!r}")
        if self.min_samples_leaf < 1:
            raise ArgumentError("min_samples_leaf must be >= 1")


@dataclass
class ForestModel:
    trees: list
    feature_len: int
    train_seed: int
    params: ForestParams
    _flat: tuple | None = field(default=None, repr=False, compare=False)

    def flattened(self) -> tuple:
        """Arrays (feature, threshold, left, right, p1, roots) for traversal."""
        if self._flat is None:
            feats, thrs, lefts, rights, p1s, roots = [], [], [], [], [], []
            for root in self.trees:
                roots.append(len(feats))
                stack = [root]
                slots = [len(feats)]
                feats.append(0)
                thrs.append(0.0)
                lefts.append(-1)
                rights.append(-1)
                p1s.append(0.0)
                while stack:
                    node = stack.pop()
                    slot = slots.pop()
                    if node.is_leaf:
                        feats[slot] = -1
                        p1s[slot] = node.counts[1] / sum(node.counts)
                        continue
                    feats[slot] = node.feature
                    thrs[slot] = node.threshold
                    for child, key in ((node.left, "left"), (node.right, "right")):
                        idx = len(feats)
                        feats.append(0)
                        thrs.append(0.0)
                        lefts.append(-1)
                        rights.append(-1)
                        p1s.append(0.0)
                        if key == "left":
                            lefts[slot] = idx
                        else:
                            rights[slot] = idx
                        stack.append(child)
                        slots.append(idx)
            self._flat = (
                np.array(feats, dtype=np.int64),
                np.array(thrs, dtype=np.float64),
                np.array(lefts, dtype=np.int64),
                np.array(rights, dtype=np.int64),
                np.array(p1s, dtype=np.float64),
                np.array(roots, dtype=np.int64),
            )
        return self._flat


def _as_feature_matrix(features) -> np.ndarray:
    x = np.asarray(features, dtype=np.float32)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ArgumentError("features must be a vector or a matrix")
    return np.ascontiguousarray(x)


def _grow_tree(x, y, idx, rng, n_features_split, min_leaf):
    """Depth-first CART growth; returns the root TreeNode."""
    d = x.shape[1]
    counts = (int(np.sum(y[idx] == 0)), int(np.sum(y[idx] == 1)))
    if counts[0] == 0 or counts[1] == 0 or len(idx) < 2 * min_leaf:
        return TreeNode(counts=counts)
    if n_features_split >= d:
        feats = np.arange(d, dtype=np.int64)
    else:
        feats = rng.choice(d, size=n_features_split, replace=False).astype(np.int64)
    found, feature, threshold = kernels.best_split(x, y, idx, feats, min_leaf)
    if not found:
        return TreeNode(counts=counts)
    go_left = x[idx, feature].astype(np.float64) <= threshold
    left_idx = idx[go_left]
    right_idx = idx[~go_left]
    left = _grow_tree(x, y, left_idx, rng, n_features_split, min_leaf)
    right = _grow_tree(x, y, right_idx, rng, n_features_split, min_leaf)
    return TreeNode(feature=int(feature), threshold=float(threshold),
                    left=left, right=right)


def train_forest(features, labels, params: ForestParams | None = None,
                 seed: int = 0, bootstrap: bool = True) -> ForestModel:
    """Train a forest; bootstrap=False is a determinism hook for tests."""
    params = params or ForestParams()
    x = _as_feature_matrix(features)
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ArgumentError("labels must match the number of feature rows")
    if not np.isin(y, (0, 1)).all():
        raise ArgumentError("labels must be 0 or 1")
    y = y.astype(np.uint8)
    n, d = x.shape
    if n < 2:
        raise ArgumentError("need at least 2 training samples")
    if y.min() == y.max():
        raise ArgumentError("training set must contain both classes")
    if params.max_features_rule == "sqrt":
        n_features_split = int(np.floor(np.sqrt(d)))
    else:
        n_features_split = d
    trees = []
    for tree_index in range(params.n_trees):
        rng = np.random.default_rng((int(seed), tree_index))
        if bootstrap:
            idx = rng.integers(0, n, size=n).astype(np.int64)
        else:
            idx = np.arange(n, dtype=np.int64)
        trees.append(_grow_tree(x, y, idx, rng, n_features_split,
                                params.min_samples_leaf))
    return ForestModel(trees=trees, feature_len=d, train_seed=int(seed),
                       params=params)


def predict_proba(model: ForestModel, f) -> float:
    """Probability of class 1 (standard orientation) for one feature vector."""
    x = _as_feature_matrix(f)
    if x.shape != (1, model.feature_len):
        raise ModelShapeError(
            f"expected one vector of {model.feature_len} features, got shape {x.shape}")
    return float(predict_proba_batch(model, x)[0])


def predict_proba_batch(model: ForestModel, x) -> np.ndarray:
    x = _as_feature_matrix(x)
    if x.shape[1] != model.feature_len:
        raise ModelShapeError(
            f"expected {model.feature_len} features, got {x.shape[1]}")
    feats, thrs, lefts, rights, p1s, roots = model.flattened()
    return kernels.forest_predict(feats, thrs, lefts, rights, p1s, roots, x)


def build_training_set(candidate_sets) -> tuple[np.ndarray, np.ndarray]:
    """(features, labels) from (CandidateSet, true_index) pairs.

    Each image contributes 4 rows: label 1 for the true candidate's
    features, 0 for the other three.
    """
    rows = []
    labels = []
    for cset, true_index in candidate_sets:
        if true_index is None:
            raise ArgumentError("every candidate set needs a true index")
        if not 0 <= int(true_index) <= 3:
            raise ArgumentError(f"true index {true_index} outside 0..3")
        for i, vol in enumerate(cset.volumes):
            rows.append(mid_sagittal_features(vol))
            labels.append(1 if i == int(true_index) else 0)
    if not rows:
        raise ArgumentError("no candidate sets given")
    return np.stack(rows), np.array(labels, dtype=np.uint8)


def _node_to_json(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"kind": "leaf", "counts": [int(node.counts[0]),
                                           int(node.counts[1])]}
    return {
        "kind": "split",
        "feature": int(node.feature),
        "threshold": float(node.threshold),
        "left": _node_to_json(node.left),
        "right": _node_to_json(node.right),
    }


def save_model(path, model: ForestModel) -> None:
    doc = {
        "format_version": 1,
        "feature_len": int(model.feature_len),
        "train_seed": int(model.train_seed),
        "params": {
            "n_trees": model.params.n_trees,
            "max_features_rule": model.params.max_features_rule,
            "min_samples_leaf": model.params.min_samples_leaf,
        },
        "trees": [_node_to_json(t) for t in model.trees],
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def _node_from_json(obj, feature_len, path) -> TreeNode:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ParseError(f"{path}: malformed tree node")
    if obj["kind"] == "leaf":
        if set(obj) != {"kind", "counts"}:
            raise ParseError(f"{path}: leaf node has unexpected keys")
        counts = obj["counts"]
        if (not isinstance(counts, list) or len(counts) != 2
                or not all(isinstance(c, int) and not isinstance(c, bool)
                           and c >= 0 for c in counts)
                or sum(counts) < 1):
            raise ParseError(f"{path}: bad leaf counts {counts!r}")
        return TreeNode(counts=(counts[0], counts[1]))
    if obj["kind"] == "split":
        if set(obj) != {"kind", "feature", "threshold", "left", "right"}:
            raise ParseError(f"{path}: split node has unexpected keys")
        feature = obj["feature"]
        threshold = obj["threshold"]
        if not isinstance(feature, int) or isinstance(feature, bool) \
                or not 0 <= feature < feature_len:
            raise ParseError(f"{path}: feature index {feature!r} out of range")
        if not isinstance(threshold, (int, float)) \
                or not np.isfinite(threshold):
            raise ParseError(f"{path}: non-finite threshold")
        return TreeNode(
            feature=feature,
            threshold=float(threshold),
            left=_node_from_json(obj["left"], feature_len, path),
            right=_node_from_json(obj["right"], feature_len, path),
        )
    raise ParseError(f"{path}: unknown node kind {obj['kind']!r}")


def load_model(path) -> ForestModel:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict) or set(doc) != {
            "format_version", "feature_len", "train_seed", "params", "trees"}:
        raise ParseError(f"{path}: unexpected top-level keys")
    if doc["format_version"] != 1:
        raise ParseError(f"{path}: unsupported format_version "
                         f"{doc['format_version']!r}")
    feature_len = doc["feature_len"]
    if not isinstance(feature_len, int) or isinstance(feature_len, bool) \
            or feature_len < 1:
        raise ParseError(f"{path}: bad feature_len")
    if not isinstance(doc["train_seed"], int) \
            or isinstance(doc["train_seed"], bool):
        raise ParseError(f"{path}: bad train_seed")
    p = doc["params"]
    if not isinstance(p, dict) or set(p) != {
            "n_trees", "max_features_rule", "min_samples_leaf"}:
        raise ParseError(f"{path}: unexpected params keys")
    try:
        params = ForestParams(n_trees=p["n_trees"],
                              max_features_rule=p["max_features_rule"],
                              min_samples_leaf=p["min_samples_leaf"])
    except (ArgumentError, TypeError) as e:
        raise ParseError(f"{path}: bad params: {e}") from e
    trees = doc["trees"]
    if not isinstance(trees, list) or len(trees) < 1:
        raise ParseError(f"{path}: model must contain at least one tree")
    if len(trees) != params.n_trees:
        raise ParseError(f"{path}: params.n_trees does not match tree count")
    roots = [_node_from_json(t, feature_len, path) for t in trees]
    return ForestModel(trees=roots, feature_len=feature_len,
                       train_seed=doc["train_seed"], params=params)

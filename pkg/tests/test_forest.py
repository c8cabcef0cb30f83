import dataclasses
import json

import numpy as np
import pytest

from embryo_align.errors import ArgumentError, ModelShapeError, ParseError
from embryo_align.forest import (
    FEATURE_LEN,
    ForestModel,
    ForestParams,
    TreeNode,
    build_training_set,
    gini_impurity,
    load_model,
    mid_sagittal_features,
    predict_proba,
    save_model,
    train_forest,
)
from embryo_align.volume import Volume3D


def oracle_best_split(x, y, idx, min_leaf):
    """Exhaustive CART split search over all features and midpoints.

    Reproduces the production arithmetic exactly (same expression order in
    float64) so trees can be compared node for node.
    """
    n = len(idx)
    best = None
    for f in range(x.shape[1]):
        sv = np.sort(x[idx, f])
        for i in range(n - 1):
            if sv[i] == sv[i + 1]:
                continue
            nl = np.float64(i + 1)
            nr = np.float64(n - i - 1)
            if nl < min_leaf or nr < min_leaf:
                continue
            thr = (np.float64(sv[i]) + np.float64(sv[i + 1])) / 2.0
            go_left = x[idx, f].astype(np.float64) <= thr
            n1l = np.float64(y[idx][go_left].sum())
            n1r = np.float64(y[idx][~go_left].sum())
            p1l = n1l / nl
            p0l = (nl - n1l) / nl
            gl = 1.0 - p1l * p1l - p0l * p0l
            p1r = n1r / nr
            p0r = (nr - n1r) / nr
            gr = 1.0 - p1r * p1r - p0r * p0r
            w = (nl * gl + nr * gr) / np.float64(n)
            key = (float(w), f, float(thr))
            if best is None or key < best:
                best = key
    return best


def oracle_tree(x, y, idx, min_leaf):
    counts = (int((y[idx] == 0).sum()), int((y[idx] == 1).sum()))
    if counts[0] == 0 or counts[1] == 0 or len(idx) < 2 * min_leaf:
        return ("leaf", counts)
    best = oracle_best_split(x, y, idx, min_leaf)
    if best is None:
        return ("leaf", counts)
    _, f, thr = best
    go_left = x[idx, f].astype(np.float64) <= thr
    return ("split", f, thr,
            oracle_tree(x, y, idx[go_left], min_leaf),
            oracle_tree(x, y, idx[~go_left], min_leaf))


def assert_same_tree(node: TreeNode, oracle):
    if oracle[0] == "leaf":
        assert node.is_leaf
        assert node.counts == oracle[1]
        return
    assert not node.is_leaf
    assert node.feature == oracle[1]
    assert node.threshold == oracle[2]
    assert_same_tree(node.left, oracle[3])
    assert_same_tree(node.right, oracle[4])


def leaf(n0, n1):
    return TreeNode(counts=(n0, n1))


def tiny_model(trees):
    return ForestModel(trees=trees, feature_len=4, train_seed=0,
                       params=ForestParams(n_trees=len(trees)))


class TestGini:
    def test_balanced(self):
        assert gini_impurity((5, 5)) == pytest.approx(0.5)

    def test_pure(self):
        assert gini_impurity((10, 0)) == pytest.approx(0.0)

    def test_three_one(self):
        assert gini_impurity((3, 1)) == pytest.approx(0.375)

    def test_zero_total(self):
        with pytest.raises(ArgumentError):
            gini_impurity((0, 0))


class TestFeatures:
    def test_zero_volume(self):
        vol = Volume3D(np.zeros((20, 20, 20), dtype=np.float32), (1, 1, 1))
        f = mid_sagittal_features(vol)
        assert f.shape == (FEATURE_LEN,)
        assert not f.any()

    def test_normalized_to_unit_peak(self):
        data = np.zeros((40, 40, 40), dtype=np.float32)
        data[14:26, 14:26, 14:26] = 200.0
        f = mid_sagittal_features(Volume3D(data, (1, 1, 1)))
        assert f.max() == 1.0
        assert f.min() >= 0.0

    def test_values_in_unit_interval(self, posed_cset):
        for vol in posed_cset.volumes:
            f = mid_sagittal_features(vol)
            assert f.min() >= 0.0 and f.max() <= 1.0

    def test_double_flip_rotates_slice_half_turn(self, posed_cset):
        f0 = mid_sagittal_features(posed_cset.volumes[0]).reshape(192, 192)
        f3 = mid_sagittal_features(posed_cset.volumes[3]).reshape(192, 192)
        assert np.mean(np.abs(f3 - f0[::-1, ::-1])) < 1e-3

    def test_matches_full_rescale_slice(self, posed_cset):
        # The one-plane affine must agree exactly with slicing a full
        # 192-cube rescale built through the same resampler.
        from embryo_align import kernels
        from embryo_align.volume import grid_center
        vol = posed_cset.volumes[1]
        f = mid_sagittal_features(vol).reshape(192, 192)
        nz = np.nonzero(vol.data)
        extent = max(float(nz[a].max() - nz[a].min() + 1) * vol.spacing[a]
                     for a in range(3))
        s_in = float(min(vol.spacing))
        zoom = 192 * s_in / (1.1 * extent)
        spacing_in = np.array(vol.spacing, dtype=np.float64)
        step = s_in / zoom
        c_idx = (192 - 1) / 2.0
        a = np.diag(step / spacing_in)
        b = (grid_center(vol) - step * c_idx) / spacing_in
        cube = kernels.affine_trilinear(vol.data, a, b, (192, 192, 192))
        plane = cube[:, :, 96]
        want = np.clip(plane / np.float32(float(plane.max())), 0.0, 1.0)
        assert f.tobytes() == want.tobytes()


class TestTrainForest:
    def _separable(self, n=12):
        rng = np.random.default_rng(0)
        y = (np.arange(n) % 2).astype(np.uint8)
        base = np.stack([y + 0.1 * rng.random(n),
                         1 - y + 0.1 * rng.random(n)], axis=1)
        x = np.tile(base, (1, FEATURE_LEN // 2)).astype(np.float32)
        return x, y

    def test_separable_training_accuracy(self):
        x, y = self._separable()
        model = train_forest(x, y, ForestParams(n_trees=10), seed=3)
        probs = np.array([predict_proba(model, row) for row in x])
        assert np.array_equal((probs > 0.5).astype(np.uint8), y)

    def test_same_seed_same_bytes(self, tmp_path):
        x, y = self._separable()
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        save_model(p1, train_forest(x, y, ForestParams(n_trees=3), seed=11))
        save_model(p2, train_forest(x, y, ForestParams(n_trees=3), seed=11))
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seed_differs(self, tmp_path):
        x, y = self._separable()
        p1, p2 = tmp_path / "m1.json", tmp_path / "m2.json"
        save_model(p1, train_forest(x, y, ForestParams(n_trees=3), seed=11))
        save_model(p2, train_forest(x, y, ForestParams(n_trees=3), seed=12))
        assert p1.read_bytes() != p2.read_bytes()

    @pytest.mark.parametrize("seed", range(8))
    def test_matches_exhaustive_cart_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 21))
        d = int(rng.integers(2, 9))
        x = rng.random((n, d)).astype(np.float32)
        if seed % 2:
            x = np.round(x * 3).astype(np.float32) / 3
        y = rng.integers(0, 2, n).astype(np.uint8)
        if y.min() == y.max():
            y[::2] = 1 - y[0]
        min_leaf = 1 if seed % 3 else 2
        params = ForestParams(n_trees=1, max_features_rule="all",
                              min_samples_leaf=min_leaf)
        model = train_forest(x, y, params, seed=seed, bootstrap=False)
        want = oracle_tree(x, y, np.arange(n, dtype=np.int64), min_leaf)
        assert_same_tree(model.trees[0], want)

    def test_single_class_rejected(self):
        x = np.random.default_rng(1).random((4, 3)).astype(np.float32)
        with pytest.raises(ArgumentError):
            train_forest(x, np.zeros(4, dtype=np.uint8))

    def test_label_shape_mismatch(self):
        x = np.random.default_rng(1).random((4, 3)).astype(np.float32)
        with pytest.raises(ArgumentError):
            train_forest(x, np.array([0, 1, 0]))

    def test_non_binary_labels(self):
        x = np.random.default_rng(1).random((4, 3)).astype(np.float32)
        with pytest.raises(ArgumentError):
            train_forest(x, np.array([0, 1, 2, 1]))


class TestPredict:
    def test_pure_stumps_give_one(self):
        model = tiny_model([leaf(0, 3)] * 10)
        assert predict_proba(model, np.zeros(4, dtype=np.float32)) == 1.0

    def test_mean_of_three_trees(self):
        model = tiny_model([leaf(0, 1), leaf(1, 0), leaf(0, 1)])
        p = predict_proba(model, np.zeros(4, dtype=np.float32))
        assert p == pytest.approx(2.0 / 3.0)

    def test_bounded(self):
        rng = np.random.default_rng(5)
        x, y = rng.random((16, 4)).astype(np.float32), rng.integers(0, 2, 16)
        model = train_forest(x, y.astype(np.uint8),
                             ForestParams(n_trees=7), seed=1)
        for row in x:
            assert 0.0 <= predict_proba(model, row) <= 1.0

    def test_adding_positive_tree_is_monotone(self):
        rng = np.random.default_rng(6)
        x = rng.random((10, 4)).astype(np.float32)
        y = rng.integers(0, 2, 10).astype(np.uint8)
        y[0], y[1] = 0, 1
        model = train_forest(x, y, ForestParams(n_trees=4), seed=2)
        grown = ForestModel(
            trees=model.trees + [leaf(0, 1)],
            feature_len=model.feature_len, train_seed=model.train_seed,
            params=dataclasses.replace(model.params, n_trees=5))
        for row in x:
            assert predict_proba(grown, row) >= predict_proba(model, row) - 1e-12

    def test_length_mismatch(self):
        model = tiny_model([leaf(1, 1)])
        with pytest.raises(ModelShapeError):
            predict_proba(model, np.zeros(5, dtype=np.float32))


class TestPersistence:
    def _trained(self, tmp_path):
        rng = np.random.default_rng(9)
        x = rng.random((14, 6)).astype(np.float32)
        y = rng.integers(0, 2, 14).astype(np.uint8)
        y[0], y[1] = 0, 1
        model = train_forest(x, y, ForestParams(n_trees=5), seed=21)
        path = tmp_path / "model.json"
        save_model(path, model)
        return model, path, x

    def test_round_trip_predictions_exact(self, tmp_path):
        model, path, _ = self._trained(tmp_path)
        back = load_model(path)
        rng = np.random.default_rng(10)
        for _ in range(10):
            vec = rng.random(6).astype(np.float32)
            assert predict_proba(back, vec) == predict_proba(model, vec)

    def test_truncated_file(self, tmp_path):
        _, path, _ = self._trained(tmp_path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(ParseError):
            load_model(path)

    def test_zero_trees_rejected(self, tmp_path):
        _, path, _ = self._trained(tmp_path)
        doc = json.loads(path.read_text())
        doc["trees"] = []
        doc["params"]["n_trees"] = 0
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError):
            load_model(path)

    def test_unknown_key_rejected(self, tmp_path):
        _, path, _ = self._trained(tmp_path)
        doc = json.loads(path.read_text())
        doc["comment"] = "hello"
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError):
            load_model(path)

    def test_wrong_version_rejected(self, tmp_path):
        _, path, _ = self._trained(tmp_path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 2
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError):
            load_model(path)

    def test_tree_count_mismatch_rejected(self, tmp_path):
        _, path, _ = self._trained(tmp_path)
        doc = json.loads(path.read_text())
        doc["trees"] = doc["trees"][:-1]
        path.write_text(json.dumps(doc))
        with pytest.raises(ParseError):
            load_model(path)

    def test_feature_out_of_range_rejected(self, tmp_path):
        model = tiny_model([TreeNode(feature=9, threshold=0.5,
                                     left=leaf(1, 0), right=leaf(0, 1))])
        path = tmp_path / "bad.json"
        save_model(path, model)
        with pytest.raises(ParseError):
            load_model(path)


class TestBuildTrainingSet:
    def test_counts_and_positives(self, posed_cset):
        feats, labels = build_training_set([(posed_cset, 1),
                                            (posed_cset, 3)])
        assert feats.shape == (8, FEATURE_LEN)
        assert labels.tolist() == [0, 1, 0, 0, 0, 0, 0, 1]

    def test_missing_label(self, posed_cset):
        with pytest.raises(ArgumentError):
            build_training_set([(posed_cset, None)])

    def test_label_out_of_range(self, posed_cset):
        with pytest.raises(ArgumentError):
            build_training_set([(posed_cset, 4)])

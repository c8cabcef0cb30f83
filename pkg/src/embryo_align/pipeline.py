"""Orchestration: selector fan-out, dataset evaluation, and forest training."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ArgumentError
from .evaluation import METHODS, TrialResult, judge, rotation_angle
from .forest import (
    ForestModel,
    ForestParams,
    build_training_set,
    predict_proba_batch,
    train_forest,
)
from .nrrd_io import read_volume
from .pca_candidates import CandidateSet, generate_candidates
from .phantom import load_manifest
from .selectors import (
    atlas_select,
    forest_select,
    majority_vote,
    pearson_heuristic,
)
from .volume import Mask3D, Volume3D


def selectors_needed(method: str) -> set[str]:
    if method == "majority":
        return {"pearson", "atlas", "forest"}
    if method in ("pearson", "atlas", "forest"):
        return {method}
    if method == "default":
        return set()
    raise ArgumentError(f"unknown method {method!r}")


def compute_verdicts(cset: CandidateSet, needed, atlases=None, model=None) -> dict:
    """Run the requested selectors once; keys are selector names."""
    verdicts = {}
    if "pearson" in needed:
        verdicts["pearson"] = pearson_heuristic(cset)
    if "atlas" in needed:
        if atlases is None:
            raise ArgumentError("atlas selection requires an atlas directory")
        verdicts["atlas"] = atlas_select(cset, atlases)
    if "forest" in needed:
        if model is None:
            raise ArgumentError("forest selection requires a trained model")
        verdicts["forest"] = forest_select(cset, model)
    return verdicts


def choose(cset: CandidateSet, method: str, verdicts: dict) -> int | None:
    """Candidate index for the method, or None for a Failure/abstention."""
    if method == "default":
        return cset.default_index
    if method == "majority":
        return majority_vote([verdicts["pearson"], verdicts["atlas"],
                              verdicts["forest"]])
    return verdicts[method].choice


def align_image(image: Volume3D, mask: Mask3D, method: str,
                atlases=None, model: ForestModel | None = None):
    """Returns (candidate set, chosen index or None, verdicts dict)."""
    cset = generate_candidates(image, mask)
    verdicts = compute_verdicts(cset, selectors_needed(method), atlases, model)
    return cset, choose(cset, method, verdicts), verdicts


def _load_sample(dataset_dir: Path, row: dict):
    image = read_volume(dataset_dir / row["paths"]["image"])
    mask = read_volume(dataset_dir / row["paths"]["mask"])
    if not isinstance(image, Volume3D) or not isinstance(mask, Mask3D):
        raise ArgumentError(f"sample {row['id']}: image/mask files swapped "
                            "or of the wrong type")
    truth = np.array(row["truth_rotation"], dtype=np.float64).reshape(3, 3)
    return image, mask, truth


def evaluate_dataset(dataset_dir, methods, atlases=None,
                     model: ForestModel | None = None,
                     tolerance_deg: float = 15.0) -> list[TrialResult]:
    """Run the requested methods over every manifest sample."""
    methods = list(methods)
    for m in methods:
        if m not in METHODS:
            raise ArgumentError(f"unknown method {m!r}")
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    needed = set()
    for m in methods:
        needed |= selectors_needed(m)
    results = []
    for row in manifest["samples"]:
        image, mask, truth = _load_sample(dataset_dir, row)
        cset = generate_candidates(image, mask)
        verdicts = compute_verdicts(cset, needed, atlases, model)
        available = any(judge(truth, rot, tolerance_deg)
                        for rot in cset.rotations)
        for m in methods:
            chosen = choose(cset, m, verdicts)
            if chosen is None:
                correct = False
                err = None
            else:
                err = rotation_angle(cset.rotations[chosen], truth)
                correct = err <= tolerance_deg
            results.append(TrialResult(
                sample_id=row["id"], week=int(row["week"]), method=m,
                chosen=chosen, correct=correct, rotation_error_deg=err,
                candidate_available=available))
    return results


def train_from_dataset(dataset_dir, n_trees: int = 200, seed: int = 0,
                       tolerance_deg: float = 15.0):
    """Label candidates by ground truth and train a forest.

    Samples whose best candidate misses the judge tolerance are skipped
    (no candidate deserves the standard-orientation label). Returns
    (model, info) where info reports counts and training-set selection
    accuracy.
    """
    dataset_dir = Path(dataset_dir)
    manifest = load_manifest(dataset_dir)
    feature_blocks = []
    label_blocks = []
    skipped = 0
    for row in manifest["samples"]:
        image, mask, truth = _load_sample(dataset_dir, row)
        cset = generate_candidates(image, mask)
        angles = [rotation_angle(rot, truth) for rot in cset.rotations]
        best = int(np.argmin(angles))
        if angles[best] <= tolerance_deg:
            # Features are extracted image by image so the candidate
            # volumes can be freed; keeping whole candidate sets for a
            # large dataset would not fit in memory.
            f, l = build_training_set([(cset, best)])
            feature_blocks.append(f)
            label_blocks.append(l)
        else:
            skipped += 1
    if not feature_blocks:
        raise ArgumentError("no sample has a candidate within tolerance")
    features = np.concatenate(feature_blocks, axis=0)
    labels = np.concatenate(label_blocks)
    model = train_forest(features, labels, ForestParams(n_trees=n_trees),
                         seed=seed)
    probs = predict_proba_batch(model, features).reshape(-1, 4)
    true_idx = np.argmax(labels.reshape(-1, 4), axis=1)
    accuracy = float(np.mean(np.argmax(probs, axis=1) == true_idx))
    info = {
        "n_images": len(feature_blocks),
        "n_skipped": skipped,
        "n_training_rows": int(features.shape[0]),
        "training_selection_accuracy": accuracy,
    }
    return model, info

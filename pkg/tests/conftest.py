import json

import numpy as np
import pytest

from embryo_align import nrrd_io
from embryo_align.forest import (
    FEATURE_LEN,
    ForestModel,
    ForestParams,
    TreeNode,
    mid_sagittal_features,
    save_model,
)
from embryo_align.pca_candidates import generate_candidates
from embryo_align.phantom import PhantomSpec, build_phantom_atlases, generate_phantom
from embryo_align.volume import Mask3D, embryonic_volume, grid_center, rescale_iso


def quat_rotation(seed):
    """Independent quaternion-to-matrix construction for test rotations."""
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(4)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rot_z(deg):
    t = np.deg2rad(deg)
    return np.array([
        [np.cos(t), -np.sin(t), 0.0],
        [np.sin(t), np.cos(t), 0.0],
        [0.0, 0.0, 1.0],
    ])


@pytest.fixture(scope="session")
def canonical_phantom():
    """Noiseless week-9 phantom left in the canonical pose."""
    spec = PhantomSpec(week=9, noise_sigma=0.0, seed=101)
    return generate_phantom(spec, truth_rotation=np.eye(3))


@pytest.fixture(scope="session")
def posed_phantom():
    """Noiseless week-9 phantom in a random pose."""
    return generate_phantom(PhantomSpec(week=9, noise_sigma=0.0, seed=7))


@pytest.fixture(scope="session")
def posed_cset(posed_phantom):
    return generate_candidates(posed_phantom.image, posed_phantom.mask)


@pytest.fixture(scope="session")
def canonical_cset(canonical_phantom):
    return generate_candidates(canonical_phantom.image, canonical_phantom.mask)


@pytest.fixture(scope="session")
def atlas_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("atlases")
    build_phantom_atlases(out, seed=900)
    return out


@pytest.fixture(scope="session")
def disagree_kit(tmp_path_factory, canonical_cset):
    """Atlas dir and model crafted so pearson, atlas, and forest each pick
    a different candidate of the canonical phantom (0, 1, and 2)."""
    cset = canonical_cset
    d = tmp_path_factory.mktemp("disagree")

    atlas_dir = d / "atlas"
    atlas_dir.mkdir()
    vol1 = cset.volumes[1]
    atlas = rescale_iso(vol1, 1.0, (64, 64, 64), grid_center(vol1))
    nrrd_io.write_volume(atlas_dir / "subject1_week9.nrrd", atlas)
    ev = embryonic_volume(Mask3D._wrap_trusted(
        (atlas.data > 0.5).astype(np.uint8), atlas.spacing))
    (atlas_dir / "index.json").write_text(json.dumps(
        [{"subject_id": 1, "week": 9, "ev": ev,
          "path": "subject1_week9.nrrd"}]))

    feats = np.stack([mid_sagittal_features(v) for v in cset.volumes])
    others = np.delete(feats, 2, axis=0).max(axis=0)
    j = int(np.argmax(feats[2] - others))
    thr = float((feats[2, j] + others[j]) / 2.0)
    stump = TreeNode(feature=j, threshold=thr,
                     left=TreeNode(counts=(1, 0)),
                     right=TreeNode(counts=(0, 1)))
    model_path = d / "model.json"
    save_model(model_path, ForestModel(
        trees=[stump], feature_len=FEATURE_LEN, train_seed=0,
        params=ForestParams(n_trees=1)))
    return atlas_dir, model_path

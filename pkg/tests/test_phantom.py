import json

import numpy as np
import pytest

from conftest import quat_rotation
from embryo_align.errors import ArgumentError
from embryo_align.evaluation import rotation_angle
from embryo_align.phantom import (
    CRL_BY_WEEK,
    VOXEL_MM,
    PhantomSpec,
    generate_dataset,
    generate_phantom,
    load_manifest,
    random_rotation,
)
from embryo_align.volume import center_of_mass, embryonic_volume

# Mean rotation angle of a uniformly random 3D rotation, in degrees:
# E[theta] = pi/2 + 2/pi radians for the Haar measure.
MEAN_UNIFORM_ANGLE = np.degrees(np.pi / 2 + 2 / np.pi)


class TestRandomRotation:
    @pytest.mark.parametrize("seed", range(20))
    def test_proper_rotation(self, seed):
        r = random_rotation(seed)
        assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-10
        assert abs(np.linalg.det(r) - 1.0) < 1e-10

    def test_seed_deterministic(self):
        assert random_rotation(42).tobytes() == random_rotation(42).tobytes()

    def test_matches_quaternion_construction(self):
        for seed in range(10):
            assert np.allclose(random_rotation(seed), quat_rotation(seed),
                               atol=1e-12)

    def test_all_seeds_distinct(self):
        rots = [random_rotation(s) for s in range(100)]
        for i in range(len(rots)):
            for j in range(i + 1, len(rots)):
                assert rotation_angle(rots[i], rots[j]) > 1e-3

    def test_mean_angle_is_uniform(self):
        angles = [rotation_angle(random_rotation(s), np.eye(3))
                  for s in range(4000)]
        assert abs(np.mean(angles) - MEAN_UNIFORM_ANGLE) < 2.0


class TestSpecValidation:
    @pytest.mark.parametrize("kwargs", [
        {"week": 6},
        {"week": 13},
        {"week": 9, "crl_mm": 0.0},
        {"week": 9, "arc_angle_deg": 180.0},
        {"week": 9, "arc_angle_deg": 30.0},
        {"week": 9, "head_bulge_ratio": 1.0},
        {"week": 9, "noise_sigma": -0.1},
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ArgumentError):
            PhantomSpec(**kwargs)

    def test_default_crl_from_week(self):
        assert PhantomSpec(week=10).crl_mm == CRL_BY_WEEK[10]


class TestGeneratePhantom:
    def test_grid_iso_and_dtypes(self, canonical_phantom):
        sample = canonical_phantom
        d = sample.image.dims
        assert d[0] == d[1] == d[2]
        assert sample.image.spacing == (VOXEL_MM,) * 3
        assert sample.image.data.dtype == np.float32
        assert sample.mask.data.dtype == np.uint8

    def test_noiseless_image_equals_mask(self, canonical_phantom):
        assert np.array_equal(canonical_phantom.image.data,
                              canonical_phantom.mask.data.astype(np.float32))

    def test_ev_increases_with_week(self):
        evs = []
        for week in range(7, 13):
            spec = PhantomSpec(week=week, seed=0)
            sample = generate_phantom(spec, truth_rotation=np.eye(3))
            evs.append(embryonic_volume(sample.mask))
        assert all(a < b for a, b in zip(evs, evs[1:]))

    def test_ev_pose_invariant(self):
        spec = PhantomSpec(week=9, seed=0)
        ev_id = embryonic_volume(
            generate_phantom(spec, truth_rotation=np.eye(3)).mask)
        ev_rot = embryonic_volume(
            generate_phantom(spec, truth_rotation=random_rotation(8)).mask)
        assert ev_rot == pytest.approx(ev_id, rel=0.02)

    def test_mask_invariant_to_noise(self):
        clean = generate_phantom(PhantomSpec(week=8, seed=4))
        noisy = generate_phantom(PhantomSpec(week=8, seed=4,
                                             noise_sigma=0.5))
        assert clean.mask.data.tobytes() == noisy.mask.data.tobytes()
        assert clean.truth_rotation.tobytes() == noisy.truth_rotation.tobytes()
        assert not np.array_equal(clean.image.data, noisy.image.data)

    def test_noise_deterministic(self):
        spec = PhantomSpec(week=8, seed=4, noise_sigma=0.3)
        a = generate_phantom(spec)
        b = generate_phantom(spec)
        assert a.image.data.tobytes() == b.image.data.tobytes()

    def test_mask_inside_image_support(self):
        sample = generate_phantom(PhantomSpec(week=8, seed=4,
                                              noise_sigma=0.2))
        assert np.all(sample.image.data[sample.mask.data == 1] != 0)

    def test_truth_must_be_rotation(self):
        with pytest.raises(ArgumentError):
            generate_phantom(PhantomSpec(week=9), truth_rotation=2 * np.eye(3))

    def test_canonical_head_is_heavier_high_side(self, canonical_phantom):
        com = center_of_mass(canonical_phantom.mask)
        n = canonical_phantom.mask.dims[0]
        grid_c = (n - 1) / 2.0 * VOXEL_MM
        assert com[0] > grid_c + 2 * VOXEL_MM

    def test_canonical_first_candidate_near_identity(self, canonical_cset):
        angles = [rotation_angle(u, np.eye(3))
                  for u in canonical_cset.rotations]
        assert int(np.argmin(angles)) == 0
        assert angles[0] < 10.0

    def test_posed_truth_recoverable(self, posed_phantom, posed_cset):
        angles = [rotation_angle(u, posed_phantom.truth_rotation)
                  for u in posed_cset.rotations]
        assert min(angles) < 10.0
        assert sum(a < 10.0 for a in angles) == 1


class TestGenerateDataset:
    def test_layout_and_manifest(self, tmp_path):
        out = tmp_path / "ds"
        manifest = generate_dataset(2, [9], base_seed=5, out_dir=out)
        names = sorted(p.name for p in out.iterdir())
        assert names == ["manifest.json",
                         "week9_000_image.nrrd", "week9_000_mask.nrrd",
                         "week9_001_image.nrrd", "week9_001_mask.nrrd"]
        assert load_manifest(out) == manifest
        rows = manifest["samples"]
        assert [r["seed"] for r in rows] == [5, 6]
        for row in rows:
            r = np.array(row["truth_rotation"], dtype=np.float64)
            assert r.shape == (9,)
            r = r.reshape(3, 3)
            assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-10
            assert abs(np.linalg.det(r) - 1.0) < 1e-10

    def test_regeneration_bit_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        generate_dataset(1, [8, 9], base_seed=3, out_dir=a, noise_sigma=0.1)
        generate_dataset(1, [8, 9], base_seed=3, out_dir=b, noise_sigma=0.1)
        for p in sorted(a.iterdir()):
            assert p.read_bytes() == (b / p.name).read_bytes()

    def test_invalid_arguments(self, tmp_path):
        with pytest.raises(ArgumentError):
            generate_dataset(0, [9], base_seed=0, out_dir=tmp_path / "x")
        with pytest.raises(ArgumentError):
            generate_dataset(1, [], base_seed=0, out_dir=tmp_path / "y")


class TestPhantomAtlases:
    def test_full_grid_of_entries(self, atlas_dir):
        entries = json.loads((atlas_dir / "index.json").read_text())
        assert len(entries) == 40
        combos = {(e["subject_id"], e["week"]) for e in entries}
        assert combos == {(s, w) for s in range(1, 9) for w in range(8, 13)}
        for e in entries:
            assert (atlas_dir / e["path"]).exists()

    def test_ev_monotone_per_subject(self, atlas_dir):
        entries = json.loads((atlas_dir / "index.json").read_text())
        by_subject = {}
        for e in entries:
            by_subject.setdefault(e["subject_id"], []).append(
                (e["week"], e["ev"]))
        for rows in by_subject.values():
            evs = [ev for _, ev in sorted(rows)]
            assert all(a < b for a, b in zip(evs, evs[1:]))

    def test_jitter_varies_across_subjects(self, atlas_dir):
        entries = json.loads((atlas_dir / "index.json").read_text())
        week9 = sorted(e["ev"] for e in entries if e["week"] == 9)
        assert week9[0] < week9[-1]

"""Synthetic embryo-like phantoms with known ground-truth orientation.

The phantom is a tube swept along a circular arc in the axis0-axis1 plane,
head end toward +axis0, rump toward -axis0, arc opening toward -axis1, with
the tube radius tapering from head_bulge_ratio * r at the head down to r at
the rump. The head/rump asymmetry is what makes the four orientation
candidates statistically distinguishable: in this canonical pose the thin
rump half lies in the v <= 0 silhouette section, where its tighter spread
yields the stronger Pearson correlation the selector looks for.

Rotation is applied to the analytic geometry (the swept-ball centers) before
voxelization, so the mask is the exact rotated interior with no resampling
artifacts, and its embryonic volume is pose-independent up to voxelization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArgumentError
from .pca_candidates import generate_candidates
from .volume import Mask3D, Volume3D, embryonic_volume, grid_center, rescale_iso
from . import nrrd_io
from .evaluation import rotation_angle

#: Representative crown-rump length (mm) per gestational week.
CRL_BY_WEEK = {7: 10.0, 8: 16.0, 9: 23.0, 10: 31.0, 11: 41.0, 12: 53.0}

VOXEL_MM = 0.5
N_SPINE = 200
MARGIN = 1.2


@dataclass(frozen=True)
class PhantomSpec:
    week: int
    crl_mm: float | None = None
    arc_angle_deg: float = 120.0
    head_bulge_ratio: float = 1.6
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if int(self.week) != self.week or not 7 <= self.week <= 12:
            raise ArgumentError(f"week must be an integer in 7..12, got {self.week}")
        object.__setattr__(self, "week", int(self.week))
        crl = self.crl_mm if self.crl_mm is not None else CRL_BY_WEEK[self.week]
        crl = float(crl)
        if not np.isfinite(crl) or crl <= 0:
            raise ArgumentError(f"crl_mm must be positive, got {crl}")
        object.__setattr__(self, "crl_mm", crl)
        if not 30.0 < float(self.arc_angle_deg) < 180.0:
            raise ArgumentError("arc_angle_deg must lie in (30, 180)")
        if not float(self.head_bulge_ratio) > 1.0:
            raise ArgumentError("head_bulge_ratio must be > 1")
        if not float(self.noise_sigma) >= 0.0:
            raise ArgumentError("noise_sigma must be >= 0")
        object.__setattr__(self, "arc_angle_deg", float(self.arc_angle_deg))
        object.__setattr__(self, "head_bulge_ratio", float(self.head_bulge_ratio))
        object.__setattr__(self, "noise_sigma", float(self.noise_sigma))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class PhantomSample:
    image: Volume3D
    mask: Mask3D
    truth_rotation: np.ndarray
    spec: PhantomSpec

    def __post_init__(self):
        r = np.asarray(self.truth_rotation, dtype=np.float64)
        if r.shape != (3, 3) \
                or np.linalg.norm(r.T @ r - np.eye(3)) >= 1e-10 \
                or abs(np.linalg.det(r) - 1.0) >= 1e-10:
            raise ArgumentError("truth_rotation must be a proper rotation")
        object.__setattr__(self, "truth_rotation", r)
        inside = self.mask.data == 1
        if not inside.any():
            raise ArgumentError("phantom mask is empty")
        if not self.image.data[inside].all():
            raise ArgumentError("mask exceeds the nonzero image support")


def random_rotation(seed) -> np.ndarray:
    """Uniform rotation from a seeded unit quaternion."""
    rng = np.random.default_rng(seed)
    w, x, y, z = rng.standard_normal(4)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _spine(spec: PhantomSpec):
    """Canonical-pose ball centers (mm) and radii of the swept tube."""
    alpha = np.deg2rad(spec.arc_angle_deg) / 2.0
    radius = spec.crl_mm / (2.0 * np.sin(alpha))
    t = np.linspace(0.0, 1.0, N_SPINE)
    phi = alpha - 2.0 * alpha * t
    centers = np.stack([
        radius * np.sin(phi),
        radius * (np.cos(phi) - np.cos(alpha)),
        np.zeros_like(phi),
    ], axis=1)
    r0 = spec.crl_mm / 8.0
    radii = r0 * (spec.head_bulge_ratio * (1.0 - t) + t)
    return centers, radii


def generate_phantom(spec: PhantomSpec, truth_rotation=None) -> PhantomSample:
    """Voxelize one phantom; truth_rotation overrides the seeded pose (tests)."""
    if truth_rotation is None:
        truth = random_rotation(spec.seed)
    else:
        truth = np.asarray(truth_rotation, dtype=np.float64)
    centers, radii = _spine(spec)
    lo = (centers - radii[:, None]).min(axis=0)
    hi = (centers + radii[:, None]).max(axis=0)
    c_rot = (lo + hi) / 2.0
    reach = np.linalg.norm(centers - c_rot, axis=1) + radii
    side_mm = 2.0 * float(reach.max()) * MARGIN
    n = int(np.ceil(side_mm / VOXEL_MM))
    dims = (n, n, n)
    grid_c = (n - 1) / 2.0

    rotated = (truth @ (centers - c_rot).T).T
    centers_vox = rotated / VOXEL_MM + grid_c
    radii_vox = radii / VOXEL_MM

    mask = np.zeros(dims, dtype=np.uint8)
    for c, r in zip(centers_vox, radii_vox):
        lo_i = np.maximum(np.ceil(c - r).astype(np.int64), 0)
        hi_i = np.minimum(np.floor(c + r).astype(np.int64), n - 1)
        if (hi_i < lo_i).any():
            continue
        ii = np.arange(lo_i[0], hi_i[0] + 1)
        jj = np.arange(lo_i[1], hi_i[1] + 1)
        kk = np.arange(lo_i[2], hi_i[2] + 1)
        d2 = ((ii - c[0]) ** 2)[:, None, None] \
            + ((jj - c[1]) ** 2)[None, :, None] \
            + ((kk - c[2]) ** 2)[None, None, :]
        box = mask[lo_i[0]:hi_i[0] + 1, lo_i[1]:hi_i[1] + 1, lo_i[2]:hi_i[2] + 1]
        box[d2 <= r * r] = 1

    image = mask.astype(np.float32)
    if spec.noise_sigma > 0:
        noise_rng = np.random.default_rng((spec.seed, 1))
        image = image + spec.noise_sigma * noise_rng.standard_normal(
            dims, dtype=np.float32)
    spacing = (VOXEL_MM,) * 3
    return PhantomSample(
        image=Volume3D._wrap_trusted(np.ascontiguousarray(image), spacing),
        mask=Mask3D._wrap_trusted(mask, spacing),
        truth_rotation=truth,
        spec=spec,
    )


def generate_dataset(count_per_week: int, weeks, base_seed: int, out_dir,
                     noise_sigma: float = 0.0) -> dict:
    """Write image/mask pairs plus manifest.json; returns the manifest."""
    weeks = sorted(int(w) for w in weeks)
    if count_per_week < 1 or not weeks:
        raise ArgumentError("need at least one sample and one week")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    index = 0
    for week in weeks:
        for i in range(count_per_week):
            seed = int(base_seed) + index
            index += 1
            spec = PhantomSpec(week=week, noise_sigma=noise_sigma, seed=seed)
            sample = generate_phantom(spec)
            sample_id = f"week{week}_{i:03d}"
            image_name = f"{sample_id}_image.nrrd"
            mask_name = f"{sample_id}_mask.nrrd"
            nrrd_io.write_volume(out / image_name, sample.image)
            nrrd_io.write_volume(out / mask_name, sample.mask)
            rows.append({
                "id": sample_id,
                "week": week,
                "seed": seed,
                "truth_rotation": [float(v) for v in
                                   sample.truth_rotation.ravel()],
                "paths": {"image": image_name, "mask": mask_name},
            })
    manifest = {"noise_sigma": float(noise_sigma), "samples": rows}
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_manifest(dataset_dir) -> dict:
    with open(Path(dataset_dir) / "manifest.json") as f:
        return json.load(f)


def build_phantom_atlases(out_dir, seed) -> Path:
    """Build the 8-subject x weeks-8..12 phantom atlas directory.

    Each subject gets jittered arc and bulge parameters; every atlas is the
    PCA-aligned true candidate of a noiseless canonical-pose phantom,
    rescaled to 64 cubed with zoom = cbrt(median EV / EV).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    built = []
    for subject in range(1, 9):
        rng = np.random.default_rng((int(seed), subject))
        arc = 120.0 + rng.uniform(-10.0, 10.0)
        bulge = 1.6 + rng.uniform(-0.2, 0.2)
        for week in range(8, 13):
            spec = PhantomSpec(week=week, arc_angle_deg=arc,
                               head_bulge_ratio=bulge, noise_sigma=0.0,
                               seed=0)
            sample = generate_phantom(spec, truth_rotation=np.eye(3))
            cset = generate_candidates(sample.image, sample.mask)
            angles = [rotation_angle(u, np.eye(3)) for u in cset.rotations]
            true_i = int(np.argmin(angles))
            built.append((subject, week, cset.volumes[true_i], cset.source_ev))
    median_ev = float(np.median([ev for _, _, _, ev in built]))
    entries = []
    for subject, week, vol, ev in built:
        zoom = float(np.cbrt(median_ev / ev))
        atlas = rescale_iso(vol, zoom, (64, 64, 64), grid_center(vol))
        name = f"subject{subject}_week{week}.nrrd"
        nrrd_io.write_volume(out / name, atlas)
        thresholded = Mask3D._wrap_trusted(
            (atlas.data > 0.5).astype(np.uint8), atlas.spacing)
        entries.append({
            "subject_id": subject,
            "week": week,
            "ev": embryonic_volume(thresholded),
            "path": name,
        })
    with open(out / "index.json", "w") as f:
        json.dump(entries, f, indent=2, sort_keys=True)
        f.write("\n")
    return out

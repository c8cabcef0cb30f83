"""Principal-axes analysis of a segmentation and the four aligned candidates.

A mask's principal frame is sign-ambiguous. With signs canonicalized
deterministically, flipping the first two axes independently (the third is
recomputed by cross product to keep det = +1) enumerates the four
right-handed rotations; resampling the image with each transpose yields four
"aligned" candidate volumes, exactly one of which is in standard
orientation. Selectors downstream decide which.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateShapeError,
    DegenerateWarning,
    EmptyMaskError,
    ShapeError,
)
from .volume import (
    Mask3D,
    RigidTransform,
    Volume3D,
    center_of_mass,
    embryonic_volume,
    resample_rigid,
)

#: Sign flips applied to (column 1, column 2), in fixed candidate order.
SIGN_PATTERNS = ((1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0))

#: Index of the default candidate: both leading axes mirrored, pattern (-,-).
DEFAULT_INDEX = 3


@dataclass(frozen=True)
class PointCloud:
    """Physical coordinates (mm) of foreground voxels, mean-centered."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 1:
            raise ArgumentError(f"points must be (n, 3), got {p.shape}")
        if not np.isfinite(p).all():
            raise ArgumentError("points must be finite")
        extent = float(np.max(p.max(axis=0) - p.min(axis=0)))
        if np.abs(p.mean(axis=0)).max() > 1e-9 * extent:
            raise ArgumentError("point cloud is not centered")
        object.__setattr__(self, "points", p)


@dataclass(frozen=True)
class PrincipalFrame:
    """Orthonormal principal axes (columns, descending singular value)."""

    axes: np.ndarray
    singular_values: np.ndarray
    degenerate: bool

    def __post_init__(self):
        a = np.asarray(self.axes, dtype=np.float64)
        s = np.asarray(self.singular_values, dtype=np.float64)
        if a.shape != (3, 3) or s.shape != (3,):
            raise ArgumentError("frame needs 3x3 axes and 3 singular values")
        if np.linalg.norm(a.T @ a - np.eye(3)) >= 1e-10:
            raise ArgumentError("axes are not orthonormal within 1e-10")
        if not (s[0] >= s[1] >= s[2] >= 0):
            raise ArgumentError("singular values must be descending and >= 0")
        object.__setattr__(self, "axes", a)
        object.__setattr__(self, "singular_values", s)


@dataclass(frozen=True)
class CandidateSet:
    """The four aligned candidates produced from one image/mask pair.

    source_cloud and source_ev carry the centered cloud and embryonic volume
    of the originating mask so selectors do not have to re-derive them from
    the resampled candidates.
    """

    rotations: tuple
    volumes: tuple
    masks: tuple
    source_frame: PrincipalFrame
    source_cloud: PointCloud
    source_ev: float
    default_index: int = DEFAULT_INDEX

    def __post_init__(self):
        rots = tuple(np.asarray(r, dtype=np.float64) for r in self.rotations)
        if len(rots) != 4 or len(self.volumes) != 4 or len(self.masks) != 4:
            raise ArgumentError("candidate set needs exactly 4 of each")
        for r in rots:
            if r.shape != (3, 3) \
                    or np.linalg.norm(r.T @ r - np.eye(3)) >= 1e-10 \
                    or abs(np.linalg.det(r) - 1.0) >= 1e-10:
                raise ArgumentError("candidate rotations must be proper rotations")
        for i in range(4):
            for j in range(i + 1, 4):
                if np.linalg.norm(rots[i] - rots[j]) <= 1e-6:
                    raise ArgumentError("candidate rotations must be distinct")
        if not 0 <= int(self.default_index) <= 3:
            raise ArgumentError("default_index out of range")
        object.__setattr__(self, "rotations", rots)
        object.__setattr__(self, "volumes", tuple(self.volumes))
        object.__setattr__(self, "masks", tuple(self.masks))


def extract_point_cloud(mask: Mask3D) -> PointCloud:
    """Centered physical coordinates of the mask's foreground voxels."""
    idx = np.nonzero(mask.data)
    if idx[0].size == 0:
        raise EmptyMaskError("cannot extract a point cloud from an empty mask")
    pts = np.stack([idx[a].astype(np.float64) * mask.spacing[a]
                    for a in range(3)], axis=1)
    pts -= pts.mean(axis=0)
    return PointCloud(points=pts)


def principal_axes(pc: PointCloud) -> PrincipalFrame:
    """Principal frame of a centered cloud via the 3x3 scatter matrix.

    Equivalent to the left singular vectors of the 3xN coordinate matrix.
    Signs are canonicalized: in each column the entry of largest absolute
    value is made non-negative (first such row on ties).
    """
    scatter = pc.points.T @ pc.points
    evals, evecs = np.linalg.eigh(scatter)
    lam = np.maximum(evals[::-1], 0.0)
    sigma = np.sqrt(lam)
    axes = evecs[:, ::-1].copy()
    if lam[1] <= lam[0] * 1e-12:
        raise DegenerateShapeError("point cloud is collinear; no usable frame")
    for c in range(3):
        col = axes[:, c]
        if col[np.argmax(np.abs(col))] < 0:
            axes[:, c] = -col
    degenerate = bool(sigma[1] > 0.98 * sigma[0] or sigma[2] > 0.98 * sigma[1])
    return PrincipalFrame(axes=axes, singular_values=sigma, degenerate=degenerate)


def candidate_rotations(frame: PrincipalFrame) -> list[np.ndarray]:
    """The four right-handed sign variants of the frame.

    Column 3 is recomputed as cross(s1*c1, s2*c2), so det = +1 always. The
    rotation applied to images during alignment is the transpose of each.
    """
    if frame.degenerate:
        warnings.warn("principal axes nearly ambiguous; candidates may be "
                      "unstable", DegenerateWarning, stacklevel=2)
    c1 = frame.axes[:, 0]
    c2 = frame.axes[:, 1]
    out = []
    for s1, s2 in SIGN_PATTERNS:
        a = s1 * c1
        b = s2 * c2
        out.append(np.column_stack([a, b, np.cross(a, b)]))
    return out


def candidate_grid_side(vol: Volume3D | Mask3D) -> int:
    """Next even integer >= sqrt(3) * max physical extent / isotropic spacing.

    A cube this size holds the input under any rotation without clipping.
    """
    s_iso = float(min(vol.spacing))
    extent = max(d * s for d, s in zip(vol.dims, vol.spacing))
    side = int(np.ceil(np.sqrt(3.0) * extent / s_iso))
    return side + (side % 2)


def generate_candidates(image: Volume3D, mask: Mask3D) -> CandidateSet:
    """Zero the background, then build the four aligned candidates."""
    if image.dims != mask.dims or image.spacing != mask.spacing:
        raise ShapeError("image and mask must share dims and spacing")
    masked = Volume3D._wrap_trusted(image.data * mask.data, image.spacing)
    cloud = extract_point_cloud(mask)
    frame = principal_axes(cloud)
    rotations = candidate_rotations(frame)
    com = center_of_mass(mask)
    side = candidate_grid_side(image)
    dims = (side, side, side)
    s_iso = float(min(image.spacing))
    out_center = np.full(3, (side - 1) / 2.0 * s_iso)
    volumes = []
    masks = []
    for u in rotations:
        t = RigidTransform(rotation=u.T, center_in=com, center_out=out_center)
        volumes.append(resample_rigid(masked, t, dims, "trilinear"))
        masks.append(resample_rigid(mask, t, dims, "nearest"))
    return CandidateSet(
        rotations=tuple(rotations),
        volumes=tuple(volumes),
        masks=tuple(masks),
        source_frame=frame,
        source_cloud=cloud,
        source_ev=embryonic_volume(mask),
    )


def default_candidate(cset: CandidateSet) -> int:
    """Index of the default guess: the (-,-) sign pattern, index 3."""
    return cset.default_index

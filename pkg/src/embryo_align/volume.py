"""Core 3D containers and geometric primitives.

Conventions used throughout the package:
  - voxel index (i, j, k) sits at physical point (i*sx, j*sy, k*sz) mm;
  - the physical center of a grid is (dims - 1)/2 * spacing;
  - resampling is backward-mapped (output-driven) with zero fill.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    ArgumentError,
    DegenerateInputError,
    EmptyMaskError,
    MaskValueError,
    ShapeError,
    TransformError,
)


def _check_spacing(spacing) -> tuple[float, float, float]:
    s = tuple(float(v) for v in spacing)
    if len(s) != 3:
        raise ArgumentError("spacing must have 3 components")
    if not all(np.isfinite(v) and v > 0 for v in s):
        raise ArgumentError(f"spacing must be positive and finite, got {s}")
    return s


@dataclass(frozen=True)
class Volume3D:
    """A 3D scalar image: float32 data plus per-axis voxel spacing in mm."""

    data: np.ndarray
    spacing: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"volume data must be 3D, got shape {data.shape}")
        if not np.isfinite(data).all():
            raise ArgumentError("volume intensities must be finite")
        object.__setattr__(self, "data", data)

    @classmethod
    def _wrap_trusted(cls, data: np.ndarray, spacing) -> "Volume3D":
        """Skip the finiteness scan for data coming out of our own kernels."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", data)
        object.__setattr__(obj, "spacing", tuple(float(v) for v in spacing))
        return obj

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Mask3D:
    """A binary segmentation on the same grid convention as Volume3D."""

    data: np.ndarray
    spacing: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "spacing", _check_spacing(self.spacing))
        data = np.asarray(self.data)
        if data.ndim != 3 or min(data.shape) < 1:
            raise ShapeError(f"mask data must be 3D, got shape {data.shape}")
        if data.dtype != np.uint8:
            if not np.isin(data, (0, 1)).all():
                raise MaskValueError("mask values must be 0 or 1")
            data = data.astype(np.uint8)
        elif data.max() > 1:
            raise MaskValueError("mask values must be 0 or 1")
        object.__setattr__(self, "data", data)

    @classmethod
    def _wrap_trusted(cls, data: np.ndarray, spacing) -> "Mask3D":
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", data)
        object.__setattr__(obj, "spacing", tuple(float(v) for v in spacing))
        return obj

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class RigidTransform:
    """Maps input point x to rotation @ (x - center_in) + center_out."""

    rotation: np.ndarray
    center_in: np.ndarray
    center_out: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        if r.shape != (3, 3):
            raise TransformError(f"rotation must be 3x3, got {r.shape}")
        if np.linalg.norm(r.T @ r - np.eye(3)) >= 1e-10:
            raise TransformError("rotation is not orthogonal within 1e-10")
        if abs(np.linalg.det(r) - 1.0) >= 1e-10:
            raise TransformError("rotation determinant is not +1 within 1e-10")
        object.__setattr__(self, "rotation", r)
        for name in ("center_in", "center_out"):
            c = np.array(getattr(self, name), dtype=np.float64).reshape(-1)
            if c.shape != (3,) or not np.isfinite(c).all():
                raise TransformError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, c)


def grid_center(vol: Volume3D | Mask3D) -> np.ndarray:
    """Physical center of a volume's grid in mm."""
    return (np.array(vol.dims, dtype=np.float64) - 1.0) / 2.0 \
        * np.array(vol.spacing, dtype=np.float64)


def center_of_mass(mask: Mask3D) -> np.ndarray:
    """Mean physical coordinate of the foreground voxels, in mm."""
    idx = np.nonzero(mask.data)
    if idx[0].size == 0:
        raise EmptyMaskError("center of mass of an empty mask is undefined")
    return np.array([idx[a].mean() * mask.spacing[a] for a in range(3)])


def embryonic_volume(mask: Mask3D) -> float:
    """Foreground voxel count times voxel volume, in mm^3."""
    count = int(np.count_nonzero(mask.data))
    sx, sy, sz = mask.spacing
    return count * sx * sy * sz


def ncc(a: Volume3D, b: Volume3D) -> float:
    """Pearson correlation of the flattened intensities (zero lag)."""
    if a.dims != b.dims:
        raise ShapeError(f"dims mismatch: {a.dims} vs {b.dims}")
    x = a.data.ravel().astype(np.float64)
    y = b.data.ravel().astype(np.float64)
    x = x - x.mean()
    y = y - y.mean()
    vx = float(x @ x)
    vy = float(y @ y)
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInputError("ncc is undefined for constant input")
    r = float(x @ y) / np.sqrt(vx * vy)
    return float(min(1.0, max(-1.0, r)))


def _check_out_dims(out_dims) -> tuple[int, int, int]:
    dims = tuple(int(v) for v in out_dims)
    if len(dims) != 3 or min(dims) < 1:
        raise ArgumentError(f"out_dims must be 3 positive integers, got {out_dims}")
    return dims


def resample_rigid(vol: Volume3D | Mask3D, t: RigidTransform, out_dims,
                   interp: str = "trilinear") -> Volume3D | Mask3D:
    """Resample onto an isotropic cubic grid under a rigid transform.

    The output grid uses spacing min(vol.spacing) and is laid out so that its
    physical center coincides with t.center_out; each output point p_out
    samples the input at rotation^T (p_out - center_out) + center_in, with
    zero fill outside the input.
    """
    if interp not in ("trilinear", "nearest"):
        raise ArgumentError(f"unknown interpolation {interp!r}")
    if isinstance(vol, Mask3D) and interp != "nearest":
        raise ArgumentError("masks must be resampled with nearest interpolation")
    dims = _check_out_dims(out_dims)
    s_in = np.array(vol.spacing, dtype=np.float64)
    s_out = float(min(vol.spacing))
    c_idx = (np.array(dims, dtype=np.float64) - 1.0) / 2.0
    m = t.rotation.T * s_out                       # output index -> input mm
    a = m / s_in[:, None]
    b = (t.center_in - m @ c_idx) / s_in
    if isinstance(vol, Mask3D):
        out = kernels.affine_nearest(vol.data, a, b, dims)
        return Mask3D._wrap_trusted(out, (s_out,) * 3)
    if interp == "nearest":
        out = kernels.affine_nearest(vol.data, a, b, dims)
    else:
        out = kernels.affine_trilinear(vol.data, a, b, dims)
    return Volume3D._wrap_trusted(out, (s_out,) * 3)


def rescale_iso(vol: Volume3D, zoom: float, out_dims, center) -> Volume3D:
    """Zoom a volume about a physical point onto a cubic grid.

    Output index idx samples the input at center + (idx - c_idx) * s/zoom
    where s = min(vol.spacing); the output spacing is s/zoom, so the
    physical object measures the same before and after (a zoom > 1 spends
    more voxels on it).
    """
    zoom = float(zoom)
    if not np.isfinite(zoom) or zoom <= 0:
        raise ArgumentError(f"zoom must be positive and finite, got {zoom}")
    dims = _check_out_dims(out_dims)
    center = np.array(center, dtype=np.float64).reshape(-1)
    if center.shape != (3,) or not np.isfinite(center).all():
        raise ArgumentError("center must be a finite 3-vector")
    s_in = np.array(vol.spacing, dtype=np.float64)
    step = float(min(vol.spacing)) / zoom
    c_idx = (np.array(dims, dtype=np.float64) - 1.0) / 2.0
    a = np.diag(step / s_in)
    b = (center - step * c_idx) / s_in
    out = kernels.affine_trilinear(vol.data, a, b, dims)
    return Volume3D._wrap_trusted(out, (step,) * 3)

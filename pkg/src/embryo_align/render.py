"""Binary PGM (P5) rendering of the two mid planes of an aligned volume.

Viewing convention: +axis0 at the top of the image, so a standard-oriented
volume renders head-up; columns run along +axis1 (mid-sagittal) or +axis2
(mid-coronal), so the body opening faces left in the sagittal view.
"""

from __future__ import annotations

import numpy as np

from .volume import Volume3D


def _to_u8(plane: np.ndarray) -> np.ndarray:
    lo = float(plane.min())
    hi = float(plane.max())
    if hi <= lo:
        return np.zeros(plane.shape, dtype=np.uint8)
    scaled = (plane.astype(np.float64) - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def render_planes(vol: Volume3D) -> tuple[np.ndarray, np.ndarray]:
    """(mid_sagittal, mid_coronal) 8-bit images, min-max scaled."""
    data = vol.data
    sagittal = _to_u8(data[::-1, :, data.shape[2] // 2])
    coronal = _to_u8(data[::-1, data.shape[1] // 2, :])
    return sagittal, coronal


def write_pgm(path, img: np.ndarray) -> None:
    img = np.ascontiguousarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("PGM output must be a 2D image")
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(img.tobytes())

"""Rigid alignment of embryo-like 3D volumes into a canonical orientation.

Principal-component analysis of the segmentation mask fixes the axes up to
sign; the four right-handed sign variants give four aligned candidates, and
three independent selectors (a silhouette correlation heuristic, atlas
matching by normalized cross-correlation, and a random forest on the
mid-sagittal plane) vote on which one is the standard orientation.
"""

__version__ = "0.1.0"

from .errors import AlignError
from .volume import Mask3D, RigidTransform, Volume3D
from .nrrd_io import read_volume, write_volume
from .pca_candidates import CandidateSet, generate_candidates

__all__ = [
    "AlignError",
    "Mask3D",
    "RigidTransform",
    "Volume3D",
    "read_volume",
    "write_volume",
    "CandidateSet",
    "generate_candidates",
    "__version__",
]

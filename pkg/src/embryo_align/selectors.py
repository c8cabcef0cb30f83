"""The three candidate selectors and their majority-vote combination.

Each selector looks at the same CandidateSet and issues a verdict: a chosen
candidate index (or an abstention) plus per-candidate scores. Majority vote
needs at least two of the three to agree; anything else is a Failure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateInputError,
    ParseError,
)
from .forest import ForestModel, mid_sagittal_features, predict_proba_batch
from .nrrd_io import read_volume
from .pca_candidates import CandidateSet, PointCloud, extract_point_cloud
from .volume import Mask3D, Volume3D, embryonic_volume, grid_center, ncc, rescale_iso

ATLAS_DIMS = (64, 64, 64)
NCC_TIE = 1e-9
#: Score recorded for a candidate whose sections are degenerate (pearson) --
#: outside the reachable margin range, purely diagnostic.
DEGENERATE_SCORE = -3.0


@dataclass(frozen=True)
class SelectorVerdict:
    selector: str
    choice: int | None
    scores: tuple
    notes: tuple = ()

    def __post_init__(self):
        if self.selector not in ("pearson", "atlas", "forest"):
            raise ArgumentError(f"unknown selector {self.selector!r}")
        if len(self.scores) != 4:
            raise ArgumentError("verdict needs exactly 4 scores")
        if self.choice is not None and not 0 <= self.choice <= 3:
            raise ArgumentError("choice out of range")
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        object.__setattr__(self, "notes", tuple(self.notes))


@dataclass(frozen=True)
class Silhouette2D:
    """(u, v) pairs: v along PC1, u along PC2 of the aligned cloud."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.shape != v.shape or u.ndim != 1 or u.size < 1:
            raise ArgumentError("u and v must be equal-length vectors")
        extent = max(float(np.ptp(u)), float(np.ptp(v)))
        if extent > 0 and max(abs(u.mean()), abs(v.mean())) > 1e-6 * extent:
            raise ArgumentError("silhouette is not centered")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


def pearson_r(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ArgumentError("inputs must be equal-length vectors")
    if x.size < 2:
        raise ArgumentError("need at least 2 points")
    sx = x - x.mean()
    sy = y - y.mean()
    vx = float(sx @ sx)
    vy = float(sy @ sy)
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInputError("correlation undefined for zero variance")
    r = float(sx @ sy) / np.sqrt(vx * vy)
    return float(min(1.0, max(-1.0, r)))


def _project_cloud(cloud: PointCloud, rotation: np.ndarray) -> Silhouette2D:
    aligned = cloud.points @ np.asarray(rotation, dtype=np.float64)
    return Silhouette2D(u=aligned[:, 1], v=aligned[:, 0])


def project_silhouette(mask: Mask3D, rotation) -> Silhouette2D:
    """Aligned 2D cloud: transform by the candidate rotation, drop PC3."""
    return _project_cloud(extract_point_cloud(mask), rotation)


def _section_r(sil: Silhouette2D, bottom: bool) -> float | None:
    sel = sil.v <= 0 if bottom else sil.v > 0
    if int(sel.sum()) < 2:
        return None
    try:
        return pearson_r(sil.u[sel], sil.v[sel])
    except DegenerateInputError:
        return None


def pearson_heuristic(cset: CandidateSet) -> SelectorVerdict:
    """Shape heuristic: the rump half correlates tighter and points up-left.

    The silhouette splits at v = 0; a candidate passes iff
    |r_bottom| > |r_top| and r_bottom > 0. One passer wins outright, several
    pass on the largest margin |r_bottom| - |r_top|, none means Abstain.
    """
    scores = []
    notes = []
    passing = []
    for i, rot in enumerate(cset.rotations):
        sil = _project_cloud(cset.source_cloud, rot)
        r_bottom = _section_r(sil, bottom=True)
        r_top = _section_r(sil, bottom=False)
        if r_bottom is None or r_top is None:
            scores.append(DEGENERATE_SCORE)
            notes.append(f"candidate {i}: degenerate section")
            continue
        margin = abs(r_bottom) - abs(r_top)
        passed = abs(r_bottom) > abs(r_top) and r_bottom > 0
        scores.append(margin if passed else -abs(margin))
        if passed:
            passing.append((i, margin))
    if not passing:
        notes.append("no candidate satisfied the correlation criteria")
        choice = None
    else:
        best = max(passing, key=lambda t: t[1])
        choice = best[0]
    return SelectorVerdict(selector="pearson", choice=choice,
                           scores=tuple(scores), notes=tuple(notes))


@dataclass(frozen=True)
class AtlasEntry:
    subject_id: int
    week: int
    volume: Volume3D
    ev: float

    def __post_init__(self):
        if self.volume.dims != ATLAS_DIMS:
            raise ArgumentError(f"atlas volume must be {ATLAS_DIMS}")
        if not self.ev > 0:
            raise ArgumentError("atlas ev must be positive")


def load_atlases(atlas_dir) -> list[AtlasEntry]:
    """Load and validate the atlas directory (index.json plus NRRD files)."""
    atlas_dir = Path(atlas_dir)
    index_path = atlas_dir / "index.json"
    try:
        with open(index_path) as f:
            rows = json.load(f)
    except json.JSONDecodeError as e:
        raise ParseError(f"{index_path}: invalid JSON: {e}") from e
    if not isinstance(rows, list) or not rows:
        raise ParseError(f"{index_path}: expected a nonempty list of entries")
    entries = []
    for row in rows:
        if not isinstance(row, dict) \
                or set(row) != {"subject_id", "week", "ev", "path"}:
            raise ParseError(f"{index_path}: bad entry keys in {row!r}")
        vol = read_volume(atlas_dir / row["path"])
        if not isinstance(vol, Volume3D):
            raise ParseError(f"{index_path}: {row['path']} is not an "
                             "intensity volume")
        if vol.dims != ATLAS_DIMS:
            raise ParseError(f"{index_path}: {row['path']} is not 64x64x64")
        ev = float(row["ev"])
        recomputed = embryonic_volume(Mask3D._wrap_trusted(
            (vol.data > 0.5).astype(np.uint8), vol.spacing))
        if not ev > 0 or abs(recomputed - ev) > 0.01 * ev:
            raise ParseError(
                f"{index_path}: {row['path']} ev {ev} does not match "
                f"recomputed {recomputed:.3f} within 1%")
        entries.append(AtlasEntry(subject_id=int(row["subject_id"]),
                                  week=int(row["week"]), volume=vol, ev=ev))
    return entries


def best_atlas(atlases: list[AtlasEntry], ev: float) -> AtlasEntry:
    """Entry with the closest ev; ties go to lower week, then lower subject."""
    if not atlases:
        raise ArgumentError("atlas list is empty")
    if not ev > 0:
        raise ArgumentError("ev must be positive")
    return min(atlases, key=lambda e: (abs(e.ev - ev), e.week, e.subject_id))


def atlas_select(cset: CandidateSet, atlases: list[AtlasEntry]) -> SelectorVerdict:
    """Pick the candidate most correlated with the EV-matched atlas.

    Candidates are zoomed by cbrt(median atlas EV / EV(S)) onto the 64-cube
    before NCC. A constant candidate scores -inf; NCC ties within 1e-9 go to
    the lowest index.
    """
    ev = cset.source_ev
    if not ev > 0:
        raise ArgumentError("candidate set has non-positive embryonic volume")
    median_ev = float(np.median([e.ev for e in atlases]))
    zoom = float(np.cbrt(median_ev / ev))
    entry = best_atlas(atlases, ev)
    scores = []
    notes = []
    for i, vol in enumerate(cset.volumes):
        small = rescale_iso(vol, zoom, ATLAS_DIMS, grid_center(vol))
        try:
            scores.append(ncc(small, entry.volume))
        except DegenerateInputError:
            scores.append(float("-inf"))
            notes.append(f"candidate {i}: constant after rescale")
    top = max(scores)
    if top == float("-inf"):
        notes.append("all candidates degenerate")
        choice = None
    else:
        choice = next(i for i, s in enumerate(scores) if s > top - NCC_TIE)
    notes.append(f"matched atlas subject{entry.subject_id}_week{entry.week} "
                 f"(ev {entry.ev:.1f})")
    return SelectorVerdict(selector="atlas", choice=choice,
                           scores=tuple(scores), notes=tuple(notes))


def forest_select(cset: CandidateSet, model: ForestModel) -> SelectorVerdict:
    """Pick the candidate the forest rates most likely standard."""
    feats = np.stack([mid_sagittal_features(v) for v in cset.volumes])
    probs = predict_proba_batch(model, feats)
    choice = int(np.argmax(probs))
    return SelectorVerdict(selector="forest", choice=choice,
                           scores=tuple(float(p) for p in probs))


def majority_vote(verdicts) -> int | None:
    """Index backed by >= 2 verdicts, else None (Failure); abstentions never vote."""
    verdicts = list(verdicts)
    if len(verdicts) != 3:
        raise ArgumentError("majority vote needs exactly 3 verdicts")
    if len({v.selector for v in verdicts}) != 3:
        raise ArgumentError("verdicts must come from distinct selectors")
    votes = [v.choice for v in verdicts if v.choice is not None]
    for idx in set(votes):
        if votes.count(idx) >= 2:
            return idx
    return None

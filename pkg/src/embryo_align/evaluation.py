"""Accuracy accounting, rotation-error measurement, and McNemar mid-p tests."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np

from .errors import ArgumentError

METHODS = ("default", "pearson", "atlas", "forest", "majority")


def _check_rotation(r, name) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) \
            or np.linalg.norm(r.T @ r - np.eye(3)) >= 1e-8 \
            or abs(np.linalg.det(r) - 1.0) >= 1e-8:
        raise ArgumentError(f"{name} is not a proper rotation")
    return r


def rotation_angle(ra, rb) -> float:
    """Geodesic angle between two rotations, in degrees."""
    ra = _check_rotation(ra, "ra")
    rb = _check_rotation(rb, "rb")
    cos = (np.trace(ra.T @ rb) - 1.0) / 2.0
    return float(np.degrees(np.arccos(min(1.0, max(-1.0, cos)))))


def judge(sample, chosen_rotation, tolerance_deg: float = 15.0) -> bool:
    """True iff the chosen candidate rotation is within tolerance of truth.

    Accepts a PhantomSample or a bare truth rotation matrix.
    """
    truth = getattr(sample, "truth_rotation", sample)
    return rotation_angle(chosen_rotation, truth) <= tolerance_deg


def mcnemar_mid_p(b: int, c: int) -> float:
    """Exact McNemar mid-p from the two discordant-pair counts."""
    if int(b) != b or int(c) != c or b < 0 or c < 0:
        raise ArgumentError("discordant counts must be non-negative integers")
    b, c = int(b), int(c)
    n = b + c
    if n == 0:
        return 1.0
    k = max(b, c)
    denom = 2 ** n
    tail = sum(comb(n, i) for i in range(k, n + 1))
    p_two = min(Fraction(1), 2 * Fraction(tail, denom))
    mid = p_two - Fraction(comb(n, k), denom)
    mid = min(max(mid, Fraction(0)), Fraction(1))
    return float(mid)


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one method on one sample.

    candidate_available records whether any of the sample's four candidates
    passes the judge; it is a property of the sample, repeated across its
    method rows.
    """

    sample_id: str
    week: int
    method: str
    chosen: int | None
    correct: bool
    rotation_error_deg: float | None
    candidate_available: bool

    def __post_init__(self):
        if self.method not in METHODS:
            raise ArgumentError(f"unknown method {self.method!r}")
        if self.correct and self.chosen is None:
            raise ArgumentError("a failed trial cannot be correct")
        if self.rotation_error_deg is not None \
                and not 0.0 <= self.rotation_error_deg <= 180.0:
            raise ArgumentError("rotation_error_deg out of [0, 180]")


@dataclass(frozen=True)
class EvaluationReport:
    per_week: dict
    overall: dict
    mcnemar: dict


def _aggregate(rows: list[TrialResult]) -> dict:
    ids = {}
    for r in rows:
        ids.setdefault(r.sample_id, r.candidate_available)
    methods = sorted({r.method for r in rows})
    accuracy = {}
    for m in methods:
        sub = [r for r in rows if r.method == m]
        accuracy[m] = sum(r.correct for r in sub) / len(sub)
    return {
        "n": len(ids),
        "pca_candidate_available_rate":
            sum(ids.values()) / len(ids),
        "accuracy": accuracy,
    }


def build_report(results: list[TrialResult]) -> EvaluationReport:
    """Per-week and overall aggregates plus pairwise McNemar mid-p values."""
    if not results:
        raise ArgumentError("cannot build a report from no results")
    weeks = sorted({r.week for r in results})
    per_week = {w: _aggregate([r for r in results if r.week == w])
                for w in weeks}
    overall = _aggregate(results)

    by_method = {}
    for r in results:
        by_method.setdefault(r.method, {})[r.sample_id] = r.correct
    mcnemar = {}
    methods = sorted(by_method)
    for i, ma in enumerate(methods):
        for mb in methods[i + 1:]:
            shared = sorted(set(by_method[ma]) & set(by_method[mb]))
            b = sum(by_method[ma][s] and not by_method[mb][s] for s in shared)
            c = sum(not by_method[ma][s] and by_method[mb][s] for s in shared)
            mcnemar[f"{ma}_vs_{mb}"] = mcnemar_mid_p(b, c)
    return EvaluationReport(per_week=per_week, overall=overall, mcnemar=mcnemar)


def report_to_dict(report: EvaluationReport) -> dict:
    return {
        "per_week": {str(w): stats for w, stats in report.per_week.items()},
        "overall": report.overall,
        "mcnemar": report.mcnemar,
    }


def render_table(report: EvaluationReport) -> str:
    """Plain-text accuracy table: methods as rows, weeks as columns."""
    weeks = sorted(report.per_week)
    cols = ["All"] + [f"wk{w}" for w in weeks]
    stats = [report.overall] + [report.per_week[w] for w in weeks]
    methods = [m for m in METHODS if m in report.overall["accuracy"]]

    lines = []
    head = ["method".ljust(12)] + [c.rjust(8) for c in cols]
    lines.append("".join(head))
    lines.append("".join(["n".ljust(12)] + [str(s["n"]).rjust(8) for s in stats]))
    lines.append("".join(
        ["available".ljust(12)]
        + [f"{100 * s['pca_candidate_available_rate']:.1f}".rjust(8)
           for s in stats]))
    for m in methods:
        row = [m.ljust(12)]
        for s in stats:
            acc = s["accuracy"].get(m)
            row.append(("-" if acc is None else f"{100 * acc:.1f}").rjust(8))
        lines.append("".join(row))
    if report.mcnemar:
        lines.append("")
        lines.append("mcnemar mid-p:")
        for pair, p in sorted(report.mcnemar.items()):
            lines.append(f"  {pair}: {p:.6g}")
    return "\n".join(lines) + "\n"

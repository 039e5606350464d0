"""Reachability gating: deviation-inflated tubes around MPC predictions.

For every controller whose paired failure is plausible, the predicted
trajectory is inflated by the training-time worst-case position deviation of
that controller under each plausible failure. A controller survives the gate
only if every such tube stays inside free space. Consecutive prediction discs
are bridged with their swept segment so thin obstacles cannot tunnel through
the tube.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import FailSafeError, TrainingError
from .geometry import FreeSpace, Segment, point_segment_distance, segment_segment_distance

SIGMA_HEADER = "controller,failure,max_dx,max_dy,max_dtheta,max_pos"


@dataclass(frozen=True)
class SigmaEntry:
    """Componentwise worst-case deviations of one (controller, failure) pair."""

    dx: float
    dy: float
    dtheta: float
    r: float  # worst-case position deviation, used for tube inflation


@dataclass
class DeviationBoundTable:
    """Worst-case deviation per (controller, failure) pair, from training."""

    entries: dict[tuple[str, str], SigmaEntry]

    def __getitem__(self, key: tuple[str, str]) -> SigmaEntry:
        return self.entries[key]

    def __contains__(self, key) -> bool:
        return key in self.entries

    @property
    def controllers(self) -> tuple[str, ...]:
        return tuple(sorted({c for c, _ in self.entries}))

    @property
    def failures(self) -> tuple[str, ...]:
        return tuple(sorted({f for _, f in self.entries}))

    def validate_complete(self) -> None:
        missing = [(c, f) for c in self.controllers for f in self.failures
                   if (c, f) not in self.entries]
        if missing:
            raise TrainingError(f"deviation table is missing pairs: {missing}")

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(SIGMA_HEADER + "\n")
        for (c, f) in sorted(self.entries):
            e = self.entries[(c, f)]
            out.write(f"{c},{f},{float(e.dx)!r},{float(e.dy)!r},"
                      f"{float(e.dtheta)!r},{float(e.r)!r}\n")
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DeviationBoundTable":
        lines = [ln for ln in text.strip().splitlines() if ln]
        if not lines or lines[0] != SIGMA_HEADER:
            raise TrainingError("bad deviation table header")
        entries = {}
        for ln in lines[1:]:
            c, f, dx, dy, dth, r = ln.split(",")
            entries[(c, f)] = SigmaEntry(float(dx), float(dy), float(dth), float(r))
        return cls(entries)


@dataclass(frozen=True)
class ReachableSet:
    """Discs of a common radius centered on the predicted positions, with the
    segments between consecutive centers bridged (a capsule chain)."""

    centers: np.ndarray  # (H+1, 2)
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=np.float64))
        if self.centers.ndim != 2 or self.centers.shape[1] != 2 or len(self.centers) == 0:
            raise ValueError("centers must be a nonempty (n, 2) array")
        if self.radius < 0.0:
            raise ValueError("radius must be >= 0")


def build_reachable_set(prediction, sigma: SigmaEntry, robot_radius: float) -> ReachableSet:
    """Tube around a prediction: every disc radius is r_cf + robot_radius."""
    centers = prediction.array[:, :2] if hasattr(prediction, "array") else np.asarray(prediction)
    return ReachableSet(centers=centers, radius=sigma.r + robot_radius)


def is_safe(rset: ReachableSet, free: FreeSpace) -> bool:
    """Exact test that no tube disc or bridging segment leaves free space."""
    r = rset.radius
    c = rset.centers
    b = free.bounds
    for x, y in c:
        if x - r < b.xmin or x + r > b.xmax or y - r < b.ymin or y + r > b.ymax:
            return False
    # capsule chain vs obstacles; a single pose degenerates to a point test
    segs = [Segment(c[k, 0], c[k, 1], c[k + 1, 0], c[k + 1, 1]) for k in range(len(c) - 1)]
    if not segs:
        segs = [Segment(c[0, 0], c[0, 1], c[0, 0], c[0, 1])]
    for seg in segs:
        for d in free.discs:
            if point_segment_distance(d.cx, d.cy, seg) < r + d.radius:
                return False
        for w in free.walls:
            if segment_segment_distance(seg, w) < r:
                return False
    return True


def safe_controllers(pset, predictions: Mapping[str, object], table: DeviationBoundTable,
                     free: FreeSpace, pairing: Mapping[str, str], robot_radius: float) -> set[str]:
    """Controllers paired with a plausible failure whose tubes, one per
    plausible failure, all stay inside free space.

    ``pairing`` maps failure id -> controller id. Candidates without a
    prediction (an infeasible solve) are treated as unsafe.
    """
    failures = sorted(pset.failures if hasattr(pset, "failures") else set(pset))
    candidates = [pairing[f] for f in failures if f in pairing]
    safe = set()
    for cid in sorted(candidates):
        pred = predictions.get(cid)
        if pred is None:
            continue
        ok = True
        for fid in failures:
            rset = build_reachable_set(pred, table[(cid, fid)], robot_radius)
            if not is_safe(rset, free):
                ok = False
                break
        if ok:
            safe.add(cid)
    return safe


def conservative_select(safe: Iterable[str], pset, table: DeviationBoundTable) -> str:
    """Safe controller with the lowest worst-case position deviation over the
    plausible failures; ties go to the lowest controller id."""
    safe = sorted(set(safe))
    if not safe:
        raise FailSafeError("no safe controller for the plausible-failure set")
    failures = sorted(pset.failures if hasattr(pset, "failures") else set(pset))
    def worst(cid: str) -> float:
        return max(table[(cid, fid)].r for fid in failures)
    return sorted(safe, key=lambda cid: (worst(cid), cid))[0]

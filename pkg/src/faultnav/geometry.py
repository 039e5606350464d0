"""Planar geometry primitives shared by the MPC obstacle terms, the
reachability checks and the harness collision test.

All distance tests are closed-form (no sampling); the reachability module
relies on that for its exactness guarantees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Disc:
    """Circular obstacle."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError(f"obstacle radius must be > 0, got {self.radius}")


@dataclass(frozen=True)
class Segment:
    """Wall segment (thin obstacle). Shipped scenes use axis-aligned walls."""

    x1: float
    y1: float
    x2: float
    y2: float


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned workspace rectangle."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise ValueError("degenerate workspace bounds")

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def interior_clearance(self, x: float, y: float) -> float:
        """Distance from a point to the nearest boundary edge (negative outside)."""
        return min(x - self.xmin, self.xmax - x, y - self.ymin, self.ymax - y)


@dataclass(frozen=True)
class FreeSpace:
    """Known map: disc obstacles, wall segments and the workspace rectangle."""

    bounds: Bounds
    discs: tuple[Disc, ...] = field(default_factory=tuple)
    walls: tuple[Segment, ...] = field(default_factory=tuple)

    @property
    def obstacle_count(self) -> int:
        return len(self.discs) + len(self.walls)


def point_segment_distance(px: float, py: float, seg: Segment) -> float:
    """Exact distance from a point to a segment."""
    vx, vy = seg.x2 - seg.x1, seg.y2 - seg.y1
    wx, wy = px - seg.x1, py - seg.y1
    vv = vx * vx + vy * vy
    if vv <= 0.0:
        return math.hypot(wx, wy)
    t = (wx * vx + wy * vy) / vv
    t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    return math.hypot(px - (seg.x1 + t * vx), py - (seg.y1 + t * vy))


def segment_point_distance(ax, ay, bx, by, px, py) -> float:
    """Distance from point (px, py) to segment (a, b) given as coordinates."""
    return point_segment_distance(px, py, Segment(ax, ay, bx, by))


def segment_segment_distance(a: Segment, b: Segment) -> float:
    """Exact distance between two segments (0 when they intersect)."""
    if _segments_intersect(a, b):
        return 0.0
    return min(
        point_segment_distance(a.x1, a.y1, b),
        point_segment_distance(a.x2, a.y2, b),
        point_segment_distance(b.x1, b.y1, a),
        point_segment_distance(b.x2, b.y2, a),
    )


def _orient(ax, ay, bx, by, cx, cy) -> float:
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)


def _on_segment(ax, ay, bx, by, px, py) -> bool:
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _segments_intersect(a: Segment, b: Segment) -> bool:
    d1 = _orient(b.x1, b.y1, b.x2, b.y2, a.x1, a.y1)
    d2 = _orient(b.x1, b.y1, b.x2, b.y2, a.x2, a.y2)
    d3 = _orient(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1)
    d4 = _orient(a.x1, a.y1, a.x2, a.y2, b.x2, b.y2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0:
        return True
    if d1 == 0 and _on_segment(b.x1, b.y1, b.x2, b.y2, a.x1, a.y1):
        return True
    if d2 == 0 and _on_segment(b.x1, b.y1, b.x2, b.y2, a.x2, a.y2):
        return True
    if d3 == 0 and _on_segment(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1):
        return True
    if d4 == 0 and _on_segment(a.x1, a.y1, a.x2, a.y2, b.x2, b.y2):
        return True
    return False


def point_clearance(x: float, y: float, free: FreeSpace) -> float:
    """Distance from a point to the nearest obstacle boundary / wall / workspace edge.

    Negative inside a disc obstacle or outside the workspace.
    """
    clr = free.bounds.interior_clearance(x, y)
    for d in free.discs:
        clr = min(clr, math.hypot(x - d.cx, y - d.cy) - d.radius)
    for w in free.walls:
        clr = min(clr, point_segment_distance(x, y, w))
    return clr


def circle_collides(x: float, y: float, radius: float, free: FreeSpace) -> bool:
    """True when a robot disc at (x, y) touches an obstacle, a wall, or leaves the workspace."""
    if not free.bounds.contains(x, y):
        return True
    for d in free.discs:
        if math.hypot(x - d.cx, y - d.cy) < radius + d.radius:
            return True
    for w in free.walls:
        if point_segment_distance(x, y, w) < radius:
            return True
    return False

"""Reference trajectories the scenarios ask the controllers to track."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .sim import Pose


@dataclass(frozen=True)
class StraightLine:
    """Constant-speed line from start to goal, clamped at the goal."""

    start: tuple[float, float]
    goal: tuple[float, float]
    speed: float

    @property
    def length(self) -> float:
        return math.hypot(self.goal[0] - self.start[0], self.goal[1] - self.start[1])

    @property
    def duration(self) -> float:
        return self.length / self.speed

    def pose_at(self, t: float) -> Pose:
        heading = math.atan2(self.goal[1] - self.start[1], self.goal[0] - self.start[0])
        s = min(max(t, 0.0) * self.speed, self.length)
        return Pose(
            self.start[0] + s * math.cos(heading),
            self.start[1] + s * math.sin(heading),
            heading,
        )

    def to_dict(self) -> dict:
        return {"type": "straight", "start": list(self.start), "goal": list(self.goal),
                "speed": self.speed}


@dataclass(frozen=True)
class EllipsePath:
    """Patrol loop around an ellipse (a circle when a == b).

    The parameter advances at speed / mean-radius, so the ground speed is
    exact on circles and mildly modulated on eccentric ellipses.
    """

    center: tuple[float, float]
    a: float
    b: float
    speed: float
    phase: float = 0.0
    ccw: bool = True

    @property
    def duration(self) -> float:
        return math.inf

    def pose_at(self, t: float) -> Pose:
        rate = self.speed / (0.5 * (self.a + self.b))
        sgn = 1.0 if self.ccw else -1.0
        phi = self.phase + sgn * rate * max(t, 0.0)
        x = self.center[0] + self.a * math.cos(phi)
        y = self.center[1] + self.b * math.sin(phi)
        tx = -self.a * math.sin(phi) * sgn
        ty = self.b * math.cos(phi) * sgn
        return Pose(x, y, math.atan2(ty, tx))

    def to_dict(self) -> dict:
        return {"type": "ellipse", "center": list(self.center), "a": self.a, "b": self.b,
                "speed": self.speed, "phase": self.phase, "ccw": self.ccw}


def trajectory_from_dict(d: dict):
    kind = d["type"]
    if kind == "straight":
        return StraightLine(tuple(d["start"]), tuple(d["goal"]), d["speed"])
    if kind == "ellipse":
        return EllipsePath(tuple(d["center"]), d["a"], d["b"], d["speed"],
                           d.get("phase", 0.0), d.get("ccw", True))
    raise ValueError(f"unknown trajectory type {kind!r}")

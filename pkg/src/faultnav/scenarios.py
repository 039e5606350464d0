"""Scenario definitions: free space, reference, failure schedule, termination.

Shipped scenarios cover the three training references plus the evaluation
narratives (corridor recovery, the adversarial detection fork, and the
unknown-failure patrol).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .geometry import Bounds, Disc, FreeSpace, Segment, point_clearance
from .sim import FailureModel, Pose
from .trajectories import EllipsePath, StraightLine, trajectory_from_dict

SCENARIO_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FailureEvent:
    """Activate a failure model at a point in time (stays active afterwards)."""

    t: float
    failure: FailureModel


@dataclass(frozen=True)
class Scenario:
    name: str
    free: FreeSpace
    reference: object  # StraightLine | EllipsePath
    start: Pose
    goal: tuple[float, float] | None
    duration: float
    schedule: tuple[FailureEvent, ...] = ()
    goal_tolerance: float = 0.5
    noise_scale_theta: float = 1.0  # multiplies the sim heading noise std

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ConfigError("scenario duration must be > 0")
        if point_clearance(self.start.x, self.start.y, self.free) <= 0.0:
            raise ConfigError("scenario start pose lies outside free space")

    def active_failure(self, t: float) -> FailureModel | None:
        current = None
        for ev in sorted(self.schedule, key=lambda e: e.t):
            if t >= ev.t:
                current = ev.failure
        return current

    def to_dict(self) -> dict:
        return {
            "version": SCENARIO_SCHEMA_VERSION,
            "name": self.name,
            "bounds": [self.free.bounds.xmin, self.free.bounds.ymin,
                       self.free.bounds.xmax, self.free.bounds.ymax],
            "obstacles": [{"type": "disc", "center": [d.cx, d.cy], "radius": d.radius}
                          for d in self.free.discs]
                         + [{"type": "wall", "from": [w.x1, w.y1], "to": [w.x2, w.y2]}
                            for w in self.free.walls],
            "reference": self.reference.to_dict(),
            "start": [self.start.x, self.start.y, self.start.theta],
            "goal": list(self.goal) if self.goal else None,
            "goal_tolerance": self.goal_tolerance,
            "duration": self.duration,
            "noise_scale_theta": self.noise_scale_theta,
            "failure_schedule": [
                {"t": ev.t, "failure": {"id": ev.failure.id, "kind": ev.failure.kind,
                                        "params": dict(ev.failure.params)}}
                for ev in self.schedule
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("version") != SCENARIO_SCHEMA_VERSION:
            raise ConfigError(f"unsupported scenario version {d.get('version')!r}")
        discs = []
        walls = []
        for o in d.get("obstacles", []):
            if o["type"] == "disc":
                discs.append(Disc(o["center"][0], o["center"][1], o["radius"]))
            elif o["type"] == "wall":
                walls.append(Segment(o["from"][0], o["from"][1], o["to"][0], o["to"][1]))
            else:
                raise ConfigError(f"unknown obstacle type {o['type']!r}")
        free = FreeSpace(bounds=Bounds(*d["bounds"]), discs=tuple(discs), walls=tuple(walls))
        schedule = tuple(
            FailureEvent(ev["t"], FailureModel(id=ev["failure"]["id"], kind=ev["failure"]["kind"],
                                               params=ev["failure"].get("params", {})))
            for ev in d.get("failure_schedule", [])
        )
        return cls(
            name=d["name"],
            free=free,
            reference=trajectory_from_dict(d["reference"]),
            start=Pose(*d["start"]),
            goal=tuple(d["goal"]) if d.get("goal") else None,
            duration=d["duration"],
            schedule=schedule,
            goal_tolerance=d.get("goal_tolerance", 0.5),
            noise_scale_theta=d.get("noise_scale_theta", 1.0),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        return cls.from_json(Path(path).read_text())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


# -- shipped scenarios -----------------------------------------------------------


def _open_bounds() -> Bounds:
    return Bounds(-6.0, -6.0, 30.0, 6.0)


def train_line() -> Scenario:
    """Straight training corridor with the same dodge geometry the evaluation
    corridor uses; failures are injected by the training loop. The dodge keeps
    the angular rate alive so steering degradations leave a signature."""
    return Scenario(
        name="train-line",
        free=FreeSpace(
            bounds=_open_bounds(),
            discs=(Disc(12.0, 0.3, 0.6),),
            walls=(Segment(-1.0, 2.0, 26.0, 2.0), Segment(-1.0, -2.0, 26.0, -2.0)),
        ),
        reference=StraightLine((0.0, 0.0), (25.0, 0.0), 1.0),
        start=Pose(0.0, 0.0, 0.0),
        goal=None,
        duration=15.0,
    )


def train_ellipse_slow() -> Scenario:
    ref = EllipsePath((0.0, 0.0), 2.0, 1.2, 0.6)
    return Scenario(
        name="train-ellipse-slow",
        free=FreeSpace(bounds=Bounds(-5.0, -5.0, 5.0, 5.0)),
        reference=ref,
        start=ref.pose_at(0.0),
        goal=None,
        duration=15.0,
    )


def train_ellipse_mid() -> Scenario:
    ref = EllipsePath((0.0, 0.0), 2.0, 1.2, 0.8)
    return Scenario(
        name="train-ellipse-mid",
        free=FreeSpace(bounds=Bounds(-5.0, -5.0, 5.0, 5.0)),
        reference=ref,
        start=ref.pose_at(0.0),
        goal=None,
        duration=15.0,
    )


def train_ellipse_fast() -> Scenario:
    ref = EllipsePath((0.0, 0.0), 2.0, 1.2, 1.0)
    return Scenario(
        name="train-ellipse-fast",
        free=FreeSpace(bounds=Bounds(-5.0, -5.0, 5.0, 5.0)),
        reference=ref,
        start=ref.pose_at(0.0),
        goal=None,
        duration=15.0,
    )


def _gate_walls(gate_x: float, slot_lo: float, slot_hi: float) -> tuple[Segment, ...]:
    """Corridor walls plus a cross-wall with an off-center slot to thread."""
    return (
        Segment(-1.0, 2.0, 26.0, 2.0),
        Segment(-1.0, -2.0, 26.0, -2.0),
        Segment(gate_x, slot_hi, gate_x, 2.0),
        Segment(gate_x, -2.0, gate_x, slot_lo),
    )


def corridor_recovery() -> Scenario:
    """Straight corridor with an off-center slot to thread; steering authority
    collapses at speed mid-dodge. Without correction the vehicle sails on a
    frozen heading into the gate wall; the matched controller knows to slow
    down, where steering still works."""
    return Scenario(
        name="corridor-recovery",
        free=FreeSpace(bounds=_open_bounds(), walls=_gate_walls(7.5, -1.0, -0.2)),
        reference=StraightLine((0.0, 0.0), (25.0, 0.0), 1.2),
        start=Pose(0.0, 0.0, 0.0),
        goal=(25.0, 0.0),
        duration=45.0,
        schedule=(FailureEvent(5.0, FailureModel(id="f1", kind="velocity-coupled-steering",
                                                 params={"coupling": 1.25})),),
    )


def adversarial_fork() -> Scenario:
    """Same corridor threading under a 30% steering loss with elevated heading
    noise, pushing runtime attributes onto the f2/f5 decision boundary."""
    return Scenario(
        name="adversarial-fork",
        free=FreeSpace(bounds=_open_bounds(), walls=_gate_walls(7.5, -1.0, -0.2)),
        reference=StraightLine((0.0, 0.0), (25.0, 0.0), 1.2),
        start=Pose(0.0, 0.0, 0.0),
        goal=(25.0, 0.0),
        duration=45.0,
        noise_scale_theta=4.0,
        schedule=(FailureEvent(4.0, FailureModel(id="f2", kind="steering-scale",
                                                 params={"loss": 0.30})),),
    )


def circle_unknown() -> Scenario:
    """Tight patrol circle under a 20% steering loss that is absent from the
    training catalogue but bounded by the 30% and 10% losses."""
    ref = EllipsePath((0.0, 0.0), 0.85, 0.85, 1.0)
    return Scenario(
        name="circle-unknown",
        free=FreeSpace(bounds=Bounds(-5.0, -5.0, 5.0, 5.0)),
        reference=ref,
        start=ref.pose_at(0.0),
        goal=None,
        duration=60.0,
        schedule=(FailureEvent(3.0, FailureModel(id="fx", kind="steering-scale",
                                                 params={"loss": 0.20})),),
    )


SHIPPED_SCENARIOS = {
    "train-line": train_line,
    "train-ellipse-slow": train_ellipse_slow,
    "train-ellipse-mid": train_ellipse_mid,
    "train-ellipse-fast": train_ellipse_fast,
    "corridor-recovery": corridor_recovery,
    "adversarial-fork": adversarial_fork,
    "circle-unknown": circle_unknown,
}


def shipped_scenario(name: str) -> Scenario:
    try:
        return SHIPPED_SCENARIOS[name]()
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; shipped: {sorted(SHIPPED_SCENARIOS)}")

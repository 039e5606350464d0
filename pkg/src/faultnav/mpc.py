"""Trajectory-tracking MPC bank, one controller tuned per catalogued failure.

Each controller embeds the failure model it assumes (its internal dynamics)
and solves a single-shooting tracking problem with projected-gradient descent,
warm-started from the previous solution. The returned prediction carries the
full state sequence the detection and reachability stages consume.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import _kernel
from .errors import ConfigError, InfeasibleError
from .geometry import FreeSpace, wrap_angle
from .sim import ControlInput, FailureModel, Pose

_KIND_CODES = {
    "none": _kernel.KIND_NONE,
    "steering-scale": _kernel.KIND_SCALE,
    "velocity-coupled-steering": _kernel.KIND_COUPLED,
    "angular-bias": _kernel.KIND_BIAS,
    "position-drift": _kernel.KIND_DRIFT,
}

TIER_MARGIN = "margin"
TIER_COLLISION = "collision"


def _kernel_params(f: FailureModel) -> tuple[int, float, float]:
    kind = _KIND_CODES[f.kind]
    if f.kind == "steering-scale":
        return kind, f.params["loss"], 0.0
    if f.kind == "velocity-coupled-steering":
        return kind, f.params["coupling"], 0.0
    if f.kind == "angular-bias":
        return kind, f.params["bias"], 0.0
    if f.kind == "position-drift":
        return kind, f.params["drift_x"], f.params["drift_y"]
    return kind, 0.0, 0.0


@dataclass(frozen=True)
class ControllerSpec:
    """Tuning of one bank member. Controller c_i is paired with failure f_i
    through its internal model."""

    id: str
    internal_model: FailureModel
    horizon_steps: int = 50
    dt: float = 0.1
    q: tuple[float, float, float] = (8.0, 8.0, 1.0)
    r: tuple[float, float] = (0.05, 0.02)
    v_max: float = 1.5
    omega_max: float = 2.0
    margin: float = 0.25
    iter_cap: int = 50
    penalty_weight: float = 200.0
    tol: float = 1e-9

    def __post_init__(self):
        if self.horizon_steps < 1:
            raise ConfigError("horizon_steps must be >= 1")
        if min(self.q) < 0.0 or min(self.r) < 0.0:
            raise ConfigError("cost weights must be >= 0")
        if self.v_max <= 0.0 or self.omega_max <= 0.0:
            raise ConfigError("input bounds must be > 0")

    @property
    def paired_failure(self) -> str:
        return self.internal_model.id

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "assumed_failure": {"id": self.internal_model.id, "kind": self.internal_model.kind,
                                "params": dict(self.internal_model.params)},
            "horizon_steps": self.horizon_steps,
            "dt": self.dt,
            "state_weights": list(self.q),
            "input_weights": list(self.r),
            "v_max": self.v_max,
            "omega_max": self.omega_max,
            "margin": self.margin,
            "iter_cap": self.iter_cap,
            "penalty_weight": self.penalty_weight,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerSpec":
        f = d["assumed_failure"]
        return cls(
            id=d["id"],
            internal_model=FailureModel(id=f["id"], kind=f["kind"], params=f.get("params", {})),
            horizon_steps=d["horizon_steps"],
            dt=d.get("dt", 0.1),
            q=tuple(d["state_weights"]),
            r=tuple(d["input_weights"]),
            v_max=d["v_max"],
            omega_max=d["omega_max"],
            margin=d["margin"],
            iter_cap=d.get("iter_cap", 50),
            penalty_weight=d.get("penalty_weight", 400.0),
        )


@dataclass(frozen=True)
class ReferenceWindow:
    """Desired states over the horizon, one row per control period."""

    array: np.ndarray  # (H+1, 3)

    def __post_init__(self):
        arr = np.asarray(self.array, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3 or len(arr) < 2:
            raise ConfigError("reference window must be (H+1, 3) with H >= 1")
        object.__setattr__(self, "array", arr)

    def __len__(self) -> int:
        return len(self.array)

    def poses(self) -> tuple[Pose, ...]:
        return tuple(Pose(*row) for row in self.array)


@dataclass(frozen=True)
class Prediction:
    """Solver output: predicted states over the horizon plus the input to apply."""

    states: tuple[Pose, ...]
    first_input: ControlInput
    array: np.ndarray = field(repr=False)   # raw (H+1, 3), heading unwrapped
    inputs: np.ndarray = field(repr=False)  # (H, 2), feeds the next warm start
    cost: float = 0.0
    tier: str = TIER_MARGIN


def reference_window(trajectory, t: float, spec: ControllerSpec) -> ReferenceWindow:
    """Sample the scenario reference at the control period over the horizon,
    clamping at the trajectory end."""
    rows = np.empty((spec.horizon_steps + 1, 3))
    for i in range(spec.horizon_steps + 1):
        p = trajectory.pose_at(t + i * spec.dt)
        rows[i, 0] = p.x
        rows[i, 1] = p.y
        rows[i, 2] = p.theta
    return ReferenceWindow(rows)


def shift_warm_start(inputs: np.ndarray | None, horizon_steps: int) -> np.ndarray:
    """Previous solution advanced one step (last input repeated); zeros when cold."""
    if inputs is None:
        return np.zeros((horizon_steps, 2))
    warm = np.empty((horizon_steps, 2))
    n = min(len(inputs) - 1, horizon_steps)
    warm[:n] = inputs[1:1 + n]
    warm[n:] = inputs[-1]
    return warm


def _free_space_arrays(free: FreeSpace | None):
    if free is None:
        discs = np.zeros((0, 3))
        segs = np.zeros((0, 4))
        bounds = np.array([-1e12, -1e12, 1e12, 1e12])
        return discs, segs, bounds
    discs = np.array([[d.cx, d.cy, d.radius] for d in free.discs], dtype=np.float64).reshape(-1, 3)
    segs = np.array([[w.x1, w.y1, w.x2, w.y2] for w in free.walls], dtype=np.float64).reshape(-1, 4)
    bounds = np.array([free.bounds.xmin, free.bounds.ymin, free.bounds.xmax, free.bounds.ymax])
    return discs, segs, bounds


def solve(spec: ControllerSpec, pose: Pose, ref: ReferenceWindow, free: FreeSpace | None,
          warm_start: np.ndarray | None = None, robot_radius: float = 0.2) -> Prediction:
    """One receding-horizon solve.

    Returns the best iterate that honors the clearance margin; when the margin
    is transiently unsatisfiable (the vehicle already sits inside the margin
    band) it degrades to the best collision-free plan instead of erroring.
    Raises InfeasibleError only when even stopping in place is predicted to
    collide — the run loop's fail-safe trigger.
    """
    if len(ref) < spec.horizon_steps + 1:
        raise ConfigError(
            f"reference window too short: {len(ref)} < {spec.horizon_steps + 1}")
    kind, pa, pb = _kernel_params(spec.internal_model)
    discs, segs, bounds = _free_space_arrays(free)
    x0 = pose.as_array()
    warm = shift_warm_start(warm_start, spec.horizon_steps)
    u_a, found_a, cost_a, u_b, found_b, cost_b, _ = _kernel.solve_pgd(
        x0, warm, ref.array[: spec.horizon_steps + 1], spec.dt, kind, pa, pb,
        np.asarray(spec.q, dtype=np.float64), np.asarray(spec.r, dtype=np.float64),
        spec.v_max, spec.omega_max, discs, segs, bounds,
        spec.margin, robot_radius, spec.penalty_weight, spec.iter_cap, spec.tol,
    )
    if found_a:
        u, cost, tier = u_a, cost_a, TIER_MARGIN
    elif found_b:
        u, cost, tier = u_b, cost_b, TIER_COLLISION
    else:
        raise InfeasibleError(
            f"controller {spec.id}: no collision-free plan exists, not even stopping")
    states = _kernel.rollout(x0, u, spec.dt, kind, pa, pb)
    poses = tuple(Pose(row[0], row[1], wrap_angle(row[2])) for row in states)
    return Prediction(
        states=poses,
        first_input=ControlInput(float(u[0, 0]), float(u[0, 1])),
        array=states,
        inputs=u,
        cost=float(cost),
        tier=tier,
    )


def predict_cost(spec: ControllerSpec, pose: Pose, ref: ReferenceWindow,
                 free: FreeSpace | None, inputs: np.ndarray) -> float:
    """Objective value of a given input sequence (the solver's own scoring)."""
    kind, pa, pb = _kernel_params(spec.internal_model)
    discs, segs, bounds = _free_space_arrays(free)
    states = _kernel.rollout(pose.as_array(), np.asarray(inputs, dtype=np.float64),
                             spec.dt, kind, pa, pb)
    return float(_kernel.cost_of(states, np.asarray(inputs, dtype=np.float64),
                                 ref.array[: spec.horizon_steps + 1],
                                 np.asarray(spec.q, dtype=np.float64),
                                 np.asarray(spec.r, dtype=np.float64),
                                 discs, segs, bounds, spec.margin, spec.penalty_weight))


class ControllerBank:
    """The tuned controllers plus the failure<->controller pairing."""

    def __init__(self, specs: list[ControllerSpec]):
        ids = [s.id for s in specs]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate controller ids")
        failures = [s.paired_failure for s in specs]
        if len(set(failures)) != len(failures):
            raise ConfigError("controller ids must form a bijection with failure ids")
        self.specs = {s.id: s for s in specs}
        self.pairing = {s.paired_failure: s.id for s in specs}

    def __getitem__(self, cid: str) -> ControllerSpec:
        return self.specs[cid]

    def __iter__(self):
        return iter(sorted(self.specs))

    def __len__(self) -> int:
        return len(self.specs)

    @property
    def controller_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.specs))

    @property
    def failure_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.pairing))

    def catalogue(self) -> list[FailureModel]:
        return [self.specs[self.pairing[f]].internal_model for f in self.failure_ids]

    def controller_for(self, failure_id: str) -> str:
        return self.pairing[failure_id]

    def to_json(self) -> str:
        return json.dumps({"controllers": [self.specs[c].to_dict() for c in sorted(self.specs)]},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ControllerBank":
        d = json.loads(text)
        return cls([ControllerSpec.from_dict(e) for e in d["controllers"]])

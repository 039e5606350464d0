"""Deterministic, seedable 2D unicycle simulator with pluggable failure models.

A failure transforms the commanded input (and possibly adds a position drift)
before the kinematics integrate, turning the nominal dynamics into degraded ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigError, SimulationFault
from .geometry import wrap_angle

FAILURE_KINDS = (
    "none",
    "steering-scale",
    "velocity-coupled-steering",
    "angular-bias",
    "position-drift",
)


@dataclass(frozen=True)
class Pose:
    """Vehicle state (x, y, heading). Heading is always wrapped to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=np.float64)


@dataclass(frozen=True)
class ControlInput:
    """Commanded linear velocity (m/s) and angular velocity (rad/s)."""

    v: float
    omega: float


@dataclass(frozen=True)
class FailureModel:
    """One catalogued degradation of the plant.

    Parameter names per kind:
      steering-scale:             loss (fraction of angular authority lost, in [0, 1])
      velocity-coupled-steering:  coupling (s/m; authority drops with speed)
      angular-bias:               bias (rad/s added to the angular rate)
      position-drift:             drift_x, drift_y (m/s added to the position rate)
      none:                       no parameters
    """

    id: str
    kind: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FAILURE_KINDS:
            raise ConfigError(f"unknown failure kind {self.kind!r}")
        p = dict(self.params)
        if self.kind == "steering-scale":
            loss = p.get("loss")
            if loss is None or not 0.0 <= loss <= 1.0:
                raise ConfigError(f"steering-scale loss must be in [0, 1], got {loss}")
        elif self.kind == "velocity-coupled-steering":
            if p.get("coupling") is None or p["coupling"] < 0.0:
                raise ConfigError("velocity-coupled-steering needs coupling >= 0")
        elif self.kind == "angular-bias":
            if p.get("bias") is None:
                raise ConfigError("angular-bias needs a bias value")
        elif self.kind == "position-drift":
            if p.get("drift_x") is None or p.get("drift_y") is None:
                raise ConfigError("position-drift needs drift_x and drift_y")
        object.__setattr__(self, "params", p)


NO_FAILURE = FailureModel(id="f0", kind="none")


@dataclass(frozen=True)
class SimConfig:
    """Control period, per-step process noise, robot geometry and input bounds."""

    dt: float = 0.1
    noise_x: float = 0.005
    noise_y: float = 0.005
    noise_theta: float = 0.0015
    robot_radius: float = 0.2
    v_max: float = 1.5
    omega_max: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigError("dt must be > 0")
        if min(self.noise_x, self.noise_y, self.noise_theta) < 0.0:
            raise ConfigError("noise std must be >= 0")
        if self.robot_radius <= 0.0:
            raise ConfigError("robot_radius must be > 0")


def apply_failure(u: ControlInput, f: FailureModel, pose: Pose) -> tuple[ControlInput, tuple[float, float]]:
    """Transform a commanded input under a failure.

    Returns the effective input and the position-rate drift (m/s). The pose
    argument keeps the signature uniform for failure kinds that may depend on
    state; none of the current kinds do.
    """
    kind = f.kind
    if kind == "none":
        return u, (0.0, 0.0)
    if kind == "steering-scale":
        return ControlInput(u.v, (1.0 - f.params["loss"]) * u.omega), (0.0, 0.0)
    if kind == "velocity-coupled-steering":
        scale = max(0.0, 1.0 - f.params["coupling"] * abs(u.v))
        return ControlInput(u.v, u.omega * scale), (0.0, 0.0)
    if kind == "angular-bias":
        return ControlInput(u.v, u.omega + f.params["bias"]), (0.0, 0.0)
    if kind == "position-drift":
        return u, (f.params["drift_x"], f.params["drift_y"])
    raise ConfigError(f"unknown failure kind {kind!r}")


def step(pose: Pose, u: ControlInput, f: FailureModel, cfg: SimConfig, rng: np.random.Generator) -> Pose:
    """One Euler step of the (possibly degraded) unicycle.

    Noise is drawn per step per channel even when its std is zero, so runs
    with different noise settings share the same RNG stream alignment.
    """
    if abs(u.v) > cfg.v_max + 1e-9 or abs(u.omega) > cfg.omega_max + 1e-9:
        raise ConfigError(f"input ({u.v}, {u.omega}) outside bounds (±{cfg.v_max}, ±{cfg.omega_max})")
    eff, drift = apply_failure(u, f, pose)
    nx = rng.normal(0.0, cfg.noise_x)
    ny = rng.normal(0.0, cfg.noise_y)
    nt = rng.normal(0.0, cfg.noise_theta)
    x = pose.x + (eff.v * math.cos(pose.theta) + drift[0]) * cfg.dt + nx
    y = pose.y + (eff.v * math.sin(pose.theta) + drift[1]) * cfg.dt + ny
    theta = pose.theta + eff.omega * cfg.dt + nt
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(theta)):
        raise SimulationFault(f"non-finite state after step from {pose} with {u}")
    return Pose(x, y, theta)


def default_catalogue() -> list[FailureModel]:
    """Shipped failure catalogue: the nominal class plus five degradations.

    Magnitudes are configuration values; only the 30% steering loss of f2 and
    the 10% of f5 are fixed points of the design, the rest are calibrated so
    that trained deviation signatures stay distinguishable.
    """
    return [
        FailureModel(id="f0", kind="none"),
        FailureModel(id="f1", kind="velocity-coupled-steering", params={"coupling": 1.25}),
        FailureModel(id="f2", kind="steering-scale", params={"loss": 0.30}),
        FailureModel(id="f3", kind="angular-bias", params={"bias": 0.4}),
        FailureModel(id="f4", kind="position-drift", params={"drift_x": 0.0, "drift_y": 0.3}),
        FailureModel(id="f5", kind="steering-scale", params={"loss": 0.10}),
    ]

"""Loading of the shipped configuration: controller bank, sim and arbitration
settings, monitor/uncertainty hyperparameters and the training plan.

The bank weights were tuned offline (scripts/tune_bank.py) and are committed
as JSON; runtime code never re-tunes.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .arbitration import ArbitrationConfig
from .mpc import ControllerBank
from .sim import SimConfig


@dataclass(frozen=True)
class RuntimeConfig:
    """Everything the online stage needs besides the bank and artifacts."""

    sim: SimConfig
    arbitration: ArbitrationConfig
    tree_max_depth: int = 8
    tree_min_leaf: int = 20
    n_s: int = 10

    @classmethod
    def from_dict(cls, d: dict) -> "RuntimeConfig":
        return cls(
            sim=SimConfig(**d["sim"]),
            arbitration=ArbitrationConfig(**d["arbitration"]),
            tree_max_depth=d["tree"]["max_depth"],
            tree_min_leaf=d["tree"]["min_leaf"],
            n_s=d["uncertainty"]["n_s"],
        )

    def to_dict(self) -> dict:
        return {
            "sim": {
                "dt": self.sim.dt,
                "noise_x": self.sim.noise_x,
                "noise_y": self.sim.noise_y,
                "noise_theta": self.sim.noise_theta,
                "robot_radius": self.sim.robot_radius,
                "v_max": self.sim.v_max,
                "omega_max": self.sim.omega_max,
                "seed": self.sim.seed,
            },
            "arbitration": {
                "eta_star": self.arbitration.eta_star,
                "gamma": self.arbitration.gamma,
                "w_theta": self.arbitration.w_theta,
                "p_hit": self.arbitration.p_hit,
                "p_miss": self.arbitration.p_miss,
            },
            "tree": {"max_depth": self.tree_max_depth, "min_leaf": self.tree_min_leaf},
            "uncertainty": {"n_s": self.n_s},
        }


def _config_text(name: str) -> str:
    return resources.files("faultnav").joinpath("configs").joinpath(name).read_text()


def load_bank(path: str | Path | None = None) -> ControllerBank:
    text = Path(path).read_text() if path else _config_text("bank.json")
    return ControllerBank.from_json(text)


def load_runtime(path: str | Path | None = None) -> RuntimeConfig:
    text = Path(path).read_text() if path else _config_text("runtime.json")
    return RuntimeConfig.from_dict(json.loads(text))

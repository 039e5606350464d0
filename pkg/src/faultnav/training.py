"""Offline stage: run every controller x failure combination over the training
scenarios, harvest attribute samples, worst-case deviation bounds and the
perturbation table, fit the monitor tree, and persist everything.

Artifacts are bitwise-deterministic for a fixed plan: every run derives its
RNG from the plan seed and the combination indices, and aggregation happens in
a fixed (controller, failure, scenario, seed) order.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import ConfigError, InfeasibleError, TrainingError
from .monitor import DecisionTree, compute_attributes, fit
from .mpc import ControllerBank, reference_window, solve
from .reach import DeviationBoundTable, SigmaEntry
from .scenarios import Scenario, shipped_scenario
from .sim import SimConfig, step
from .uncertainty import PerturbationTable, compute_delta_table

ARTIFACT_SCHEMA_VERSION = 1

_MANIFEST = "manifest.json"
_DATASET = "dataset.csv"
_SIGMA = "sigma.csv"
_DELTAS = "deltas.csv"
_TREE = "tree.json"

DATASET_HEADER = "dx,dy,dtheta,controller_id,failure_id,run_id,step"


@dataclass(frozen=True)
class TrainingPlan:
    controllers: tuple[str, ...]
    failures: tuple[str, ...]
    scenarios: tuple[str, ...]
    seeds: tuple[int, ...]
    steps: int

    def __post_init__(self):
        if not (self.controllers and self.failures and self.scenarios and self.seeds):
            raise ConfigError("training plan needs controllers, failures, scenarios and seeds")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")

    def to_dict(self) -> dict:
        return {
            "controllers": list(self.controllers),
            "failures": list(self.failures),
            "scenarios": list(self.scenarios),
            "seeds": list(self.seeds),
            "steps": self.steps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingPlan":
        return cls(tuple(d["controllers"]), tuple(d["failures"]), tuple(d["scenarios"]),
                   tuple(d["seeds"]), d["steps"])

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def default_plan(bank: ControllerBank) -> TrainingPlan:
    return TrainingPlan(
        controllers=bank.controller_ids,
        failures=bank.failure_ids,
        scenarios=("train-line", "train-ellipse-slow", "train-ellipse-mid",
                   "train-ellipse-fast"),
        seeds=(0,),
        steps=150,
    )


@dataclass
class TrainingArtifacts:
    dataset: Dataset
    sigma_table: DeviationBoundTable
    delta_table: PerturbationTable
    tree: DecisionTree
    meta: dict

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrainingArtifacts):
            return NotImplemented
        return (
            np.array_equal(self.dataset.X, other.dataset.X)
            and np.array_equal(self.dataset.controllers, other.dataset.controllers)
            and np.array_equal(self.dataset.labels, other.dataset.labels)
            and np.array_equal(self.dataset.run_id, other.dataset.run_id)
            and np.array_equal(self.dataset.step, other.dataset.step)
            and self.sigma_table.entries == other.sigma_table.entries
            and np.array_equal(self.delta_table.deltas, other.delta_table.deltas)
            and np.array_equal(self.delta_table.mean, other.delta_table.mean)
            and np.array_equal(self.delta_table.std, other.delta_table.std)
            and self.delta_table.n_s == other.delta_table.n_s
            and self.tree == other.tree
            and self.meta == other.meta
        )


def _run_combination(spec, failure, scenario: Scenario, seed_seq, sim: SimConfig,
                     steps: int) -> np.ndarray:
    """Closed loop of one controller under one always-active failure.

    Each step yields one attribute row: observed pose vs the one-step-ahead
    prediction of the solve that commanded the step.
    """
    rng = np.random.default_rng(seed_seq)
    pose = scenario.start
    traj = scenario.reference
    warm = None
    rows = np.empty((steps, 3))
    for k in range(steps):
        ref = reference_window(traj, k * sim.dt, spec)
        pred = solve(spec, pose, ref, scenario.free, warm_start=warm,
                     robot_radius=sim.robot_radius)
        warm = pred.inputs
        pose = step(pose, pred.first_input, failure, sim, rng)
        alpha = compute_attributes(pred.states[1], pose, spec.id)
        rows[k, 0] = alpha.dx
        rows[k, 1] = alpha.dy
        rows[k, 2] = alpha.dtheta
    return rows


def generate_dataset(plan: TrainingPlan, bank: ControllerBank, sim: SimConfig,
                     scenario_lookup=shipped_scenario) -> tuple[Dataset, DeviationBoundTable, dict]:
    """Run the plan and aggregate samples plus per-pair worst-case deviations."""
    catalogue = {f.id: f for f in bank.catalogue()}
    missing = [f for f in plan.failures if f not in catalogue]
    if missing:
        raise ConfigError(f"plan failures not in the catalogue: {missing}")
    xs, controllers, labels, run_ids, steps_col = [], [], [], [], []
    maxes: dict[tuple[str, str], np.ndarray] = {}
    excluded = []
    run_id = 0
    for ci, cid in enumerate(plan.controllers):
        spec = bank[cid]
        for fi, fid in enumerate(plan.failures):
            pair_rows = []
            for si, scen_name in enumerate(plan.scenarios):
                scenario = scenario_lookup(scen_name)
                for gi, seed in enumerate(plan.seeds):
                    seq = np.random.SeedSequence([int(seed), ci, fi, si])
                    try:
                        rows = _run_combination(spec, catalogue[fid], scenario, seq, sim,
                                                plan.steps)
                    except InfeasibleError as err:
                        excluded.append({"controller": cid, "failure": fid,
                                         "scenario": scen_name, "seed": int(seed),
                                         "error": str(err)})
                        run_id += 1
                        continue
                    pair_rows.append(rows)
                    xs.append(rows)
                    controllers.extend([cid] * len(rows))
                    labels.extend([fid] * len(rows))
                    run_ids.extend([run_id] * len(rows))
                    steps_col.extend(range(len(rows)))
                    run_id += 1
            if not pair_rows:
                raise TrainingError(f"no surviving runs for pair ({cid}, {fid})")
            allr = np.vstack(pair_rows)
            pos = np.sqrt(allr[:, 0] ** 2 + allr[:, 1] ** 2)
            maxes[(cid, fid)] = np.array([
                np.abs(allr[:, 0]).max(), np.abs(allr[:, 1]).max(),
                np.abs(allr[:, 2]).max(), pos.max(),
            ])
    dataset = Dataset(
        X=np.vstack(xs),
        controllers=np.array(controllers, dtype=object),
        labels=np.array(labels, dtype=object),
        run_id=np.array(run_ids, dtype=np.int64),
        step=np.array(steps_col, dtype=np.int64),
    )
    sigma = DeviationBoundTable({
        key: SigmaEntry(dx=float(v[0]), dy=float(v[1]), dtheta=float(v[2]), r=float(v[3]))
        for key, v in maxes.items()
    })
    provenance = {
        "plan": plan.to_dict(),
        "plan_hash": plan.hash(),
        "sim": {"dt": sim.dt, "noise_x": sim.noise_x, "noise_y": sim.noise_y,
                "noise_theta": sim.noise_theta, "robot_radius": sim.robot_radius},
        "excluded_runs": excluded,
        "n_samples": len(dataset),
    }
    return dataset, sigma, provenance


def fit_artifacts(dataset: Dataset, sigma_table: DeviationBoundTable, *, n_s: int,
                  max_depth: int, min_leaf: int, provenance: dict | None = None) -> TrainingArtifacts:
    """Fit the monitor tree and perturbation table over a generated dataset."""
    if len(dataset) == 0:
        raise TrainingError("empty dataset")
    sigma_table.validate_complete()
    tree = fit(dataset.to_samples(), max_depth=max_depth, min_leaf=min_leaf)
    delta = compute_delta_table(dataset, n_s)
    meta = {
        "version": ARTIFACT_SCHEMA_VERSION,
        "n_s": n_s,
        "tree_params": {"max_depth": max_depth, "min_leaf": min_leaf},
        "provenance": provenance or {},
    }
    return TrainingArtifacts(dataset, sigma_table, delta, tree, meta)


# -- persistence -------------------------------------------------------------------


def persist(artifacts: TrainingArtifacts, path: str | Path) -> None:
    """Write the artifact directory (manifest + dataset + tables + tree)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    ds = artifacts.dataset
    with open(path / _DATASET, "w") as f:
        f.write(DATASET_HEADER + "\n")
        for i in range(len(ds)):
            f.write(f"{float(ds.X[i, 0])!r},{float(ds.X[i, 1])!r},{float(ds.X[i, 2])!r},"
                    f"{ds.controllers[i]},{ds.labels[i]},{ds.run_id[i]},{ds.step[i]}\n")
    (path / _SIGMA).write_text(artifacts.sigma_table.to_csv())
    with open(path / _DELTAS, "w") as f:
        f.write("delta\n")
        for v in artifacts.delta_table.deltas:
            f.write(f"{float(v)!r}\n")
    (path / _TREE).write_text(artifacts.tree.to_json())
    manifest = dict(artifacts.meta)
    manifest["version"] = ARTIFACT_SCHEMA_VERSION
    manifest["standardization"] = {
        "mean": [repr(float(v)) for v in artifacts.delta_table.mean],
        "std": [repr(float(v)) for v in artifacts.delta_table.std],
    }
    manifest["n_samples"] = len(ds)
    (path / _MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))


def load(path: str | Path) -> TrainingArtifacts:
    """Load an artifact directory; rejects missing files and schema mismatches."""
    path = Path(path)
    manifest_path = path / _MANIFEST
    if not manifest_path.exists():
        raise TrainingError(f"no manifest at {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise TrainingError(f"corrupt manifest: {err}") from err
    if manifest.get("version") != ARTIFACT_SCHEMA_VERSION:
        raise TrainingError(
            f"artifact schema version {manifest.get('version')!r} != {ARTIFACT_SCHEMA_VERSION}")
    try:
        lines = (path / _DATASET).read_text().splitlines()
        if not lines or lines[0] != DATASET_HEADER:
            raise TrainingError("bad dataset header")
        n = len(lines) - 1
        if n != manifest.get("n_samples"):
            raise TrainingError(f"dataset has {n} rows, manifest says {manifest.get('n_samples')}")
        X = np.empty((n, 3))
        controllers = np.empty(n, dtype=object)
        labels = np.empty(n, dtype=object)
        run_id = np.empty(n, dtype=np.int64)
        steps = np.empty(n, dtype=np.int64)
        for i, ln in enumerate(lines[1:]):
            dx, dy, dth, cid, fid, rid, st = ln.split(",")
            X[i] = (float(dx), float(dy), float(dth))
            controllers[i] = cid
            labels[i] = fid
            run_id[i] = int(rid)
            steps[i] = int(st)
        dataset = Dataset(X=X, controllers=controllers, labels=labels,
                          run_id=run_id, step=steps)
        sigma = DeviationBoundTable.from_csv((path / _SIGMA).read_text())
        delta_lines = (path / _DELTAS).read_text().splitlines()
        if not delta_lines or delta_lines[0] != "delta":
            raise TrainingError("bad deltas header")
        deltas = np.array([float(v) for v in delta_lines[1:]])
        if len(deltas) != n:
            raise TrainingError("delta table length does not match the dataset")
        std_block = manifest["standardization"]
        table = PerturbationTable(
            deltas=deltas,
            mean=np.array([float(v) for v in std_block["mean"]]),
            std=np.array([float(v) for v in std_block["std"]]),
            n_s=manifest["n_s"],
        )
        tree = DecisionTree.from_json((path / _TREE).read_text())
    except (OSError, ValueError, KeyError, IndexError) as err:
        raise TrainingError(f"corrupt artifacts at {path}: {err}") from err
    meta = {k: manifest[k] for k in ("version", "n_s", "tree_params", "provenance")}
    return TrainingArtifacts(dataset, sigma, table, tree, meta)

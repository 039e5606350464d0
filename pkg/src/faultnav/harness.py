"""Online stage: the per-cycle decision loop, run logging, metrics and the
plot-data bundle.

Cycle order (full mode): observe -> attributes -> reinforce the previously
deployed controller -> detect + explain -> plausible set (perturbation, then
any standing operator intervention) -> candidate predictions -> reachability
gate -> conservative pick -> arbitration -> step the vehicle under the
scheduled true failure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .arbitration import (FAIL_SAFE, ArbitrationConfig, ConfidencePMF, Decision,
                          PerformanceRecord, deviation, reinforce, select)
from .config import RuntimeConfig
from .errors import ConfigError, InfeasibleError
from .geometry import circle_collides
from .monitor import AttributeVector, Explanation, compute_attributes, detect, explain
from .mpc import ControllerBank, Prediction, reference_window, solve
from .reach import build_reachable_set, conservative_select, safe_controllers
from .scenarios import Scenario
from .sim import NO_FAILURE, ControlInput, Pose, SimConfig, step
from .training import TrainingArtifacts
from .uncertainty import (SOURCE_MONITOR, OperatorIntervention, PlausibleSet,
                          apply_intervention, lookup_delta, perturbed_set,
                          plausible_failures)

MODES = ("full", "dt-only", "no-recovery", "nominal")

STATUS_GOAL = "goal-reached"
STATUS_COLLISION = "collision"
STATUS_FAIL_SAFE = "fail-safe"
STATUS_TIMEOUT = "timeout"


@dataclass(frozen=True)
class CycleRecord:
    cycle: int
    t: float
    pose: Pose
    ref_pose: Pose
    alpha: AttributeVector
    eta: float
    detection: str
    explanation: str
    pset: tuple[str, ...]
    pset_source: str
    safe: tuple[str, ...]
    deployed: str
    rule: str
    pmf: dict[str, float]
    command: ControlInput
    intervention_applied: bool = False
    true_failure: str = "f0"


@dataclass
class RunLog:
    scenario: str
    mode: str
    seed: int
    failure_ids: tuple[str, ...]
    records: list[CycleRecord] = field(default_factory=list)
    status: str | None = None

    @property
    def cycles(self) -> int:
        return len(self.records)

    def finish(self, status: str) -> None:
        if self.status is not None:
            raise ConfigError("run status already set")
        self.status = status

    def to_csv(self) -> str:
        failure_order = list(self.failure_ids)
        header = ("cycle,t,x,y,theta,ref_x,ref_y,ref_theta,dx,dy,dtheta,alpha_controller,"
                  "eta,detection,pset_mask,pset_source,safe,deployed,rule,v,omega,"
                  "intervention,true_failure,"
                  + ",".join(f"pr_{h}" for h in self._pmf_ids()))
        rows = [header]
        for r in self.records:
            mask = 0
            for i, fid in enumerate(failure_order):
                if fid in r.pset:
                    mask |= 1 << i
            rows.append(
                f"{r.cycle},{r.t:.3f},{r.pose.x!r},{r.pose.y!r},{r.pose.theta!r},"
                f"{r.ref_pose.x!r},{r.ref_pose.y!r},{r.ref_pose.theta!r},"
                f"{r.alpha.dx!r},{r.alpha.dy!r},{r.alpha.dtheta!r},{r.alpha.controller_id},"
                f"{r.eta!r},{r.detection},{mask},{r.pset_source},"
                f"{'|'.join(r.safe)},{r.deployed},{r.rule},{r.command.v!r},{r.command.omega!r},"
                f"{int(r.intervention_applied)},{r.true_failure},"
                + ",".join(repr(r.pmf[c]) for c in self._pmf_ids())
            )
        return "\n".join(rows) + f"\n# status={self.status}\n"

    def _pmf_ids(self) -> tuple[str, ...]:
        if not self.records:
            return ()
        return tuple(sorted(self.records[0].pmf))


@dataclass(frozen=True)
class Metrics:
    collision: bool
    goal_distance: float
    tracking_rmse: float
    time_to_recovery: float | None
    controller_switches: int
    status: str


def compute_metrics(log: RunLog, scenario: Scenario, arb: ArbitrationConfig) -> Metrics:
    """Pure function of a completed run log."""
    if log.status is None:
        raise ConfigError("run log is incomplete")
    errs = [math.hypot(r.pose.x - r.ref_pose.x, r.pose.y - r.ref_pose.y) for r in log.records]
    rmse = math.sqrt(sum(e * e for e in errs) / len(errs)) if errs else 0.0
    last = log.records[-1].pose if log.records else scenario.start
    goal = scenario.goal if scenario.goal else (scenario.reference.pose_at(scenario.duration).x,
                                                scenario.reference.pose_at(scenario.duration).y)
    goal_distance = math.hypot(last.x - goal[0], last.y - goal[1])
    switches = sum(1 for a, b in zip(log.records[:-1], log.records[1:])
                   if a.deployed != b.deployed)
    activation = min((ev.t for ev in scenario.schedule), default=None)
    recovery = None
    if activation is not None:
        hold = max(1, int(round(2.0 / max(log.records[1].t - log.records[0].t, 1e-9)))) \
            if len(log.records) > 1 else 1
        run = 0
        for r in log.records:
            if r.t < activation:
                continue
            if r.eta < arb.eta_star:
                run += 1
                if run >= hold:
                    recovery = r.t - activation
                    break
            else:
                run = 0
    return Metrics(
        collision=log.status == STATUS_COLLISION,
        goal_distance=goal_distance,
        tracking_rmse=rmse,
        time_to_recovery=recovery,
        controller_switches=switches,
        status=log.status,
    )


@dataclass
class _OperatorState:
    """Standing operator mode; persists across cycles until cleared."""

    mode: str | None = None
    failures: frozenset[str] = frozenset()

    def absorb(self, iv: OperatorIntervention) -> None:
        if iv.mode == "clear":
            self.mode = None
            self.failures = frozenset()
        elif iv.mode == "restrict":
            self.mode = "restrict"
            self.failures = frozenset()
        else:
            self.mode = "add"
            self.failures = iv.failures

    def apply(self, pset: PlausibleSet, detection: str, catalogue: Iterable[str]) -> PlausibleSet:
        if self.mode is None:
            return pset
        iv = OperatorIntervention(mode=self.mode,
                                  failures=self.failures or frozenset({detection}))
        if self.mode == "add":
            iv = OperatorIntervention(mode="add", failures=self.failures)
        return apply_intervention(pset, iv, detection, catalogue)


def run_scenario(scenario: Scenario, artifacts: TrainingArtifacts, bank: ControllerBank,
                 runtime: RuntimeConfig, mode: str = "full", seed: int = 0,
                 intervention_source: Callable[[int], OperatorIntervention | None] | None = None,
                 on_cycle: Callable[[CycleRecord, dict], None] | None = None,
                 pacing: Callable[[int], bool] | None = None) -> RunLog:
    """Execute the decision cycle until goal, collision, fail-safe or timeout.

    ``intervention_source(cycle)`` may hand in at most one operator
    intervention per cycle.  ``on_cycle(record, extras)`` observes each
    completed cycle (the service layer's snapshot hook).  ``pacing(cycle)``
    is called before each cycle; returning False aborts the run (treated as a
    timeout by the caller).
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; valid: {MODES}")
    sim = replace(runtime.sim, noise_theta=runtime.sim.noise_theta * scenario.noise_scale_theta)
    arb = runtime.arbitration
    catalogue_ids = bank.failure_ids
    corrective = tuple(c for c in bank.controller_ids if c != bank.controller_for("f0"))
    nominal = bank.controller_for("f0")

    rng = np.random.default_rng(np.random.SeedSequence([seed, 9_117]))
    pose = scenario.start
    pmf = ConfidencePMF.uniform(corrective)
    record = PerformanceRecord()
    warm: dict[str, np.ndarray] = {}
    prev_pred: Prediction | None = None
    prev_cid = nominal
    operator = _OperatorState()
    log = RunLog(scenario=scenario.name, mode=mode, seed=seed, failure_ids=catalogue_ids)
    max_cycles = int(round(scenario.duration / sim.dt))

    for k in range(max_cycles):
        if pacing is not None and not pacing(k):
            break
        t = k * sim.dt

        # 1. observe and score the previous deployment
        if prev_pred is not None:
            alpha = compute_attributes(prev_pred.states[1], pose, prev_cid)
        else:
            alpha = AttributeVector(0.0, 0.0, 0.0, prev_cid)
        eta = deviation(alpha.dx, alpha.dy, alpha.dtheta, arb.w_theta)
        if k > 0:
            pmf, record = reinforce(pmf, record, prev_cid, eta, arb)

        # 2. detect + explain
        detection = detect(artifacts.tree, alpha)
        expl = explain(artifacts.tree, alpha)

        # 3. plausible-failure set
        intervention_applied = False
        if mode == "full":
            delta_star = lookup_delta(alpha.continuous(), alpha.controller_id,
                                      artifacts.dataset, artifacts.delta_table)
            members = perturbed_set(alpha.continuous(), alpha.controller_id, delta_star,
                                    artifacts.dataset, artifacts.delta_table)
            pset = plausible_failures(
                [str(v) for v in artifacts.dataset.labels[members]], detection)
            if intervention_source is not None:
                iv = intervention_source(k)
                if iv is not None:
                    operator.absorb(iv)
                    intervention_applied = True
            pset = operator.apply(pset, detection, catalogue_ids)
        elif mode == "dt-only":
            pset = PlausibleSet(failures=frozenset({detection}), source=SOURCE_MONITOR)
        else:  # no-recovery / nominal keep the nominal controller
            pset = PlausibleSet(failures=frozenset({"f0"}), source=SOURCE_MONITOR)

        # 4. candidate predictions + gate + arbitration
        reachable_geo: dict[str, list] = {}
        if mode in ("no-recovery", "nominal"):
            cid = nominal
            rule = "nominal"
            safe_ids: tuple[str, ...] = (nominal,)
            predictions = {}
        elif mode == "dt-only":
            cid = bank.controller_for(detection)
            rule = "dt-only"
            safe_ids = (cid,)
            predictions = {}
        else:
            predictions = {}
            for fid in pset.sorted():
                cand = bank.controller_for(fid)
                if cand in predictions:
                    continue
                try:
                    predictions[cand] = solve(
                        bank[cand], pose, reference_window(scenario.reference, t, bank[cand]),
                        scenario.free, warm_start=warm.get(cand), robot_radius=sim.robot_radius)
                except InfeasibleError:
                    predictions[cand] = None
            predictions = {c: p for c, p in predictions.items() if p is not None}
            safe = safe_controllers(pset, predictions, artifacts.sigma_table, scenario.free,
                                    bank.pairing, sim.robot_radius)
            conservative = None
            if safe:
                conservative = conservative_select(safe, pset, artifacts.sigma_table)
            decision, pmf = select(pmf, safe, record, conservative, arb)
            if decision.is_fail_safe:
                rec = CycleRecord(
                    cycle=k, t=t, pose=pose, ref_pose=scenario.reference.pose_at(t),
                    alpha=alpha, eta=eta, detection=detection, explanation=expl.render(),
                    pset=pset.sorted(), pset_source=pset.source, safe=tuple(sorted(safe)),
                    deployed=FAIL_SAFE, rule=decision.rule, pmf=dict(pmf.probs),
                    command=ControlInput(0.0, 0.0),
                    intervention_applied=intervention_applied,
                    true_failure=(scenario.active_failure(t) or NO_FAILURE).id)
                log.records.append(rec)
                if on_cycle is not None:
                    on_cycle(rec, {"reachable": {}, "status": STATUS_FAIL_SAFE})
                log.finish(STATUS_FAIL_SAFE)
                return log
            cid = decision.controller
            rule = decision.rule
            safe_ids = tuple(sorted(safe))
            # worst-case tube per safe candidate, for the operator console
            for c in safe_ids:
                worst = max(artifacts.sigma_table[(c, fid)].r for fid in pset.sorted())
                radius = worst + sim.robot_radius
                reachable_geo[c] = [[float(p.x), float(p.y), radius]
                                    for p in predictions[c].states]

        if cid in predictions:
            pred = predictions[cid]
        else:
            try:
                pred = solve(bank[cid], pose, reference_window(scenario.reference, t, bank[cid]),
                             scenario.free, warm_start=warm.get(cid), robot_radius=sim.robot_radius)
            except InfeasibleError:
                rec = CycleRecord(
                    cycle=k, t=t, pose=pose, ref_pose=scenario.reference.pose_at(t),
                    alpha=alpha, eta=eta, detection=detection, explanation=expl.render(),
                    pset=pset.sorted(), pset_source=pset.source, safe=safe_ids,
                    deployed=FAIL_SAFE, rule="infeasible", pmf=dict(pmf.probs),
                    command=ControlInput(0.0, 0.0),
                    intervention_applied=intervention_applied,
                    true_failure=(scenario.active_failure(t) or NO_FAILURE).id)
                log.records.append(rec)
                if on_cycle is not None:
                    on_cycle(rec, {"reachable": {}, "status": STATUS_FAIL_SAFE})
                log.finish(STATUS_FAIL_SAFE)
                return log
        warm[cid] = pred.inputs
        command = pred.first_input

        # 5. step the plant under the scheduled true failure
        if mode == "nominal":
            true_failure = NO_FAILURE
        else:
            true_failure = scenario.active_failure(t) or NO_FAILURE
        pose = step(pose, command, true_failure, sim, rng)

        rec = CycleRecord(
            cycle=k, t=t, pose=pose, ref_pose=scenario.reference.pose_at(t + sim.dt),
            alpha=alpha, eta=eta, detection=detection, explanation=expl.render(),
            pset=pset.sorted(), pset_source=pset.source, safe=safe_ids, deployed=cid,
            rule=rule, pmf=dict(pmf.probs), command=command,
            intervention_applied=intervention_applied, true_failure=true_failure.id)
        log.records.append(rec)
        if on_cycle is not None:
            on_cycle(rec, {"reachable": reachable_geo, "status": None})

        prev_pred = pred
        prev_cid = cid

        if circle_collides(pose.x, pose.y, sim.robot_radius, scenario.free):
            log.finish(STATUS_COLLISION)
            return log
        if scenario.goal is not None and math.hypot(pose.x - scenario.goal[0],
                                                    pose.y - scenario.goal[1]) \
                <= scenario.goal_tolerance:
            log.finish(STATUS_GOAL)
            return log

    log.finish(STATUS_TIMEOUT)
    return log


def emit_plot_data(log: RunLog, out_dir: str | Path) -> dict[str, Path]:
    """Write the trajectory / decision-timeline / confidence files for a run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failure_order = list(log.failure_ids)
    pmf_ids = sorted(log.records[0].pmf) if log.records else []

    traj = out / "trajectory.csv"
    with open(traj, "w") as f:
        f.write("t,x,y,theta,ref_x,ref_y,ref_theta\n")
        for r in log.records:
            f.write(f"{r.t:.3f},{r.pose.x!r},{r.pose.y!r},{r.pose.theta!r},"
                    f"{r.ref_pose.x!r},{r.ref_pose.y!r},{r.ref_pose.theta!r}\n")

    dec = out / "decisions.csv"
    with open(dec, "w") as f:
        f.write("t,detection,pset_mask,deployed,rule,eta\n")
        for r in log.records:
            mask = 0
            for i, fid in enumerate(failure_order):
                if fid in r.pset:
                    mask |= 1 << i
            f.write(f"{r.t:.3f},{r.detection},{mask},{r.deployed},{r.rule},{r.eta!r}\n")

    conf = out / "confidence.csv"
    with open(conf, "w") as f:
        f.write("t," + ",".join(f"pr_{c}" for c in pmf_ids) + "\n")
        for r in log.records:
            f.write(f"{r.t:.3f}," + ",".join(repr(r.pmf[c]) for c in pmf_ids) + "\n")

    return {"trajectory": traj, "decisions": dec, "confidence": conf}

"""Runtime controller confidence and selection.

A discrete PMF over the corrective controller bank tracks how much the system
trusts each controller to be the right counter-measure. Every cycle the
deployed controller's deviation is scored against a performance threshold and
the PMF is updated by recursive Bayes; selection then applies, in order:
fail-safe on an empty safe set, threshold deployment of a trusted controller,
confidence re-initialization with an argmin-deviation fallback once every safe
controller has disappointed, and otherwise the conservative reachability pick.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .errors import ConfigError

FAIL_SAFE = "fail-safe"

RULE_FAIL_SAFE = "fail-safe"
RULE_CONFIDENCE = "confidence-threshold"
RULE_REINIT = "reinit-argmin"
RULE_CONSERVATIVE = "conservative"

_NORM_TOL = 1e-9


@dataclass(frozen=True)
class ConfidencePMF:
    """Probability per controller id; sums to one within 1e-9."""

    probs: Mapping[str, float]

    def __post_init__(self):
        total = sum(self.probs.values())
        if not math.isclose(total, 1.0, abs_tol=1e-6):
            raise ValueError(f"PMF sums to {total}, not 1")
        if any(p < 0.0 or p > 1.0 + _NORM_TOL for p in self.probs.values()):
            raise ValueError("PMF entries must lie in [0, 1]")
        object.__setattr__(self, "probs", dict(self.probs))

    @classmethod
    def uniform(cls, controller_ids: Iterable[str]) -> "ConfidencePMF":
        ids = list(controller_ids)
        return cls({cid: 1.0 / len(ids) for cid in ids})

    def __getitem__(self, cid: str) -> float:
        return self.probs[cid]

    def __contains__(self, cid: str) -> bool:
        return cid in self.probs

    def normalization_error(self) -> float:
        return abs(sum(self.probs.values()) - 1.0)

    def is_uniform(self, tol: float = 1e-12) -> bool:
        target = 1.0 / len(self.probs)
        return all(abs(p - target) <= tol for p in self.probs.values())


@dataclass(frozen=True)
class PerformanceRecord:
    """Most recent deviation and negative-reinforcement streak per controller."""

    last_eta: Mapping[str, float] = field(default_factory=dict)
    miss_streak: Mapping[str, int] = field(default_factory=dict)

    def updated(self, controller_id: str, eta: float, success: bool) -> "PerformanceRecord":
        last = dict(self.last_eta)
        streak = dict(self.miss_streak)
        last[controller_id] = eta
        streak[controller_id] = 0 if success else streak.get(controller_id, 0) + 1
        return PerformanceRecord(last_eta=last, miss_streak=streak)


@dataclass(frozen=True)
class ArbitrationConfig:
    eta_star: float = 0.25
    gamma: float = 0.75
    w_theta: float = 0.5
    p_hit: float = 0.8
    p_miss: float = 0.2
    p_floor: float = 1e-3  # keeps long streaks reversible; inactive above it

    def __post_init__(self):
        if not 0.0 < self.p_miss < self.p_hit < 1.0:
            raise ConfigError("need 0 < p_miss < p_hit < 1")
        if not 0.5 < self.gamma < 1.0:
            raise ConfigError("need 0.5 < gamma < 1")
        if not 0.0 <= self.p_floor < 0.1:
            raise ConfigError("need 0 <= p_floor < 0.1")


@dataclass(frozen=True)
class Decision:
    """Outcome of one selection: a controller or the fail-safe signal."""

    kind: str  # "controller" | "fail-safe"
    controller: str | None
    rule: str
    pmf_reset: bool = False

    @property
    def is_fail_safe(self) -> bool:
        return self.kind == FAIL_SAFE


def deviation(dx: float, dy: float, dtheta: float, w_theta: float) -> float:
    """Weighted deviation norm; the heading term is scaled into meters."""
    return math.sqrt(dx * dx + dy * dy + (w_theta * dtheta) ** 2)


def bayes_update(pmf: ConfidencePMF, deployed: str, success: bool,
                 cfg: ArbitrationConfig) -> ConfidencePMF:
    """Recursive Bayes step for the hypothesis "this controller is the right one".

    On success the deployed controller's mass is scaled by p_hit and everyone
    else's by p_miss; on failure the roles swap. The result is renormalized.
    """
    if deployed not in pmf:
        raise ConfigError(f"controller {deployed!r} is not in the PMF")
    like_deployed = cfg.p_hit if success else cfg.p_miss
    like_other = cfg.p_miss if success else cfg.p_hit
    numer = {cid: p * (like_deployed if cid == deployed else like_other)
             for cid, p in pmf.probs.items()}
    beta = sum(numer.values())
    if beta <= 0.0:
        raise ConfigError("degenerate Bayes update (all-zero numerator)")
    post = {cid: v / beta for cid, v in numer.items()}
    # floor tiny masses so a long streak stays reversible; a no-op otherwise
    if cfg.p_floor > 0.0 and min(post.values()) < cfg.p_floor:
        post = {cid: max(p, cfg.p_floor) for cid, p in post.items()}
        total = sum(post.values())
        post = {cid: p / total for cid, p in post.items()}
    return ConfidencePMF(post)


def reinforce(pmf: ConfidencePMF, record: PerformanceRecord, deployed: str, eta: float,
              cfg: ArbitrationConfig) -> tuple[ConfidencePMF, PerformanceRecord]:
    """Score the deployed controller's deviation and fold it into PMF + record.

    Success is strict (eta == eta_star counts as a miss). Controllers outside
    the PMF support (the nominal controller) update the record only.
    """
    success = eta < cfg.eta_star
    if deployed in pmf:
        pmf = bayes_update(pmf, deployed, success, cfg)
    return pmf, record.updated(deployed, eta, success)


def select(pmf: ConfidencePMF, safe: Iterable[str], record: PerformanceRecord,
           conservative: str | None, cfg: ArbitrationConfig) -> tuple[Decision, ConfidencePMF]:
    """Pick the controller to deploy this cycle.

    Returns the decision and the (possibly re-initialized) PMF. ``conservative``
    must be a member of ``safe`` whenever the safe set is nonempty.
    """
    safe = sorted(set(safe))
    if not safe:
        return Decision(FAIL_SAFE, None, RULE_FAIL_SAFE), pmf

    trusted = [cid for cid in safe if cid in pmf and pmf[cid] >= cfg.gamma]
    if trusted:
        # highest probability wins, ties go to the lowest controller id
        best = sorted(trusted, key=lambda cid: (-pmf[cid], cid))[0]
        return Decision("controller", best, RULE_CONFIDENCE), pmf

    all_disappointed = all(
        cid in record.last_eta and record.last_eta[cid] >= cfg.eta_star for cid in safe
    )
    if all_disappointed:
        reset = ConfidencePMF.uniform(pmf.probs.keys())
        fallback = sorted(safe, key=lambda cid: (record.last_eta[cid], cid))[0]
        return Decision("controller", fallback, RULE_REINIT, pmf_reset=True), reset

    if conservative is None or conservative not in safe:
        raise ConfigError("conservative pick must come from the safe set")
    return Decision("controller", conservative, RULE_CONSERVATIVE), pmf

"""Perturbation-based uncertainty around the monitor's point detection.

Offline, every training sample gets a local perturbation distance: the radius
of the smallest neighborhood (z-scored Euclidean over the continuous
attributes, neighbors restricted to samples sharing the controller) that
contains ``n_s`` other observations. At runtime the nearest training sample's
distance is looked up, all samples within that radius form the perturbed set,
and the union of their labels with the detection is the plausible-failure set
the rest of the pipeline works with.

Distances are computed by an exact vectorized scan. The datasets this system
trains on are small enough that a spatial index buys nothing, and the scan
rounds identically to the brute-force oracle the tests compare against.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .data import Dataset
from .errors import ConfigError, ValidationError

_CHUNK = 512

SOURCE_MONITOR = "monitor"
SOURCE_PERTURBATION = "monitor+perturbation"
SOURCE_OPERATOR = "operator"

INTERVENTION_MODES = ("restrict", "add", "clear")


@dataclass(frozen=True)
class PerturbationTable:
    """Per-sample perturbation distances plus the standardization parameters."""

    deltas: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_s: int

    def __len__(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class PlausibleSet:
    """Nonempty subset of the failure catalogue, tagged with how it was produced."""

    failures: frozenset[str]
    source: str

    def __post_init__(self):
        if not self.failures:
            raise ValueError("plausible set may not be empty")

    def __contains__(self, fid: str) -> bool:
        return fid in self.failures

    def sorted(self) -> tuple[str, ...]:
        return tuple(sorted(self.failures))


@dataclass(frozen=True)
class OperatorIntervention:
    mode: str
    failures: frozenset[str] = frozenset()
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self):
        if self.mode not in INTERVENTION_MODES:
            raise ValidationError(f"unknown intervention mode {self.mode!r}")
        if self.mode == "add" and not self.failures:
            raise ValidationError("add intervention requires at least one failure")
        object.__setattr__(self, "failures", frozenset(self.failures))


def _standardize(X: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return (X - mean) / std


def standardization(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0.0, std, 1.0)
    return mean, std


def compute_delta_table(dataset: Dataset, n_s: int) -> PerturbationTable:
    """Distance to the n_s-th nearest same-controller neighbor of every sample."""
    if n_s < 1:
        raise ConfigError("n_s must be >= 1")
    if len(dataset) <= n_s:
        raise ConfigError(f"need more than n_s={n_s} samples, got {len(dataset)}")
    mean, std = standardization(dataset.X)
    Z = _standardize(dataset.X, mean, std)
    deltas = np.empty(len(dataset), dtype=np.float64)
    for cid in dataset.controller_ids:
        idx = np.nonzero(dataset.controllers == cid)[0]
        if len(idx) - 1 < n_s:
            raise ConfigError(
                f"controller {cid}: {len(idx)} samples cannot support n_s={n_s} neighbors")
        stratum = Z[idx]
        for lo in range(0, len(idx), _CHUNK):
            rows = stratum[lo:lo + _CHUNK]
            d2 = ((rows[:, None, :] - stratum[None, :, :]) ** 2).sum(axis=2)
            # self sits at rank 0 with distance 0, so index n_s is the
            # n_s-th neighbor excluding self (coincident twins still count).
            kth = np.partition(d2, n_s, axis=1)[:, n_s]
            deltas[idx[lo:lo + _CHUNK]] = np.sqrt(kth)
    return PerturbationTable(deltas=deltas, mean=mean, std=std, n_s=n_s)


def _distances(x: np.ndarray, controller_id: str, dataset: Dataset,
               table: PerturbationTable) -> tuple[np.ndarray, np.ndarray]:
    """(same-controller sample indices, z-scored distances to the query)."""
    idx = np.nonzero(dataset.controllers == controller_id)[0]
    if len(idx) == 0:
        raise ConfigError(f"no training samples for controller {controller_id!r}")
    zq = _standardize(np.asarray(x, dtype=np.float64), table.mean, table.std)
    diff = _standardize(dataset.X[idx], table.mean, table.std) - zq
    return idx, np.sqrt((diff ** 2).sum(axis=1))


def nearest_index(x, controller_id: str, dataset: Dataset, table: PerturbationTable) -> int:
    """Index of the closest same-controller sample; ties go to the lowest index."""
    idx, d = _distances(x, controller_id, dataset, table)
    best = d.min()
    return int(idx[np.nonzero(d == best)[0][0]])


def lookup_delta(x, controller_id: str, dataset: Dataset, table: PerturbationTable) -> float:
    """Perturbation distance of the training sample closest to the query."""
    if len(table) != len(dataset):
        raise ConfigError("perturbation table does not match the dataset")
    if len(table) == 0:
        raise ConfigError("empty perturbation table")
    return float(table.deltas[nearest_index(x, controller_id, dataset, table)])


def perturbed_set(x, controller_id: str, delta_star: float, dataset: Dataset,
                  table: PerturbationTable) -> np.ndarray:
    """Indices of all same-controller samples within ``delta_star`` of the query.

    The nearest sample is always a member, so the set is never empty even for
    queries far outside the training distribution.
    """
    if delta_star < 0.0:
        raise ConfigError("delta_star must be >= 0")
    idx, d = _distances(x, controller_id, dataset, table)
    members = set(idx[d <= delta_star].tolist())
    best = d.min()
    members.add(int(idx[np.nonzero(d == best)[0][0]]))
    return np.array(sorted(members), dtype=np.int64)


def plausible_failures(perturbed_labels: Iterable[str], detection: str) -> PlausibleSet:
    """Union of the perturbed set's labels with the point detection."""
    failures = frozenset(perturbed_labels) | {detection}
    return PlausibleSet(failures=failures, source=SOURCE_PERTURBATION)


def apply_intervention(pset: PlausibleSet, iv: OperatorIntervention, detection: str,
                       catalogue_ids: Iterable[str]) -> PlausibleSet:
    """Apply one operator intervention to the cycle's plausible set."""
    if iv.mode == "restrict":
        return PlausibleSet(failures=frozenset({detection}), source=SOURCE_OPERATOR)
    if iv.mode == "add":
        unknown = iv.failures - set(catalogue_ids)
        if unknown:
            raise ValidationError(f"unknown failure id(s): {sorted(unknown)}")
        return PlausibleSet(failures=pset.failures | iv.failures, source=SOURCE_OPERATOR)
    return pset  # clear: back to the recomputed monitor+perturbation set

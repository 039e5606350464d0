"""Columnar container for attribute/failure training samples.

Monitor and uncertainty operations run on this dense layout; the sample
dataclass view exists for construction and tests. Row order is preserved —
documented tie-breaks refer to it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .monitor import AttributeVector, Sample


@dataclass
class Dataset:
    """Rows of continuous attributes with controller / failure labels.

    ``X`` is (n, d) float64; ``controllers`` and ``labels`` are object arrays
    of ids; ``run_id`` and ``step`` carry provenance for the shipped format.
    """

    X: np.ndarray
    controllers: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ("dx", "dy", "dtheta")
    run_id: np.ndarray = field(default=None)
    step: np.ndarray = field(default=None)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        n = len(self.X)
        self.controllers = np.asarray(self.controllers, dtype=object)
        self.labels = np.asarray(self.labels, dtype=object)
        if len(self.controllers) != n or len(self.labels) != n:
            raise ValueError("column lengths differ")
        if self.run_id is None:
            self.run_id = np.zeros(n, dtype=np.int64)
        if self.step is None:
            self.step = np.arange(n, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.X)

    @property
    def controller_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.controllers.tolist())))

    @property
    def label_ids(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.labels.tolist())))

    @classmethod
    def from_samples(cls, samples: Sequence[Sample]) -> "Dataset":
        X = np.array([[s.attributes.dx, s.attributes.dy, s.attributes.dtheta] for s in samples])
        return cls(
            X=X,
            controllers=np.array([s.attributes.controller_id for s in samples], dtype=object),
            labels=np.array([s.label for s in samples], dtype=object),
        )

    def to_samples(self) -> list[Sample]:
        if self.feature_names != ("dx", "dy", "dtheta"):
            raise ValueError("only attribute datasets convert to monitor samples")
        return [
            Sample(AttributeVector(self.X[i, 0], self.X[i, 1], self.X[i, 2],
                                   str(self.controllers[i])), str(self.labels[i]))
            for i in range(len(self))
        ]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.controllers[idx], self.labels[idx],
                       self.feature_names, self.run_id[idx], self.step[idx])

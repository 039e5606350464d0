"""Explainable decision-tree failure monitor.

Grows a CART-style tree on (attribute, failure) samples, detects the failure
for a runtime attribute vector by routing it to a leaf, and renders the
conjunction of split conditions along that path as a human-readable
explanation.

Induction is fully deterministic: splits are scored by Gini impurity and ties
are broken by lowest feature index, then lowest threshold, then the
lexicographically smallest categorical subset.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, TrainingError
from .geometry import wrap_angle
from .sim import Pose

_GINI_EPS = 1e-12


@dataclass(frozen=True)
class AttributeVector:
    """Monitor input: one-step prediction deviations plus the active controller."""

    dx: float
    dy: float
    dtheta: float
    controller_id: str

    def continuous(self) -> np.ndarray:
        return np.array([self.dx, self.dy, self.dtheta], dtype=np.float64)


@dataclass(frozen=True)
class Sample:
    attributes: AttributeVector
    label: str


@dataclass(frozen=True)
class Feature:
    name: str
    categorical: bool = False
    categories: tuple[str, ...] = ()


@dataclass(frozen=True)
class TreeSchema:
    """Feature layout the tree was grown on. Queries are encoded against it."""

    features: tuple[Feature, ...]

    def encode(self, values: Sequence) -> np.ndarray:
        """Encode one query row; categorical values map to their code or -1 if unseen."""
        row = np.empty(len(self.features), dtype=np.float64)
        for j, feat in enumerate(self.features):
            if feat.categorical:
                try:
                    row[j] = feat.categories.index(values[j])
                except ValueError:
                    row[j] = -1.0
            else:
                row[j] = float(values[j])
        return row


ATTRIBUTE_FEATURES = ("dx", "dy", "dtheta", "controller")


def attribute_schema(controller_ids: Iterable[str]) -> TreeSchema:
    return TreeSchema(
        features=(
            Feature("dx"),
            Feature("dy"),
            Feature("dtheta"),
            Feature("controller", categorical=True, categories=tuple(sorted(controller_ids))),
        )
    )


@dataclass
class TreeNode:
    """Internal node (feature + threshold or category subset) or leaf (label + counts)."""

    counts: dict[str, int]
    label: str | None = None
    feature: int | None = None
    threshold: float | None = None
    subset: frozenset[int] | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.label is not None


@dataclass(frozen=True)
class Condition:
    """One split condition oriented to the branch a query took.

    ``evaluate`` matches the routing rule exactly (<= goes left, membership
    goes left); ``render`` uses the strict signs conventional for display,
    which only differ on the measure-zero threshold boundary.
    """

    feature_name: str
    op: str  # "le" | "gt" | "in" | "not_in"
    threshold: float | None = None
    categories: tuple[str, ...] = ()

    def evaluate(self, value) -> bool:
        if self.op == "le":
            return float(value) <= self.threshold
        if self.op == "gt":
            return float(value) > self.threshold
        if self.op == "in":
            return value in self.categories
        if self.op == "not_in":
            return value not in self.categories
        raise ValueError(f"bad op {self.op!r}")

    def render(self) -> str:
        if self.op == "le":
            return f"{self.feature_name}<{self.threshold:g}"
        if self.op == "gt":
            return f"{self.feature_name}>{self.threshold:g}"
        joined = ",".join(self.categories)
        symbol = "∈" if self.op == "in" else "∉"
        return f"{self.feature_name}{symbol}{{{joined}}}"


@dataclass(frozen=True)
class Explanation:
    """Conjunction of the split conditions along the routing path."""

    conditions: tuple[Condition, ...]
    label: str

    def evaluate(self, named_values: dict) -> bool:
        return all(c.evaluate(named_values[c.feature_name]) for c in self.conditions)

    def render(self) -> str:
        body = " ∧ ".join(c.render() for c in self.conditions)
        return f"{self.label} because: {{{body}}}"


class DecisionTree:
    """Fitted CART classifier over a :class:`TreeSchema`."""

    SCHEMA_VERSION = 1

    def __init__(self, root: TreeNode, schema: TreeSchema, classes: tuple[str, ...],
                 max_depth: int, min_leaf: int):
        self.root = root
        self.schema = schema
        self.classes = classes
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    # -- routing ------------------------------------------------------------

    def _route(self, row: np.ndarray) -> list[TreeNode]:
        path = [self.root]
        node = self.root
        while not node.is_leaf:
            if node.subset is not None:
                go_left = int(row[node.feature]) in node.subset
            else:
                go_left = row[node.feature] <= node.threshold
            node = node.left if go_left else node.right
            path.append(node)
        return path

    def predict_row(self, values: Sequence) -> str:
        return self._route(self.schema.encode(values))[-1].label

    def depth(self) -> int:
        def d(node):
            if node.is_leaf:
                return 0
            return 1 + max(d(node.left), d(node.right))

        return d(self.root)

    def n_leaves(self) -> int:
        def c(node):
            if node.is_leaf:
                return 1
            return c(node.left) + c(node.right)

        return c(self.root)

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        nodes = []

        def emit(node: TreeNode) -> int:
            nid = len(nodes)
            nodes.append(None)
            if node.is_leaf:
                nodes[nid] = {"id": nid, "leaf": True, "label": node.label,
                              "counts": dict(node.counts)}
            else:
                entry = {"id": nid, "leaf": False, "feature": node.feature,
                         "counts": dict(node.counts)}
                if node.subset is not None:
                    entry["subset"] = sorted(node.subset)
                else:
                    entry["threshold"] = node.threshold
                entry["left"] = emit(node.left)
                entry["right"] = emit(node.right)
                nodes[nid] = entry
            return nid

        emit(self.root)
        return {
            "version": self.SCHEMA_VERSION,
            "classes": list(self.classes),
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "schema": [
                {"name": f.name, "categorical": f.categorical, "categories": list(f.categories)}
                for f in self.schema.features
            ],
            "nodes": nodes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        if d.get("version") != cls.SCHEMA_VERSION:
            raise TrainingError(f"unsupported tree schema version {d.get('version')!r}")
        nodes = d["nodes"]

        def build(nid: int) -> TreeNode:
            e = nodes[nid]
            if e["leaf"]:
                return TreeNode(counts=dict(e["counts"]), label=e["label"])
            return TreeNode(
                counts=dict(e["counts"]),
                feature=e["feature"],
                threshold=e.get("threshold"),
                subset=frozenset(e["subset"]) if "subset" in e else None,
                left=build(e["left"]),
                right=build(e["right"]),
            )

        schema = TreeSchema(features=tuple(
            Feature(f["name"], f["categorical"], tuple(f["categories"])) for f in d["schema"]
        ))
        return cls(build(0), schema, tuple(d["classes"]), d["max_depth"], d["min_leaf"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "DecisionTree":
        return cls.from_dict(json.loads(s))

    def __eq__(self, other) -> bool:
        return isinstance(other, DecisionTree) and self.to_dict() == other.to_dict()


# -- induction ----------------------------------------------------------------


def _gini_from_counts(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float(np.dot(p, p))


def _canonical_subsets(codes: Sequence[int]) -> list[tuple[int, ...]]:
    """Nonempty proper subsets, one representative per complement pair, in
    lexicographic order of the sorted code tuple."""
    codes = sorted(codes)
    all_set = frozenset(codes)
    out = []
    for size in range(1, len(codes)):
        for comb in combinations(codes, size):
            comp = tuple(sorted(all_set - set(comb)))
            if comp < comb:
                continue  # the complement is the canonical (earlier) representative
            out.append(comb)
    out.sort()
    return out


def _best_split_for_node(X: np.ndarray, y: np.ndarray, n_classes: int,
                         schema: TreeSchema, min_leaf: int):
    """Return (feature, threshold, subset, weighted_gini) for the best valid
    split or None. Enumeration order implements the documented tie-breaking."""
    n = len(y)
    best = None  # (gini, feature, threshold, subset)
    counts_total = np.bincount(y, minlength=n_classes)
    for j, feat in enumerate(schema.features):
        col = X[:, j]
        if feat.categorical:
            codes = sorted(set(int(v) for v in col))
            if len(codes) < 2:
                continue
            for subset in _canonical_subsets(codes):
                left_mask = np.isin(col.astype(np.int64), subset)
                n_left = int(left_mask.sum())
                if n_left < min_leaf or n - n_left < min_leaf:
                    continue
                lc = np.bincount(y[left_mask], minlength=n_classes)
                rc = counts_total - lc
                g = (n_left * _gini_from_counts(lc) + (n - n_left) * _gini_from_counts(rc)) / n
                if best is None or g < best[0] - _GINI_EPS:
                    best = (g, j, None, frozenset(subset))
        else:
            order = np.argsort(col, kind="stable")
            sv = col[order]
            sy = y[order]
            distinct = np.nonzero(sv[:-1] != sv[1:])[0]
            if len(distinct) == 0:
                continue
            onehot = np.zeros((n, n_classes), dtype=np.int64)
            onehot[np.arange(n), sy] = 1
            cum = np.cumsum(onehot, axis=0)
            left_counts = cum[distinct]
            n_left = (distinct + 1).astype(np.float64)
            n_right = n - n_left
            right_counts = counts_total - left_counts
            g_left = 1.0 - ((left_counts / n_left[:, None]) ** 2).sum(axis=1)
            g_right = 1.0 - ((right_counts / n_right[:, None]) ** 2).sum(axis=1)
            g_all = (n_left * g_left + n_right * g_right) / n
            valid = (n_left >= min_leaf) & (n_right >= min_leaf)
            if not valid.any():
                continue
            g_all = np.where(valid, g_all, np.inf)
            k = int(np.argmin(g_all))  # first minimum => lowest threshold
            g = float(g_all[k])
            if best is None or g < best[0] - _GINI_EPS:
                thr = 0.5 * (sv[distinct[k]] + sv[distinct[k] + 1])
                best = (g, j, float(thr), None)
    if best is None:
        return None
    return best


def fit(samples: Sequence[Sample] | tuple[np.ndarray, np.ndarray], *,
        schema: TreeSchema | None = None,
        classes: Sequence[str] | None = None,
        max_depth: int = 8, min_leaf: int = 5) -> DecisionTree:
    """Grow a tree.

    Accepts either monitor samples (schema inferred from them) or a raw
    ``(X, labels)`` pair with an explicit schema for non-attribute datasets.
    """
    if schema is None:
        if not samples:
            raise TrainingError("no training samples")
        sample_list = list(samples)
        controllers = sorted({s.attributes.controller_id for s in sample_list})
        schema = attribute_schema(controllers)
        X = np.array(
            [[s.attributes.dx, s.attributes.dy, s.attributes.dtheta,
              schema.features[3].categories.index(s.attributes.controller_id)]
             for s in sample_list], dtype=np.float64)
        labels = np.array([s.label for s in sample_list])
    else:
        X, labels = samples
        X = np.asarray(X, dtype=np.float64)
        labels = np.asarray(labels)
    if len(labels) == 0:
        raise TrainingError("no training samples")
    if classes is None:
        classes = tuple(sorted(set(str(v) for v in labels)))
    else:
        classes = tuple(classes)
        present = set(str(v) for v in labels)
        missing = [c for c in classes if c not in present]
        if missing:
            raise TrainingError(f"empty training class(es): {missing}")
    class_index = {c: i for i, c in enumerate(classes)}
    y = np.array([class_index[str(v)] for v in labels], dtype=np.int64)
    if max_depth < 0 or min_leaf < 1:
        raise ConfigError("max_depth must be >= 0 and min_leaf >= 1")

    def counts_dict(yv: np.ndarray) -> dict[str, int]:
        bc = np.bincount(yv, minlength=len(classes))
        return {classes[i]: int(bc[i]) for i in range(len(classes)) if bc[i] > 0}

    def majority(yv: np.ndarray) -> str:
        bc = np.bincount(yv, minlength=len(classes))
        return classes[int(np.argmax(bc))]  # argmax takes the lowest class code on ties

    def grow(Xn: np.ndarray, yn: np.ndarray, depth: int) -> TreeNode:
        node_counts = counts_dict(yn)
        pure = len(node_counts) == 1
        if pure or depth >= max_depth or len(yn) < 2 * min_leaf:
            return TreeNode(counts=node_counts, label=majority(yn))
        found = _best_split_for_node(Xn, yn, len(classes), schema, min_leaf)
        if found is None:
            return TreeNode(counts=node_counts, label=majority(yn))
        g, j, thr, subset = found
        parent_g = _gini_from_counts(np.bincount(yn, minlength=len(classes)))
        if g >= parent_g - _GINI_EPS:
            return TreeNode(counts=node_counts, label=majority(yn))
        if subset is not None:
            mask = np.isin(Xn[:, j].astype(np.int64), sorted(subset))
        else:
            mask = Xn[:, j] <= thr
        return TreeNode(
            counts=node_counts,
            feature=j,
            threshold=thr,
            subset=subset,
            left=grow(Xn[mask], yn[mask], depth + 1),
            right=grow(Xn[~mask], yn[~mask], depth + 1),
        )

    root = grow(X, y, 0)
    return DecisionTree(root, schema, classes, max_depth, min_leaf)


# -- runtime operations ---------------------------------------------------------


def _query_row(tree: DecisionTree, alpha) -> np.ndarray:
    if isinstance(alpha, AttributeVector):
        values = [alpha.dx, alpha.dy, alpha.dtheta, alpha.controller_id]
    else:
        values = list(alpha)
    return tree.schema.encode(values)


def detect(tree: DecisionTree, alpha) -> str:
    """Route an attribute vector to its leaf label (the failure detection)."""
    return tree._route(_query_row(tree, alpha))[-1].label


def explain(tree: DecisionTree, alpha) -> Explanation:
    """Conjunction of the split conditions along the routing path of ``alpha``."""
    row = _query_row(tree, alpha)
    path = tree._route(row)
    conditions = []
    for parent, child in zip(path[:-1], path[1:]):
        feat = tree.schema.features[parent.feature]
        took_left = child is parent.left
        if parent.subset is not None:
            cats = tuple(feat.categories[i] for i in sorted(parent.subset))
            conditions.append(Condition(feat.name, "in" if took_left else "not_in", categories=cats))
        else:
            conditions.append(Condition(feat.name, "le" if took_left else "gt",
                                        threshold=parent.threshold))
    return Explanation(conditions=tuple(conditions), label=path[-1].label)


def compute_attributes(predicted: Pose, observed: Pose, controller_id: str) -> AttributeVector:
    """Deviation between the one-step-ahead prediction and the observed pose."""
    return AttributeVector(
        dx=observed.x - predicted.x,
        dy=observed.y - predicted.y,
        dtheta=wrap_angle(observed.theta - predicted.theta),
        controller_id=controller_id,
    )


def training_error(tree: DecisionTree, samples: Sequence[Sample]) -> float:
    wrong = sum(1 for s in samples if detect(tree, s.attributes) != s.label)
    return wrong / len(samples)

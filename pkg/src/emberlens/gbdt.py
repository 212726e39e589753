"""LightGBM text-format model parsing and gradient-boosted tree evaluation.

Supports the subset of the format a binary-objective model uses: key=value
header lines followed by ``Tree=N`` blocks with space-separated arrays.
Only numerical <= splits are handled; child references are signed ints where
a negative value -k refers to leaf k-1 (the LightGBM convention).  Node
covers (training sample counts) are taken from ``internal_count`` /
``leaf_count`` and are required by the SHAP explainer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .featurize import FeatureVector


class Objective(Enum):
    BINARY_SIGMOID = "binary_sigmoid"


class ModelParseError(ValueError):
    def __init__(self, message: str, tree: int | None = None, key: str = ""):
        where = ""
        if tree is not None:
            where += f" (tree {tree})"
        if key:
            where += f" (key: {key})"
        super().__init__(message + where)
        self.tree = tree
        self.key = key


_CATEGORICAL_MASK = 1
_DEFAULT_LEFT_MASK = 2


@dataclass
class DecisionTree:
    """One binary decision tree; negative child refs encode leaves (-k -> leaf k-1)."""

    split_feature: np.ndarray
    threshold: np.ndarray
    left_child: np.ndarray
    right_child: np.ndarray
    default_left: np.ndarray
    leaf_value: np.ndarray
    internal_count: np.ndarray
    leaf_count: np.ndarray

    @property
    def num_leaves(self) -> int:
        return len(self.leaf_value)

    @property
    def root(self) -> int:
        # A 1-leaf tree is a bare constant; its root is the leaf itself.
        return 0 if self.num_leaves > 1 else -1

    def is_leaf(self, ref: int) -> bool:
        return ref < 0

    def leaf_index(self, ref: int) -> int:
        return -ref - 1

    def cover(self, ref: int) -> float:
        if ref < 0:
            return float(self.leaf_count[-ref - 1])
        return float(self.internal_count[ref])

    def value_at(self, ref: int) -> float:
        return float(self.leaf_value[-ref - 1])

    def route(self, node: int, x: np.ndarray) -> int:
        """Child reference taken by x at internal node (left iff x[f] <= t)."""
        f = self.split_feature[node]
        value = x[f]
        if math.isnan(value):
            go_left = bool(self.default_left[node])
        else:
            go_left = value <= self.threshold[node]
        return int(self.left_child[node] if go_left else self.right_child[node])

    def evaluate(self, x: np.ndarray) -> float:
        ref = self.root
        while not self.is_leaf(ref):
            ref = self.route(ref, x)
        return self.value_at(ref)

    def used_features(self) -> set[int]:
        return set(int(f) for f in self.split_feature)

    def mean_value(self) -> float:
        """Cover-weighted mean leaf value (the tree's expectation)."""
        total = float(self.leaf_count.sum())
        if total <= 0:
            raise ValueError("zero root cover")
        return float(np.dot(self.leaf_value, self.leaf_count) / total)

    def validate_covers(self, rel_tol: float = 1e-6) -> None:
        for node in range(len(self.split_feature)):
            parent = self.cover(node)
            children = self.cover(int(self.left_child[node])) + self.cover(int(self.right_child[node]))
            if parent <= 0:
                raise ValueError(f"non-positive cover at node {node}")
            if abs(parent - children) > rel_tol * parent:
                raise ValueError(
                    f"cover mismatch at node {node}: parent {parent}, children sum {children}"
                )


@dataclass
class Ensemble:
    trees: list[DecisionTree]
    objective: Objective
    num_features: int

    def used_features(self) -> set[int]:
        used: set[int] = set()
        for tree in self.trees:
            used |= tree.used_features()
        return used


def _parse_array(text: str, kind, tree: int, key: str) -> np.ndarray:
    try:
        return np.array([kind(tok) for tok in text.split()], dtype=np.float64 if kind is float else np.int64)
    except ValueError as exc:
        raise ModelParseError(f"bad array value: {exc}", tree=tree, key=key) from exc


def _tree_from_block(index: int, block: dict[str, str], num_features: int) -> DecisionTree:
    if "num_leaves" not in block:
        raise ModelParseError("missing num_leaves", tree=index, key="num_leaves")
    num_leaves = int(block["num_leaves"])

    if "leaf_value" not in block:
        raise ModelParseError("missing leaf_value", tree=index, key="leaf_value")
    leaf_value = _parse_array(block["leaf_value"], float, index, "leaf_value")
    if len(leaf_value) != num_leaves:
        raise ModelParseError(
            f"leaf_value has {len(leaf_value)} entries, expected {num_leaves}",
            tree=index,
            key="leaf_value",
        )
    if "leaf_count" in block:
        leaf_count = _parse_array(block["leaf_count"], float, index, "leaf_count")
    else:
        leaf_count = np.ones(num_leaves, dtype=np.float64)

    if num_leaves == 1:
        empty_i = np.array([], dtype=np.int64)
        empty_f = np.array([], dtype=np.float64)
        return DecisionTree(
            split_feature=empty_i,
            threshold=empty_f,
            left_child=empty_i,
            right_child=empty_i,
            default_left=np.array([], dtype=bool),
            leaf_value=leaf_value,
            internal_count=empty_f,
            leaf_count=leaf_count,
        )

    n_internal = num_leaves - 1
    arrays = {}
    for key, kind in (
        ("split_feature", int),
        ("threshold", float),
        ("decision_type", int),
        ("left_child", int),
        ("right_child", int),
        ("internal_count", float),
    ):
        if key not in block:
            raise ModelParseError("missing array", tree=index, key=key)
        arr = _parse_array(block[key], kind, index, key)
        if len(arr) != n_internal:
            raise ModelParseError(
                f"{key} has {len(arr)} entries, expected {n_internal}", tree=index, key=key
            )
        arrays[key] = arr

    if int(block.get("num_cat", "0")) > 0:
        raise ModelParseError("categorical splits are not supported", tree=index, key="num_cat")
    decision_type = arrays["decision_type"].astype(np.int64)
    if np.any(decision_type & _CATEGORICAL_MASK):
        raise ModelParseError(
            "categorical decision_type is not supported", tree=index, key="decision_type"
        )
    split_feature = arrays["split_feature"].astype(np.int64)
    if np.any(split_feature < 0) or np.any(split_feature >= num_features):
        raise ModelParseError(
            f"split_feature outside [0, {num_features})", tree=index, key="split_feature"
        )

    return DecisionTree(
        split_feature=split_feature,
        threshold=arrays["threshold"],
        left_child=arrays["left_child"].astype(np.int64),
        right_child=arrays["right_child"].astype(np.int64),
        default_left=(decision_type & _DEFAULT_LEFT_MASK).astype(bool),
        leaf_value=leaf_value,
        internal_count=arrays["internal_count"],
        leaf_count=leaf_count,
    )


def parse_model(text: str) -> Ensemble:
    """Parse LightGBM text model contents into an Ensemble."""
    header: dict[str, str] = {}
    blocks: list[dict[str, str]] = []
    current: dict[str, str] | None = None

    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("end of trees"):
            continue
        if "=" not in line:
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key == "Tree":
            current = {}
            blocks.append(current)
            continue
        if current is None:
            header[key] = value
        else:
            current[key] = value

    objective_text = header.get("objective", "")
    if not objective_text.startswith("binary"):
        raise ModelParseError(f"unsupported objective {objective_text!r}", key="objective")

    if "max_feature_idx" not in header:
        raise ModelParseError("missing max_feature_idx", key="max_feature_idx")
    num_features = int(header["max_feature_idx"]) + 1

    trees = [_tree_from_block(i, block, num_features) for i, block in enumerate(blocks)]
    return Ensemble(trees=trees, objective=Objective.BINARY_SIGMOID, num_features=num_features)


def raw_margin(ensemble: Ensemble, x: FeatureVector | np.ndarray) -> float:
    """Sum of leaf values reached by x across all trees."""
    values = x.values if isinstance(x, FeatureVector) else np.asarray(x, dtype=np.float64)
    if values.shape != (ensemble.num_features,):
        raise ValueError(
            f"feature vector has length {values.shape}, model expects {ensemble.num_features}"
        )
    return float(sum(tree.evaluate(values) for tree in ensemble.trees))


def sigmoid(margin: float) -> float:
    if margin >= 0:
        score = 1.0 / (1.0 + math.exp(-margin))
    else:
        e = math.exp(margin)
        score = e / (1.0 + e)
    # Keep the score strictly inside (0, 1) even for extreme margins.
    tiny = math.ulp(0.0)
    return min(max(score, tiny), 1.0 - math.ulp(1.0) / 2)


def predict_score(ensemble: Ensemble, x: FeatureVector | np.ndarray) -> float:
    """Malware score in (0, 1): sigmoid of the raw margin."""
    return sigmoid(raw_margin(ensemble, x))

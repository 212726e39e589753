"""Shared fixtures: a small fitted ensemble, a full-size demo workspace, and
a random-ensemble generator used to cross-check the explainer."""

import numpy as np
import pytest

from emberlens import synth
from emberlens.gbdt import parse_model

# One line per release criterion, filled in by the acceptance tests and
# echoed after the run so the verdicts survive output capture.
acceptance_verdicts: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_verdicts:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_verdicts:
            terminalreporter.write_line(line)


def _random_tree_block(index, rng, pool, rows, max_depth):
    split_feature, threshold, decision_type = [], [], []
    left_child, right_child, internal_count = [], [], []
    leaf_value, leaf_count = [], []

    def build(subset, depth):
        if depth >= max_depth or len(subset) < 4 or rng.random() < 0.25:
            leaf_value.append(float(rng.normal()))
            leaf_count.append(len(subset))
            return -len(leaf_value)
        for _ in range(8):
            f = int(rng.choice(pool))
            col = rows[subset, f]
            t = float(rng.uniform(col.min(), col.max()))
            mask = col <= t
            if 0 < int(mask.sum()) < len(subset):
                break
        else:
            leaf_value.append(float(rng.normal()))
            leaf_count.append(len(subset))
            return -len(leaf_value)
        node = len(split_feature)
        split_feature.append(f)
        threshold.append(t)
        decision_type.append(2 if rng.random() < 0.5 else 0)
        internal_count.append(len(subset))
        left_child.append(0)
        right_child.append(0)
        left_child[node] = build(subset[mask], depth + 1)
        right_child[node] = build(subset[~mask], depth + 1)
        return node

    build(np.arange(len(rows)), 0)
    lines = [f"Tree={index}", f"num_leaves={len(leaf_value)}", "num_cat=0"]
    if split_feature:
        lines += [
            "split_feature=" + " ".join(str(v) for v in split_feature),
            "threshold=" + " ".join(repr(v) for v in threshold),
            "decision_type=" + " ".join(str(v) for v in decision_type),
            "left_child=" + " ".join(str(v) for v in left_child),
            "right_child=" + " ".join(str(v) for v in right_child),
        ]
    lines += [
        "leaf_value=" + " ".join(repr(v) for v in leaf_value),
        "leaf_count=" + " ".join(str(v) for v in leaf_count),
    ]
    if split_feature:
        lines.append("internal_count=" + " ".join(str(v) for v in internal_count))
    return "\n".join(lines)


def random_ensemble_text(rng, num_features=12, max_trees=8, max_depth=6, max_used=10):
    """Random small ensemble as model text, for explainer cross-checks.

    Covers come from routing a random population through each tree, so parent
    covers equal the sum of child covers exactly.  Each tree draws its splits
    from a pool of at most ``max_used`` features.
    """
    n_trees = int(rng.integers(1, max_trees + 1))
    blocks = []
    for index in range(n_trees):
        pool = rng.choice(num_features, size=min(max_used, num_features), replace=False)
        rows = rng.normal(size=(int(rng.integers(30, 120)), num_features))
        depth = int(rng.integers(1, max_depth + 1))
        blocks.append(_random_tree_block(index, rng, pool, rows, depth))
    header = "\n".join(
        [
            "tree",
            "version=v3",
            f"max_feature_idx={num_features - 1}",
            "objective=binary sigmoid:1",
        ]
    )
    return header + "\n\n" + "\n\n".join(blocks) + "\n\nend of trees\n"


@pytest.fixture(scope="session")
def small_records():
    return synth.generate_corpus(80, 80, seed=11)


@pytest.fixture(scope="session")
def small_ensemble(small_records):
    text = synth.train_model(small_records, num_trees=40, max_depth=3, min_leaf=10, seed=11)
    return parse_model(text)


@pytest.fixture(scope="session")
def demo_paths(tmp_path_factory):
    """Corpus and model sized for the default 1000/50/5 splits."""
    base = tmp_path_factory.mktemp("demo")
    records = synth.generate_corpus(550, 550, seed=7)
    synth.write_corpus(base / "corpus.jsonl", records)
    model_text = synth.train_model(records, num_trees=200, max_depth=3, seed=7)
    (base / "model.txt").write_text(model_text, encoding="utf-8")
    return base

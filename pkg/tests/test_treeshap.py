"""Shapley attribution: hand oracles, cross-route agreement, local accuracy."""

import numpy as np
import pytest
from conftest import random_ensemble_text

from emberlens.featurize import vectorize
from emberlens.gbdt import parse_model, raw_margin
from emberlens.treeshap import (
    BRUTE_FORCE_FEATURE_LIMIT,
    Attribution,
    base_value,
    brute_force_shapley,
    explain,
    explain_interventional,
)

HEADER = "max_feature_idx=1\nobjective=binary sigmoid:1\n\n"

# Stump on feature 0: left leaf 2.0 (cover 3), right leaf -1.0 (cover 7).
STUMP = HEADER + """\
Tree=0
num_leaves=2
num_cat=0
split_feature=0
threshold=0.5
decision_type=0
left_child=-1
right_child=-2
leaf_value=2.0 -1.0
leaf_count=3 7
internal_count=10

end of trees
"""

# Depth 2: feature 0 at the root, feature 1 below; leaves 10 / 2 / -4 with
# covers 2 / 3 / 5.
DEPTH_TWO = HEADER + """\
Tree=0
num_leaves=3
num_cat=0
split_feature=0 1
threshold=0.5 0.5
decision_type=0 0
left_child=1 -1
right_child=-3 -2
leaf_value=10.0 2.0 -4.0
leaf_count=2 3 5
internal_count=10 5

end of trees
"""

# Feature 0 twice along the same path: x0 <= 1 -> 5.0, 1 < x0 <= 2 -> 1.0,
# x0 > 2 -> -2.0, covers 4 / 2 / 6.
REPEATED_FEATURE = HEADER + """\
Tree=0
num_leaves=3
num_cat=0
split_feature=0 0
threshold=2.0 1.0
decision_type=0 0
left_child=1 -1
right_child=-3 -2
leaf_value=5.0 1.0 -2.0
leaf_count=4 2 6
internal_count=12 6

end of trees
"""


def test_stump_hand_oracle():
    ensemble = parse_model(STUMP)
    # E[f] = (3*2 + 7*(-1)) / 10 = -0.1.
    assert base_value(ensemble) == pytest.approx(-0.1)

    left = explain(ensemble, np.array([0.0, 0.0]))
    assert left.values[0] == pytest.approx(2.1)  # 2.0 - (-0.1)
    assert left.values[1] == 0.0
    assert left.total() == pytest.approx(2.0)

    right = explain(ensemble, np.array([1.0, 0.0]))
    assert right.values[0] == pytest.approx(-0.9)
    assert right.total() == pytest.approx(-1.0)


def test_depth_two_hand_oracle():
    ensemble = parse_model(DEPTH_TWO)
    assert base_value(ensemble) == pytest.approx(0.6)

    phi = explain(ensemble, np.array([0.0, 0.0]))
    assert phi.values[0] == pytest.approx(5.8)
    assert phi.values[1] == pytest.approx(3.6)
    assert phi.total() == pytest.approx(10.0)

    phi = explain(ensemble, np.array([1.0, 1.0]))
    assert phi.values[0] == pytest.approx(-3.8)
    assert phi.values[1] == pytest.approx(-0.8)
    assert phi.total() == pytest.approx(-4.0)


def test_repeated_feature_collapses_to_single_attribution():
    ensemble = parse_model(REPEATED_FEATURE)
    expectation = (4 * 5.0 + 2 * 1.0 + 6 * -2.0) / 12
    for x0, leaf in ((0.5, 5.0), (1.5, 1.0), (3.0, -2.0)):
        x = np.array([x0, 0.0])
        attribution = explain(ensemble, x)
        # Only one distinct feature, so its share is the full gap to the mean.
        assert attribution.values[0] == pytest.approx(leaf - expectation)
        assert attribution.values[1] == 0.0
        reference = brute_force_shapley(ensemble, x)
        np.testing.assert_allclose(attribution.values, reference.values, atol=1e-12)


def test_brute_force_matches_hand_oracles():
    for text, x in ((STUMP, [0.0, 0.0]), (DEPTH_TWO, [0.0, 0.0]), (DEPTH_TWO, [1.0, 1.0])):
        ensemble = parse_model(text)
        fast = explain(ensemble, np.array(x))
        slow = brute_force_shapley(ensemble, np.array(x))
        np.testing.assert_allclose(fast.values, slow.values, atol=1e-12)
        assert fast.base_value == pytest.approx(slow.base_value)


def test_interventional_stump_oracle():
    ensemble = parse_model(STUMP)
    x = np.array([0.0, 0.0])
    z = np.array([1.0, 0.0])

    attribution = explain_interventional(ensemble, x, z.reshape(1, -1))
    # One feature: its share is exactly f(x) - f(z).
    assert attribution.values[0] == pytest.approx(3.0)
    assert attribution.base_value == pytest.approx(-1.0)
    assert attribution.total() == pytest.approx(2.0)

    same = explain_interventional(ensemble, x, x.reshape(1, -1))
    assert same.values[0] == 0.0
    assert same.base_value == pytest.approx(2.0)


def test_interventional_multi_row_background():
    ensemble = parse_model(DEPTH_TWO)
    x = np.array([0.0, 0.0])
    background = np.array([[1.0, 1.0], [0.0, 1.0], [3.0, -1.0]])
    attribution = explain_interventional(ensemble, x, background)
    margins = [raw_margin(ensemble, row) for row in background]
    assert attribution.base_value == pytest.approx(sum(margins) / 3)
    assert attribution.total() == pytest.approx(raw_margin(ensemble, x))


def test_randomized_routes_agree():
    rng = np.random.default_rng(2024)
    for _ in range(25):
        ensemble = parse_model(random_ensemble_text(rng))
        background = rng.normal(size=(5, ensemble.num_features))
        for _ in range(3):
            x = rng.normal(size=ensemble.num_features)
            fast = explain(ensemble, x)
            slow = brute_force_shapley(ensemble, x)
            np.testing.assert_allclose(fast.values, slow.values, atol=1e-10)
            assert abs(fast.total() - raw_margin(ensemble, x)) < 1e-10
            interventional = explain_interventional(ensemble, x, background)
            assert abs(interventional.total() - raw_margin(ensemble, x)) < 1e-10


def test_brute_force_guard_names_limit():
    assert BRUTE_FORCE_FEATURE_LIMIT == 15
    n = 16
    internal = {
        "split_feature": " ".join(str(i) for i in range(n)),
        "threshold": " ".join("0.5" for _ in range(n)),
        "decision_type": " ".join("0" for _ in range(n)),
        "left_child": " ".join(str(i + 1) if i < n - 1 else str(-(n + 1)) for i in range(n)),
        "right_child": " ".join(str(-(i + 1)) for i in range(n)),
        "internal_count": " ".join(str(n + 1 - i) for i in range(n)),
    }
    text = (
        f"max_feature_idx={n - 1}\nobjective=binary sigmoid:1\n\n"
        f"Tree=0\nnum_leaves={n + 1}\nnum_cat=0\n"
        + "\n".join(f"{k}={v}" for k, v in internal.items())
        + "\nleaf_value=" + " ".join("1.0" for _ in range(n + 1))
        + "\nleaf_count=" + " ".join("1" for _ in range(n + 1))
        + "\n\nend of trees\n"
    )
    ensemble = parse_model(text)
    ensemble.trees[0].validate_covers()
    with pytest.raises(ValueError, match=str(BRUTE_FORCE_FEATURE_LIMIT)):
        brute_force_shapley(ensemble, np.zeros(n))


def test_explain_rejects_bad_covers():
    ensemble = parse_model(STUMP)
    ensemble.trees[0].leaf_count = np.array([3.0, 99.0])
    with pytest.raises(ValueError, match="cover"):
        explain(ensemble, np.zeros(2))


def test_shape_validation():
    ensemble = parse_model(STUMP)
    with pytest.raises(ValueError):
        explain(ensemble, np.zeros(5))
    with pytest.raises(ValueError):
        explain_interventional(ensemble, np.zeros(2), np.zeros((0, 2)))
    with pytest.raises(ValueError):
        explain_interventional(ensemble, np.zeros(2), np.zeros((3, 4)))


def test_attribution_total():
    attribution = Attribution(values=np.array([1.0, -0.25]), base_value=0.5)
    assert attribution.total() == pytest.approx(1.25)


def test_local_accuracy_on_fitted_model(small_ensemble, small_records):
    for record in small_records[:4]:
        fv = vectorize(record)
        attribution = explain(small_ensemble, fv)
        assert abs(attribution.total() - raw_margin(small_ensemble, fv)) < 1e-9

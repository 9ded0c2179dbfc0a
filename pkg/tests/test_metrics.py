import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gmint.metrics import auc, roc_curve

from oracles import pair_counting_auc, random_instance


def test_worked_example():
    # members [0.9, 0.4], non-members [0.4, 0.1]: 3 wins + one tie over 4 pairs
    assert auc([0.9, 0.4, 0.4, 0.1], [1, 1, 0, 0]) == pytest.approx(0.875, abs=1e-15)


def test_perfect_and_constant():
    assert auc([0.8, 0.9, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.3] * 6, [1, 0, 1, 0, 1, 0]) == 0.5
    assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0


def test_two_point_curve():
    roc = roc_curve([1.0, 0.0], [1, 0])
    assert roc.points == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
    assert roc.thresholds[0] == np.inf


def test_single_class_rejected():
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        roc_curve([0.1, 0.2], [0, 0])


def test_bad_inputs():
    with pytest.raises(ValueError):
        auc([0.1, np.nan], [0, 1])
    with pytest.raises(ValueError):
        auc([0.1, 0.2, 0.3], [0, 1])
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [0, 2])


def test_matches_pair_counting_oracle():
    rng = np.random.default_rng(20240611)
    worst = 0.0
    for _ in range(1000):
        scores, labels = random_instance(rng)
        a = auc(scores, labels)
        worst = max(worst, abs(a - pair_counting_auc(scores, labels)))
        assert abs(roc_curve(scores, labels).area() - a) < 1e-12
    assert worst < 1e-12


def test_curve_shape_on_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(200):
        scores, labels = random_instance(rng)
        roc = roc_curve(scores, labels)
        assert roc.points[0] == (0.0, 0.0) and roc.points[-1] == (1.0, 1.0)
        assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)
        assert len(roc.thresholds) == len(np.unique(scores)) + 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-1000, 1000), st.booleans()), min_size=2, max_size=60))
def test_invariant_under_increasing_transform(pairs):
    # integer scores keep the transforms exactly order-preserving in float64
    scores = np.array([p[0] for p in pairs], dtype=float)
    labels = np.array([int(p[1]) for p in pairs])
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    base = auc(scores, labels)
    assert auc(scores**3 + 5 * scores - 2, labels) == pytest.approx(base, abs=1e-12)
    assert auc(np.exp(scores / 100.0), labels) == pytest.approx(base, abs=1e-12)


def test_csv_output(tmp_path):
    roc = roc_curve([0.9, 0.4, 0.4, 0.1], [1, 1, 0, 0])
    text = roc.to_csv(tmp_path / "roc.csv").read_text().splitlines()
    assert text[0] == "threshold,fpr,tpr"
    assert text[1] == "inf,0.0,0.0"
    assert len(text) == 1 + len(roc.fpr)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deptext.objective import (
    LossConfig,
    bce,
    bce_grad,
    classification_metrics,
    huber,
    huber_grad,
    metric_record,
    multitask_loss,
    multitask_loss_grad,
    predict_labels,
    regression_metrics,
)

finite = st.floats(-50, 50, allow_nan=False)


def test_bce_examples():
    assert bce(0.0, 1) == pytest.approx(math.log(2), abs=1e-12)
    assert bce(30.0, 1) < 1e-12
    assert bce(2.0, 1) == pytest.approx(math.log1p(math.exp(-2)), abs=1e-12)
    assert bce(2.0, 1) == pytest.approx(0.1269, abs=1e-4)
    for x in (-100.0, 100.0):
        for y in (0, 1):
            assert math.isfinite(bce(x, y))
    assert bce(-100.0, 1) == pytest.approx(100.0)


def test_huber_examples():
    assert huber(3.0, 3.0) == 0.0
    assert huber(0.5, 0.0) == 0.125
    assert huber(4.0, 0.0) == 3.5
    assert huber(0.0, 4.0) == 3.5


def test_multitask_examples():
    assert multitask_loss([3.0], [0.0], [5.0], [1]) == pytest.approx(0.9 * math.log(2) + 0.1 * 1.5, abs=1e-12)
    assert multitask_loss([3.0], [0.0], [5.0], [1]) == pytest.approx(0.7738, abs=1e-4)
    assert multitask_loss([3.0], [0.0], [5.0], [1], LossConfig(w=0)) == bce(0.0, 1)
    assert multitask_loss([3.0], [0.0], [5.0], [1], LossConfig(w=1)) == huber(3.0, 5.0)


def test_loss_config_validates():
    with pytest.raises(ValueError):
        LossConfig(w=1.5)


@given(finite, st.sampled_from([0, 1]))
def test_bce_symmetry(x, y):
    assert bce(x, 1) == pytest.approx(bce(-x, 0), rel=1e-12, abs=1e-15)
    assert bce(x, y) >= 0


def test_huber_smooth_at_boundary():
    assert huber(1.0, 0.0) == 0.5
    assert huber(np.nextafter(1.0, 0), 0.0) == pytest.approx(0.5, abs=1e-15)
    assert huber_grad(1.0, 0.0) == 1.0
    assert huber_grad(np.nextafter(1.0, 0), 0.0) == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=100)
@given(st.lists(st.tuples(finite, finite, st.floats(0, 24), st.sampled_from([0, 1])), min_size=1, max_size=8),
       st.floats(0, 1))
def test_multitask_is_linear_in_w(items, w):
    x_c, x_r, y_r, y_c = map(np.array, zip(*items))
    l_b = np.mean(bce(x_c, y_c))
    l_h = np.mean(huber(x_r, y_r))
    got = multitask_loss(x_r, x_c, y_r, y_c, LossConfig(w=w))
    assert got == pytest.approx((1 - w) * l_b + w * l_h, rel=1e-12, abs=1e-12)


@settings(max_examples=100)
@given(st.floats(-20, 20), st.floats(-20, 20), st.sampled_from([0, 1]))
def test_scalar_gradients_match_finite_differences(x, r, y):
    h = 1e-6
    num = (bce(x + h, y) - bce(x - h, y)) / (2 * h)
    assert bce_grad(x, y) == pytest.approx(num, rel=1e-5, abs=1e-7)
    if abs(abs(r - 5.0) - 1.0) > 1e-3:
        num = (huber(r + h, 5.0) - huber(r - h, 5.0)) / (2 * h)
        assert huber_grad(r, 5.0) == pytest.approx(num, rel=1e-5, abs=1e-7)


def test_multitask_grad_matches_finite_differences(rng):
    x_c, x_r = rng.normal(size=6), rng.normal(size=6) * 5
    y_c, y_r = rng.integers(0, 2, 6), rng.integers(0, 25, 6).astype(float)
    g_r, g_c = multitask_loss_grad(x_r, x_c, y_r, y_c)
    h = 1e-6
    for i in range(6):
        e = np.zeros(6)
        e[i] = h
        num_c = (multitask_loss(x_r, x_c + e, y_r, y_c) - multitask_loss(x_r, x_c - e, y_r, y_c)) / (2 * h)
        num_r = (multitask_loss(x_r + e, x_c, y_r, y_c) - multitask_loss(x_r - e, x_c, y_r, y_c)) / (2 * h)
        assert g_c[i] == pytest.approx(num_c, rel=1e-5, abs=1e-9)
        assert g_r[i] == pytest.approx(num_r, rel=1e-5, abs=1e-9)


def test_classification_examples():
    m = classification_metrics([1, 0, 1], [1, 0, 1])
    assert m == {"precision": 1.0, "recall": 1.0, "f1": 1.0, "accuracy": 1.0}
    m = classification_metrics([1, 1, 0, 0], [1, 0, 0, 0])
    assert m["accuracy"] == 0.75
    assert m["f1"] == pytest.approx((2 / 3 + 4 / 5) / 2, abs=1e-12)


def test_degenerate_class_scores_zero():
    m = classification_metrics([0, 0], [0, 0])
    assert m["f1"] == 0.5 and m["accuracy"] == 1.0


def test_regression_examples():
    assert regression_metrics([3, 4], [3, 4]) == {"mae": 0.0, "rmse": 0.0}
    m = regression_metrics([5, 10], [7, 10])
    assert m["mae"] == 1.0
    assert m["rmse"] == pytest.approx(math.sqrt(2))


def test_length_mismatch():
    with pytest.raises(ValueError):
        classification_metrics([1, 0], [1])
    with pytest.raises(ValueError):
        regression_metrics([], [])


def test_threshold_and_constant_predictor():
    assert list(predict_labels([-1e-9, 0.0, 2.0])) == [0, 1, 1]
    y_c = [1] * 12 + [0] * 23
    rec = metric_record("dev", [-50.0] * 35, [0.0] * 35, y_c, [0] * 35)
    assert rec.accuracy == pytest.approx(23 / 35)


@settings(max_examples=100)
@given(st.lists(st.tuples(st.sampled_from([0, 1]), st.sampled_from([0, 1])), min_size=1, max_size=30), st.randoms())
def test_metrics_permutation_invariant_and_bounded(pairs, rnd):
    p, t = zip(*pairs)
    base = classification_metrics(p, t)
    perm = list(range(len(pairs)))
    rnd.shuffle(perm)
    shuffled = classification_metrics([p[i] for i in perm], [t[i] for i in perm])
    for k in base:
        assert shuffled[k] == pytest.approx(base[k], abs=1e-12)
        assert 0 <= base[k] <= 1


@given(st.lists(st.tuples(st.floats(-30, 30), st.floats(0, 24)), min_size=1, max_size=30))
def test_rmse_at_least_mae(pairs):
    x, y = zip(*pairs)
    m = regression_metrics(x, y)
    assert m["rmse"] >= m["mae"] - 1e-12

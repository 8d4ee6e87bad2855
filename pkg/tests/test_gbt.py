"""Tests for the boosted-tree regressor.  The two-point oracle below is
worked by hand: base = 0.5, gradients (0.5, -0.5), Hessians 1, so with
l2_leaf = 1 the leaf weights are -G/(H+1) = (-0.25, 0.25) and the
unit-rate update lands on (0.25, 0.75)."""

import numpy as np
import pytest

from spectramap.gbt import GbtSpec, gbt_fit, gbt_predict


def test_spec_validation():
    with pytest.raises(ValueError):
        GbtSpec(n_trees=0)
    with pytest.raises(ValueError):
        GbtSpec(max_depth=-1)
    with pytest.raises(ValueError):
        GbtSpec(learning_rate=0.0)
    with pytest.raises(ValueError):
        GbtSpec(learning_rate=1.5)
    with pytest.raises(ValueError):
        GbtSpec(min_samples_leaf=0)
    with pytest.raises(ValueError):
        GbtSpec(l2_leaf=-0.1)


def test_input_validation():
    with pytest.raises(ValueError):
        gbt_fit(np.zeros((3, 1)), np.zeros(4))
    with pytest.raises(ValueError):
        gbt_fit(np.array([[np.nan]]), np.array([1.0]))


def test_two_point_hand_oracle():
    X = np.array([[0.0], [1.0]])
    y = np.array([0.0, 1.0])
    model = gbt_fit(X, y, GbtSpec(n_trees=1, max_depth=1,
                                  learning_rate=1.0, l2_leaf=1.0))
    assert model.base_score == 0.5
    assert np.array_equal(gbt_predict(model, X), [0.25, 0.75])
    assert model.train_mse == [0.0625]


def test_depth_zero_predicts_mean_exactly():
    # binary-exact values make the gradient sum cancel exactly
    X = np.arange(4.0)[:, None]
    y = np.array([1.0, 2.0, 3.0, 4.0])
    model = gbt_fit(X, y, GbtSpec(n_trees=5, max_depth=0))
    # every stump sees zero total gradient, so nothing moves off the mean
    assert np.array_equal(gbt_predict(model, X), np.full(4, 2.5))


def test_depth_zero_stays_at_mean_on_random_data():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(25, 3))
    y = rng.normal(size=25)
    model = gbt_fit(X, y, GbtSpec(n_trees=5, max_depth=0))
    assert np.allclose(gbt_predict(model, X), y.mean(), rtol=0, atol=1e-12)


def test_perfect_split_reaches_zero_mse():
    X = np.array([[0.0], [0.0], [1.0], [1.0]])
    y = np.array([2.0, 2.0, 8.0, 8.0])
    model = gbt_fit(X, y, GbtSpec(n_trees=1, max_depth=1,
                                  learning_rate=1.0, l2_leaf=0.0))
    assert np.array_equal(gbt_predict(model, X), y)
    assert model.train_mse == [0.0]


def test_train_mse_non_increasing():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 4))
    y = X[:, 0] ** 2 + np.sin(X[:, 1]) + 0.1 * rng.normal(size=60)
    model = gbt_fit(X, y, GbtSpec(n_trees=50, max_depth=3, learning_rate=0.2))
    mse = np.asarray(model.train_mse)
    assert np.all(np.diff(mse) <= 1e-12)
    assert mse[-1] < mse[0]


def test_constant_target_gives_pure_leaves():
    X = np.arange(10.0)[:, None]
    y = np.full(10, 7.0)
    model = gbt_fit(X, y, GbtSpec(n_trees=3, max_depth=2))
    # no split can improve a constant target, so each tree is one leaf
    assert all("leaf" in t and t["leaf"] == 0.0 for t in model.trees)
    assert np.array_equal(gbt_predict(model, X), y)


def test_tie_breaks_toward_first_feature():
    X = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [1.0, 1.0]])
    y = np.array([1.0, 1.0, 5.0, 5.0])
    model = gbt_fit(X, y, GbtSpec(n_trees=1, max_depth=1))
    # both columns give the same gain; strict improvement keeps column 0
    assert model.trees[0]["feature"] == 0


def test_min_samples_leaf_constrains_threshold():
    X = np.arange(6.0)[:, None]
    y = np.array([0.0, 10.0, 10.0, 10.0, 10.0, 10.0])
    free = gbt_fit(X, y, GbtSpec(n_trees=1, max_depth=1, min_samples_leaf=1))
    assert free.trees[0]["threshold"] == 0.5
    held = gbt_fit(X, y, GbtSpec(n_trees=1, max_depth=1, min_samples_leaf=3))
    # only the 3/3 partition is allowed, i.e. the split between rows 2 and 3
    assert held.trees[0]["threshold"] == 2.5


def test_deeper_trees_fit_interactions():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(200, 2))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    model = gbt_fit(X, y, GbtSpec(n_trees=40, max_depth=2, learning_rate=0.3))
    pred = gbt_predict(model, X)
    assert np.mean(np.sign(pred) == y) > 0.95


def test_predict_single_row():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(20, 2))
    y = X[:, 0]
    model = gbt_fit(X, y, GbtSpec(n_trees=5, max_depth=2))
    assert gbt_predict(model, X[4]) == pytest.approx(gbt_predict(model, X)[4])


def test_training_is_deterministic():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 3))
    y = rng.normal(size=50)
    spec = GbtSpec(n_trees=10, max_depth=3)
    a = gbt_predict(gbt_fit(X, y, spec), X)
    b = gbt_predict(gbt_fit(X, y, spec), X)
    assert np.array_equal(a, b)

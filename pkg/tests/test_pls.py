"""Tests for the partial least squares code.

The structural facts being pinned down: the first weight vector is the
normalized covariance direction X_c' y_c, scores of different components
are orthogonal, a full set of components reproduces ordinary least
squares, and a rank-deficient X supports exactly rank(X) components
before the deflated block runs out of variance.
"""

import numpy as np
import pytest

from spectramap.errors import NumericError
from spectramap.pls import pls_choose_components, pls_fit, pls_predict


def _rank3_problem(seed=0, n=40, p=6):
    rng = np.random.default_rng(seed)
    T = rng.normal(size=(n, 3))
    P = rng.normal(size=(3, p))
    X = T @ P
    y = T @ np.array([2.0, -1.0, 0.5]) + 4.0
    return X, y


def test_input_validation():
    X = np.zeros((10, 3))
    with pytest.raises(ValueError):
        pls_fit(X, np.zeros(9), 1)
    with pytest.raises(ValueError):
        pls_fit(X, np.zeros(10), 0)
    with pytest.raises(ValueError):
        pls_fit(X, np.zeros(10), 4)


def test_zero_variance_x_raises():
    X = np.ones((8, 3))
    y = np.arange(8.0)
    with pytest.raises(NumericError):
        pls_fit(X, y, 1)


def test_first_weight_is_covariance_direction():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(30, 6))
    y = rng.normal(size=30)
    model = pls_fit(X, y, 1)
    w = (X - X.mean(axis=0)).T @ (y - y.mean())
    w = w / np.linalg.norm(w)
    assert np.allclose(model.weights[:, 0], w, atol=1e-12)


def test_scores_are_orthogonal():
    X, y = _rank3_problem(seed=1)
    model = pls_fit(X, y, 3)
    G = model.x_scores.T @ model.x_scores
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) <= 1e-8 * np.max(np.diag(G))


def test_rank_recovers_target_exactly():
    X, y = _rank3_problem()
    model = pls_fit(X, y, 3)
    pred = pls_predict(model, X)
    assert np.max(np.abs(pred - y)) < 1e-8


def test_component_past_rank_raises():
    X, y = _rank3_problem()
    with pytest.raises(NumericError):
        pls_fit(X, y, 4)


def test_chooser_finds_planted_rank():
    X, y = _rank3_problem()
    best, cv_mse = pls_choose_components(X, y, 5, folds=5, seed=0)
    assert best == 3
    # ranks past 3 fail inside every fold and score inf
    assert np.all(np.isinf(cv_mse[3:]))


def test_chooser_on_noise_prefers_one_component():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(60, 8))
    y = rng.normal(size=60)
    best, cv_mse = pls_choose_components(X, y, 5, folds=5, seed=0)
    assert best == 1
    assert np.all(np.isfinite(cv_mse))


def test_chooser_raises_when_everything_fails():
    X = np.ones((12, 3))
    y = np.arange(12.0)
    with pytest.raises(NumericError):
        pls_choose_components(X, y, 2, folds=3, seed=0)


def test_full_rank_equals_least_squares():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(50, 5))
    y = rng.normal(size=50)
    model = pls_fit(X, y, 5)
    Xc = X - X.mean(axis=0)
    beta, *_ = np.linalg.lstsq(Xc, y - y.mean(), rcond=None)
    assert np.allclose(model.coefficients[:, 0], beta, atol=1e-10)
    assert np.allclose(pls_predict(model, X),
                       Xc @ beta + y.mean(), atol=1e-10)


def test_mean_input_predicts_mean_target():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(25, 4))
    y = rng.normal(size=25)
    model = pls_fit(X, y, 2)
    assert pls_predict(model, X.mean(axis=0)) == pytest.approx(y.mean())


def test_multitarget_block():
    rng = np.random.default_rng(3)
    T = rng.normal(size=(40, 2))
    X = T @ rng.normal(size=(2, 5))
    Y = T @ rng.normal(size=(2, 3))
    model = pls_fit(X, Y, 2)
    pred = pls_predict(model, X)
    assert pred.shape == Y.shape
    assert np.max(np.abs(pred - Y)) < 1e-8
    G = model.x_scores.T @ model.x_scores
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) <= 1e-8 * np.max(np.diag(G))


def test_duplicate_target_columns_agree():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 4))
    y = rng.normal(size=30)
    model = pls_fit(X, np.column_stack([y, y]), 2)
    pred = pls_predict(model, X)
    assert np.allclose(pred[:, 0], pred[:, 1], atol=1e-10)


def test_single_row_prediction():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(20, 3))
    y = rng.normal(size=20)
    model = pls_fit(X, y, 2)
    assert pls_predict(model, X[7]) == pytest.approx(pls_predict(model, X)[7])

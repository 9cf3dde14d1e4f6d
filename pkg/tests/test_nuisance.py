import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentgap.core import ObservedSample
from latentgap.dgp import DgpConfig, generate
from latentgap.nuisance import (
    crossfit_predictions,
    fit_nuisances,
    kfold_split,
    poly_features,
    ridge_fit,
)


def test_poly_features_single_row():
    np.testing.assert_array_equal(poly_features([1.0, 2.0, 0.0]), [1, 2, 0, 1, 4, 0, 2, 0, 0])


@pytest.mark.parametrize("d, width", [(1, 2), (2, 5), (3, 9), (5, 20)])
def test_poly_features_width(d, width):
    assert poly_features(np.ones((4, d))).shape == (4, width)


def test_poly_features_rejects_other_degrees():
    with pytest.raises(ValueError, match="degree"):
        poly_features(np.ones((2, 2)), degree=3)


def test_ridge_large_lambda_predicts_the_mean():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(200, 4))
    t = rng.normal(size=200) + 3.0
    model = ridge_fit(f, t, lam=1e12)
    np.testing.assert_allclose(model.predict(f), np.mean(t), atol=1e-6)


def test_ridge_zero_lambda_interpolates_square_system():
    rng = np.random.default_rng(1)
    f = rng.normal(size=(6, 5))
    t = rng.normal(size=6)
    np.testing.assert_allclose(ridge_fit(f, t, lam=0.0).predict(f), t, atol=1e-9)


def test_ridge_recovers_quadratic_coefficients():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(10_000, 2))
    y = 1.0 + 2.0 * x[:, 0] - x[:, 1] + 0.5 * x[:, 0] ** 2 + 0.3 * x[:, 0] * x[:, 1]
    model = ridge_fit(poly_features(x), y, lam=1e-6)
    np.testing.assert_allclose(model.raw_coefficients, [2.0, -1.0, 0.5, 0.0, 0.3], atol=1e-2)
    assert model.raw_intercept == pytest.approx(1.0, abs=1e-2)


def test_ridge_singular_at_zero_lambda():
    x = np.column_stack([np.arange(10.0), np.ones(10)])
    with pytest.raises(np.linalg.LinAlgError, match="lambda > 0"):
        ridge_fit(x, np.arange(10.0), lam=0.0)
    # any positive penalty makes the same system solvable
    ridge_fit(x, np.arange(10.0), lam=1e-8)


@pytest.mark.parametrize("bad", [dict(lam=-1.0), dict(lam=float("nan"))])
def test_ridge_rejects_bad_lambda(bad):
    with pytest.raises(ValueError):
        ridge_fit(np.ones((3, 1)), np.ones(3), **bad)


def test_fit_nuisances_on_constants():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(50, 2))
    s = ObservedSample(y=np.full(50, 4.0), x=x, p=np.full(50, 0.25))
    m, r = fit_nuisances(s).evaluate(x)
    np.testing.assert_allclose(m, 4.0, atol=1e-12)
    np.testing.assert_allclose(r, 0.25, atol=1e-12)


def test_fit_nuisances_r_accuracy_on_baseline():
    sample = generate(DgpConfig(n=5000), np.random.default_rng(4))
    _, r_hat = fit_nuisances(sample.observed).evaluate(sample.observed.x)
    assert np.mean((r_hat - sample.true_r) ** 2) < 5e-3


def test_fit_nuisances_clamps_r():
    x = np.linspace(-1, 1, 40).reshape(-1, 1)
    p = (x[:, 0] > 0).astype(float)
    s = ObservedSample(y=np.zeros(40), x=x, p=p)
    _, r_hat = fit_nuisances(s, lam=1e-8).evaluate(np.array([[-5.0], [5.0]]))
    assert np.all((r_hat >= 0) & (r_hat <= 1))


def test_fit_nuisances_needs_enough_rows():
    s = ObservedSample(y=np.zeros(5), x=np.zeros((5, 3)), p=np.full(5, 0.5))
    with pytest.raises(ValueError, match="rows"):
        fit_nuisances(s)


@pytest.mark.parametrize("n, k", [(10, 5), (11, 5), (1000, 5), (7, 3)])
def test_kfold_partition(n, k):
    folds = kfold_split(n, k, seed=0)
    sizes = folds.sizes()
    assert sizes.sum() == n
    assert sizes.max() - sizes.min() <= 1
    tests = np.concatenate([folds.indices(j)[1] for j in range(k)])
    np.testing.assert_array_equal(np.sort(tests), np.arange(n))


def test_kfold_leave_one_out():
    np.testing.assert_array_equal(kfold_split(6, 6, seed=1).sizes(), np.ones(6))


def test_kfold_deterministic_in_seed():
    a = kfold_split(100, 5, seed=9).fold_of
    b = kfold_split(100, 5, seed=9).fold_of
    c = kfold_split(100, 5, seed=10).fold_of
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("n, k", [(4, 5), (10, 1)])
def test_kfold_rejects_bad_k(n, k):
    with pytest.raises(ValueError):
        kfold_split(n, k, seed=0)


def test_crossfit_prediction_does_not_see_its_own_row():
    sample = generate(DgpConfig(n=200), np.random.default_rng(5)).observed
    folds = kfold_split(sample.n, 5, seed=0)
    m1, _ = crossfit_predictions(sample, folds)
    y = sample.y.copy()
    y[17] += 1000.0
    m2, _ = crossfit_predictions(ObservedSample(y=y, x=sample.x, p=sample.p), folds)
    assert m1[17] == m2[17]
    same_fold = folds.fold_of == folds.fold_of[17]
    np.testing.assert_array_equal(m1[same_fold], m2[same_fold])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.1, 0.3, 0.5]))
def test_crossfit_residual_variance_is_positive(seed, sigma_u):
    sample = generate(DgpConfig(n=200, sigma_u=sigma_u), np.random.default_rng(seed)).observed
    _, r_hat = crossfit_predictions(sample, kfold_split(sample.n, 5, seed))
    assert np.all((r_hat >= 0) & (r_hat <= 1))
    assert np.mean((sample.p - r_hat) ** 2) > 0

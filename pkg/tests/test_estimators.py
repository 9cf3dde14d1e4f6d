import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from latentgap.core import NonIdentifiedError, NuisancePair, ObservedSample, derive
from latentgap.dgp import DgpConfig, generate, true_nuisances
from latentgap.estimators import (
    Method,
    ScoreKind,
    gateaux_derivative,
    hard_threshold_gap,
    oracle_tau,
    orthogonal_tau,
    plugin_tau,
    sandwich_se,
    score_values,
)
from latentgap.theory import gateaux_closed_form


def _baseline(n=1000, seed=0, **kw):
    cfg = DgpConfig(n=n, **kw)
    return cfg, generate(cfg, np.random.default_rng(seed))


def test_oracle_on_population_data_set(population_sample, canonical, exact):
    est = oracle_tau(population_sample, canonical.nuisances())
    assert est.tau_hat == pytest.approx(2.0, abs=1e-12)
    assert est.v_star_hat == pytest.approx(float(exact["v_star"]), abs=1e-15)
    expected_se = math.sqrt(float(exact["e_psi_sq"])) / (2 * float(exact["v_star"]))
    assert est.se == pytest.approx(expected_se, rel=1e-10)
    assert sandwich_se(population_sample, canonical.nuisances(), est.tau_hat) == pytest.approx(expected_se, rel=1e-10)


def test_wald_interval_layout():
    cfg, s = _baseline()
    est = oracle_tau(s.observed, true_nuisances(cfg), alpha=0.1)
    half = norm.ppf(0.95) * est.se / math.sqrt(est.n)
    assert est.ci_low == pytest.approx(est.tau_hat - half)
    assert est.ci_high == pytest.approx(est.tau_hat + half)
    assert est.method is Method.ORACLE
    assert est.covers(est.tau_hat)


def test_zero_outcome_residual_gives_zero():
    cfg, s = _baseline()
    nuis = true_nuisances(cfg)
    m, _ = nuis.evaluate(s.observed.x)
    obs = ObservedSample(y=m, x=s.observed.x, p=s.observed.p)
    assert oracle_tau(obs, nuis).tau_hat == 0.0


def test_plugin_with_true_nuisances_equals_oracle():
    cfg, s = _baseline()
    nuis = true_nuisances(cfg)
    assert plugin_tau(s.observed, nuis=nuis).tau_hat == oracle_tau(s.observed, nuis).tau_hat


def test_interpolating_outcome_model_gives_zero():
    rng = np.random.default_rng(0)
    n = 300
    y = rng.normal(size=n)
    x = np.arange(n, dtype=float).reshape(-1, 1)
    obs = ObservedSample(y=y, x=x, p=rng.random(n))
    nuis = NuisancePair(m=lambda xx: y[xx[:, 0].astype(int)], r=lambda xx: np.full(len(xx), 0.5))
    assert plugin_tau(obs, nuis=nuis).tau_hat == 0.0


def test_orthogonal_with_given_nuisances_is_least_squares_ratio():
    cfg, s = _baseline()
    nuis = true_nuisances(cfg)
    dq = derive(s.observed, nuis)
    expected = np.sum(dq.a * dq.r_resid) / np.sum(dq.a * dq.a)
    assert orthogonal_tau(s.observed, nuis=nuis).tau_hat == pytest.approx(expected, rel=1e-12)


def test_orthogonal_crossfit_is_seed_deterministic():
    _, s = _baseline(n=500)
    a = orthogonal_tau(s.observed, seed=3)
    b = orthogonal_tau(s.observed, seed=3)
    assert a == b


def test_psi_tilde_vanishes_when_score_equals_r():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 1))
    r = lambda xx: 1 / (1 + np.exp(-xx[:, 0]))
    obs = ObservedSample(y=rng.normal(size=50), x=x, p=r(x))
    vals = score_values(obs, NuisancePair(m=lambda xx: xx[:, 0], r=r), tau=1.7, kind=ScoreKind.PSI_TILDE)
    np.testing.assert_array_equal(vals, 0.0)


def test_scores_have_zero_population_mean(population_sample, canonical):
    for kind in ScoreKind:
        vals = score_values(population_sample, canonical.nuisances(), 2.0, kind)
        assert abs(np.mean(vals)) < 1e-12


@pytest.mark.parametrize("fn", [oracle_tau, lambda s, n: plugin_tau(s), lambda s, n: orthogonal_tau(s)])
def test_constant_score_is_non_identified(fn):
    rng = np.random.default_rng(2)
    obs = ObservedSample(y=rng.normal(size=100), x=rng.normal(size=(100, 3)), p=np.full(100, 0.4))
    with pytest.raises(NonIdentifiedError) as info:
        fn(obs, NuisancePair.constant(0.0, 0.4))
    assert info.value.v_star <= 1e-12


def test_hard_threshold_with_perfect_classification():
    rng = np.random.default_rng(3)
    n, tau = 20_000, 1.5
    g = (rng.random(n) < 0.5).astype(float)
    x = rng.normal(size=(n, 1))
    y = x[:, 0] + tau * g + rng.normal(size=n)
    obs = ObservedSample(y=y, x=x, p=g)
    est = hard_threshold_gap(obs, NuisancePair(m=lambda xx: xx[:, 0] + tau / 2, r=lambda xx: np.full(len(xx), 0.5)))
    assert abs(est.tau_hat - tau) < 3 * est.se / math.sqrt(n)


def test_hard_threshold_empty_cell_and_ties():
    obs = ObservedSample(y=[1.0, 2.0, 3.0], x=np.zeros((3, 1)), p=[0.1, 0.5, 0.5])
    with pytest.raises(ValueError, match="p > 1/2"):
        hard_threshold_gap(obs, NuisancePair.constant(0.0, 0.3))
    obs = ObservedSample(y=[1.0, 2.0], x=np.zeros((2, 1)), p=[0.9, 0.6])
    with pytest.raises(ValueError, match="p <= 1/2"):
        hard_threshold_gap(obs, NuisancePair.constant(0.0, 0.7))


def test_gateaux_psi_outcome_direction(canonical):
    d = gateaux_derivative(canonical, ScoreKind.PSI, "m", lambda x: x[:, 0])
    assert d == pytest.approx(-0.2, abs=1e-9)


@pytest.mark.parametrize("kind", ["psi", "psi_tilde"])
@pytest.mark.parametrize("direction", ["m", "r"])
@pytest.mark.parametrize("fn", [lambda x: x[:, 0], lambda x: 1 + 0 * x[:, 0], lambda x: 3 * x[:, 0] ** 2 - 1])
def test_gateaux_matches_closed_form(canonical, kind, direction, fn):
    numeric = gateaux_derivative(canonical, kind, direction, fn)
    assert numeric == pytest.approx(gateaux_closed_form(canonical, kind, direction, fn), abs=1e-9)


def test_gateaux_rejects_bad_step(canonical):
    with pytest.raises(ValueError):
        gateaux_derivative(canonical, "psi", "m", lambda x: x[:, 0], h=0.5)


def test_oracle_and_orthogonal_agree_at_root_n_rate():
    gaps = {}
    for n in (500, 50_000):
        diffs = []
        for seed in range(20):
            cfg, s = _baseline(n=n, seed=seed)
            nuis = true_nuisances(cfg)
            diffs.append(oracle_tau(s.observed, nuis).tau_hat - orthogonal_tau(s.observed, nuis=nuis).tau_hat)
        gaps[n] = np.mean(np.abs(diffs))
    # 100x the sample size should shrink the gap by about 10x
    assert 4 < gaps[500] / gaps[50_000] < 25


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-5, 5))
def test_oracle_affine_equivariance(seed, scale, shift):
    cfg, s = _baseline(n=200, seed=seed)
    nuis = true_nuisances(cfg)
    base = oracle_tau(s.observed, nuis).tau_hat
    obs = ObservedSample(y=scale * s.observed.y + shift, x=s.observed.x, p=s.observed.p)
    moved = NuisancePair(m=lambda x: scale * nuis.m(x) + shift, r=nuis.r)
    assert oracle_tau(obs, moved).tau_hat == pytest.approx(scale * base, rel=1e-9, abs=1e-9)

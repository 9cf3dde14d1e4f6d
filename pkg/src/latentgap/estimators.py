"""Moment estimators of the latent group effect and their sandwich standard errors."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.stats import norm

from .core import (
    VSTAR_TOL,
    Array,
    DerivedQuantities,
    NonIdentifiedError,
    NuisancePair,
    ObservedSample,
    derive,
    derive_from_values,
)
from .nuisance import DEFAULT_LAMBDA, crossfit_predictions, fit_nuisances, kfold_split


class Method(str, enum.Enum):
    ORACLE = "oracle"
    PLUGIN = "plugin"
    ORTHOGONAL = "orthogonal"
    HARD_THRESHOLD = "hard_threshold"


class ScoreKind(str, enum.Enum):
    PSI = "psi"
    PSI_TILDE = "psi_tilde"


@dataclass(frozen=True)
class TauEstimate:
    """Point estimate with a Wald interval.

    ``se`` is the asymptotic standard deviation of sqrt(n)(tau_hat - tau), so
    the interval half-width is z_{1-alpha/2} * se / sqrt(n).
    """

    tau_hat: float
    se: float
    ci_low: float
    ci_high: float
    v_star_hat: float
    n: int
    method: Method
    alpha: float = 0.05

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        return out


def _wald(tau_hat: float, se: float, n: int, alpha: float) -> tuple[float, float]:
    half = norm.ppf(1.0 - alpha / 2.0) * se / math.sqrt(n)
    return tau_hat - half, tau_hat + half


def _check_identified(v_star_hat: float) -> None:
    if not v_star_hat > VSTAR_TOL:
        raise NonIdentifiedError(v_star_hat)


def _psi(dq: DerivedQuantities, tau: float) -> Array:
    return dq.z * dq.r_resid - 2.0 * tau * dq.a * dq.a


def _psi_tilde(dq: DerivedQuantities, tau: float) -> Array:
    return 2.0 * dq.a * (dq.r_resid - tau * dq.a)


def _ratio_estimate(dq: DerivedQuantities, method: Method, alpha: float) -> TauEstimate:
    """Solve the mean of psi = 0: tau = mean(zR) / (2 mean(a^2))."""
    n = dq.n
    v_hat = float(np.mean(dq.a * dq.a))
    _check_identified(v_hat)
    tau_hat = float(np.mean(dq.z * dq.r_resid)) / (2.0 * v_hat)
    se = math.sqrt(float(np.mean(_psi(dq, tau_hat) ** 2))) / (2.0 * v_hat)
    lo, hi = _wald(tau_hat, se, n, alpha)
    return TauEstimate(tau_hat, se, lo, hi, v_hat, n, method, alpha)


def _orthogonal_estimate(dq: DerivedQuantities, alpha: float) -> TauEstimate:
    """Solve the mean of psi_tilde = 0: tau = sum(aR) / sum(a^2)."""
    n = dq.n
    v_hat = float(np.mean(dq.a * dq.a))
    _check_identified(v_hat)
    tau_hat = float(np.mean(dq.a * dq.r_resid)) / v_hat
    # Jacobian of mean(psi_tilde) in tau is -2 V*
    se = math.sqrt(float(np.mean(_psi_tilde(dq, tau_hat) ** 2))) / (2.0 * v_hat)
    lo, hi = _wald(tau_hat, se, n, alpha)
    return TauEstimate(tau_hat, se, lo, hi, v_hat, n, Method.ORTHOGONAL, alpha)


def oracle_tau(sample: ObservedSample, nuis: NuisancePair, alpha: float = 0.05) -> TauEstimate:
    """Moment-ratio estimator at the true nuisance functions."""
    return _ratio_estimate(derive(sample, nuis), Method.ORACLE, alpha)


def sandwich_se(sample: ObservedSample, nuis: NuisancePair, tau_hat: float) -> float:
    dq = derive(sample, nuis)
    v_hat = float(np.mean(dq.a * dq.a))
    _check_identified(v_hat)
    return math.sqrt(float(np.mean(_psi(dq, tau_hat) ** 2))) / (2.0 * v_hat)


def plugin_tau(
    sample: ObservedSample,
    lam: float = DEFAULT_LAMBDA,
    alpha: float = 0.05,
    nuis: NuisancePair | None = None,
) -> TauEstimate:
    """Moment-ratio estimator with nuisances fitted in-sample on the full data.

    Passing ``nuis`` skips the fit (useful for checking the estimator in isolation).
    """
    if nuis is None:
        nuis = fit_nuisances(sample, lam)
    return _ratio_estimate(derive(sample, nuis), Method.PLUGIN, alpha)


def orthogonal_tau(
    sample: ObservedSample,
    k: int = 5,
    lam: float = DEFAULT_LAMBDA,
    seed: int = 0,
    alpha: float = 0.05,
    nuis: NuisancePair | None = None,
) -> TauEstimate:
    """Cross-fitted estimator from the orthogonal score 2a(R - tau a).

    With ``nuis`` given, those functions are used on every row and no
    cross-fitting takes place.
    """
    if nuis is not None:
        dq = derive(sample, nuis)
    else:
        folds = kfold_split(sample.n, k, seed)
        m_hat, r_hat = crossfit_predictions(sample, folds, lam)
        dq = derive_from_values(sample, m_hat, r_hat)
    return _orthogonal_estimate(dq, alpha)


def hard_threshold_gap(
    sample: ObservedSample, nuis: NuisancePair, alpha: float = 0.05
) -> TauEstimate:
    """Difference in mean outcome residual between {p > 1/2} and {p <= 1/2}."""
    dq = derive(sample, nuis)
    upper = sample.p > 0.5
    n1 = int(np.count_nonzero(upper))
    n0 = sample.n - n1
    if n1 == 0:
        raise ValueError("hard-threshold cell {p > 1/2} is empty")
    if n0 == 0:
        raise ValueError("hard-threshold cell {p <= 1/2} is empty")
    r1 = dq.r_resid[upper]
    r0 = dq.r_resid[~upper]
    gap = float(np.mean(r1) - np.mean(r0))
    var1 = float(np.var(r1, ddof=1)) if n1 > 1 else 0.0
    var0 = float(np.var(r0, ddof=1)) if n0 > 1 else 0.0
    se = math.sqrt(sample.n * (var1 / n1 + var0 / n0))
    lo, hi = _wald(gap, se, sample.n, alpha)
    v_hat = float(np.mean(dq.a * dq.a))
    return TauEstimate(gap, se, lo, hi, v_hat, sample.n, Method.HARD_THRESHOLD, alpha)


def score_values(sample: ObservedSample, nuis: NuisancePair, tau: float, kind: ScoreKind) -> Array:
    dq = derive(sample, nuis)
    if ScoreKind(kind) is ScoreKind.PSI:
        return _psi(dq, tau)
    return _psi_tilde(dq, tau)


def _expected_score(atoms, kind: ScoreKind, tau: float, m_vals: Array, r_vals: Array) -> float:
    w, y, p = atoms["w"], atoms["y"], atoms["p"]
    z = 2.0 * p - 1.0
    resid = y - m_vals
    a = p - r_vals
    if kind is ScoreKind.PSI:
        vals = z * resid - 2.0 * tau * a * a
    else:
        vals = 2.0 * a * (resid - tau * a)
    return float(np.sum(w * vals))


def gateaux_derivative(
    reference,
    kind: ScoreKind,
    direction: str,
    delta_fn: Callable[[Array], Array],
    h: float = 1e-3,
    tau: float | None = None,
) -> float:
    """Central difference of E[score] when a nuisance is moved along ``delta_fn``.

    ``reference`` is anything with ``weighted_atoms()`` (a finite-support
    distribution or a simulated latent sample); the expectation is the
    weighted sum over its atoms, evaluated at its true nuisances and, unless
    overridden, its true tau.
    """
    if not 0 < h <= 0.1:
        raise ValueError(f"step h must lie in (0, 0.1], got {h}")
    if direction not in ("m", "r"):
        raise ValueError(f"direction must be 'm' or 'r', got {direction!r}")
    kind = ScoreKind(kind)
    atoms = reference.weighted_atoms()
    tau = atoms["tau"] if tau is None else tau
    shift = np.asarray(delta_fn(atoms["x"]), dtype=float).reshape(-1)
    m0, r0 = atoms["m"], atoms["r"]
    # no clamping of the perturbed r: the derivative is taken in the linear space
    if direction == "m":
        up = _expected_score(atoms, kind, tau, m0 + h * shift, r0)
        down = _expected_score(atoms, kind, tau, m0 - h * shift, r0)
    else:
        up = _expected_score(atoms, kind, tau, m0, r0 + h * shift)
        down = _expected_score(atoms, kind, tau, m0, r0 - h * shift)
    return (up - down) / (2.0 * h)

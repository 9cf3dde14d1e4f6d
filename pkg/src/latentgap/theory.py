"""Population reference values: V*, calibration bias, sensitivity bound, attenuation, weighted tau.

Continuous designs are integrated by seeded Monte Carlo over the covariate
(and, where needed, score) law; finite-support distributions are enumerated
exactly.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .core import VSTAR_TOL, NonIdentifiedError
from .dgp import DgpConfig, FiniteDistribution, LatentSample, eta, score_law

MC_POINTS = 1_000_000
THEORY_SEED = 8_675_309


@dataclass(frozen=True)
class _Draws:
    x: np.ndarray
    r: np.ndarray
    v: np.ndarray
    p: np.ndarray | None


def _draw(cfg: DgpConfig, mc_points: int, seed: int, with_score: bool) -> _Draws:
    if mc_points < 100_000:
        raise ValueError(f"mc_points must be at least 1e5, got {mc_points}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((mc_points, cfg.d))
    r, v, conc = score_law(cfg, x)
    p = None
    if with_score:
        p = r.copy() if cfg.sigma_u == 0 else rng.beta(r * conc, (1.0 - r) * conc)
    return _Draws(x, r, v, p)


def _finite_summary(dist: FiniteDistribution) -> dict:
    dist.check()
    at = dist.weighted_atoms()
    w, p = at["w"], at["p"]
    a = p - at["r"]
    return {"v_star": float(np.sum(w * a * a)), "e_abs_z": float(np.sum(w * np.abs(2 * p - 1)))}


def true_vstar(cfg, mc_points: int = MC_POINTS, seed: int = THEORY_SEED) -> float:
    """V* = E[Var(p|X)]; sigma_u^2 E[r(1-r)] for the Beta designs."""
    if isinstance(cfg, FiniteDistribution):
        return _finite_summary(cfg)["v_star"]
    if cfg.sigma_u == 0:
        return 0.0
    return float(np.mean(_draw(cfg, mc_points, seed, with_score=False).v))


def theoretical_bias(cfg: DgpConfig, mc_points: int = MC_POINTS, seed: int = THEORY_SEED) -> float:
    """Probability-limit bias tau E[(2p-1) eta(p)] / (2 V*) of the oracle estimator, unclipped eta."""
    if cfg.tau0 == 0 or cfg.eta_shape == "none":
        return 0.0
    dr = _draw(cfg, mc_points, seed, with_score=True)
    v_star = float(np.mean(dr.v))
    if not v_star > VSTAR_TOL:
        raise NonIdentifiedError(v_star)
    z = 2.0 * dr.p - 1.0
    return cfg.tau0 * float(np.mean(z * eta(cfg.eta_shape, dr.p, cfg.delta))) / (2.0 * v_star)


def sharp_bound(cfg, delta: float, mc_points: int = MC_POINTS, seed: int = THEORY_SEED) -> float:
    """Worst-case |bias| |tau| delta E|2p-1| / (2 V*) over calibration errors bounded by delta."""
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if isinstance(cfg, FiniteDistribution):
        s = _finite_summary(cfg)
        tau, v_star, e_abs_z = cfg.tau, s["v_star"], s["e_abs_z"]
    else:
        tau = cfg.tau0
        dr = _draw(cfg, mc_points, seed, with_score=True)
        v_star = float(np.mean(dr.v))
        e_abs_z = float(np.mean(np.abs(2.0 * dr.p - 1.0)))
    if delta == 0 or tau == 0:
        return 0.0
    if not v_star > VSTAR_TOL:
        raise NonIdentifiedError(v_star)
    return abs(tau) * delta * e_abs_z / (2.0 * v_star)


def attenuation_kappa(cfg, mc_points: int = MC_POINTS, seed: int = THEORY_SEED) -> float:
    """kappa = 2 E|p - 1/2|, the limit of the hard-threshold gap divided by tau."""
    if isinstance(cfg, FiniteDistribution):
        cfg.check()
        at = cfg.weighted_atoms()
        return float(2.0 * np.sum(at["w"] * np.abs(at["p"] - 0.5)))
    if cfg.variant != "symmetric_threshold":
        raise ValueError("attenuation_kappa is defined for the symmetric_threshold variant")
    dr = _draw(cfg, mc_points, seed, with_score=True)
    return float(2.0 * np.mean(np.abs(dr.p - 0.5)))


def variance_weighted_tau(cfg: DgpConfig, mc_points: int = MC_POINTS, seed: int = THEORY_SEED) -> float:
    """tau_bar = E[tau(X) Var(p|X)] / E[Var(p|X)] with the realized (capped) variances."""
    if cfg.tau1 == 0:
        return cfg.tau0
    dr = _draw(cfg, mc_points, seed, with_score=False)
    tau_x = cfg.tau0 + cfg.tau1 * dr.x[:, 0]
    return float(np.sum(tau_x * dr.v) / np.sum(dr.v))


def marginal_gap(source) -> tuple[float, float]:
    """(E[Y|G=1] - E[Y|G=0], E[mu(X)|G=1] - E[mu(X)|G=0]) from latent data or exact atoms."""
    if isinstance(source, FiniteDistribution):
        source.check()
        at = source.weighted_atoms()
    elif isinstance(source, LatentSample):
        at = source.weighted_atoms()
    else:
        raise TypeError("marginal_gap needs a LatentSample or FiniteDistribution")
    w, g = at["w"], at["g"]
    w1, w0 = w * g, w * (1.0 - g)
    if not (np.sum(w1) > 0 and np.sum(w0) > 0):
        raise ValueError("marginal_gap needs both latent groups G=0 and G=1 to be non-empty")

    def gap(v):
        return float(np.sum(w1 * v) / np.sum(w1) - np.sum(w0 * v) / np.sum(w0))

    return gap(at["y"]), gap(at["mu"])


@dataclass(frozen=True)
class PopulationMoments:
    e_zr: float
    v_star: float
    e_abs_z: float
    e_z_sq: float
    e_psi_sq: float
    true_tau: float
    cond_cov_gp: dict
    cond_var_p: dict

    @property
    def identified(self) -> bool:
        return self.v_star > VSTAR_TOL

    @property
    def tau(self) -> float:
        """tau recovered by the identification ratio E[zR] / (2 V*)."""
        if not self.identified:
            raise NonIdentifiedError(self.v_star)
        return self.e_zr / (2.0 * self.v_star)

    @property
    def sigma2_oracle(self) -> float:
        """Asymptotic variance E[psi^2] / (2 V*)^2 of the oracle estimator."""
        if not self.identified:
            raise NonIdentifiedError(self.v_star)
        return self.e_psi_sq / (2.0 * self.v_star) ** 2


def enumeration_oracle(dist: FiniteDistribution) -> PopulationMoments:
    """Exact population moments by summing over every atom."""
    dist.check()
    at = dist.weighted_atoms()
    w, p, y, g, x = at["w"], at["p"], at["y"], at["g"], at["x"][:, 0]
    z = 2.0 * p - 1.0
    resid = y - at["m"]
    a = p - at["r"]
    v_star = float(np.sum(w * a * a))
    psi = z * resid - 2.0 * dist.tau * a * a

    cov_gp, var_p = {}, {}
    for xv in dist.x_values:
        sel = x == xv
        wx = w[sel] / np.sum(w[sel])
        eg, ep = np.sum(wx * g[sel]), np.sum(wx * p[sel])
        cov_gp[xv] = float(np.sum(wx * (g[sel] - eg) * (p[sel] - ep)))
        var_p[xv] = float(np.sum(wx * (p[sel] - ep) ** 2))

    return PopulationMoments(
        e_zr=float(np.sum(w * z * resid)),
        v_star=v_star,
        e_abs_z=float(np.sum(w * np.abs(z))),
        e_z_sq=float(np.sum(w * z * z)),
        e_psi_sq=float(np.sum(w * psi * psi)),
        true_tau=float(dist.tau),
        cond_cov_gp=cov_gp,
        cond_var_p=var_p,
    )


def gateaux_closed_form(dist: FiniteDistribution, kind: str, direction: str, delta_fn: Callable) -> float:
    """Analytic derivative of E[score] along a nuisance direction, by enumeration.

    psi:       m-direction -E[(2r(X)-1) d(X)],  r-direction 4 tau E[a d(X)]
    psi_tilde: m-direction -2 E[a d(X)],         r-direction -2 E[d(X)(R - tau a)] + 2 tau E[a d(X)]
    """
    at = dist.weighted_atoms()
    w = at["w"]
    dx = np.asarray(delta_fn(at["x"]), dtype=float).reshape(-1)
    a = at["p"] - at["r"]
    resid = at["y"] - at["m"]
    tau = dist.tau
    if kind == "psi":
        if direction == "m":
            return float(-np.sum(w * (2.0 * at["r"] - 1.0) * dx))
        return float(4.0 * tau * np.sum(w * a * dx))
    if direction == "m":
        return float(-2.0 * np.sum(w * a * dx))
    return float(-2.0 * np.sum(w * dx * (resid - tau * a)) + 2.0 * tau * np.sum(w * a * dx))


@dataclass(frozen=True)
class TheoryReport:
    v_star: float
    e_abs_z: float
    b_cal: float | None
    sharp_bound: float | None
    kappa: float | None
    tau_bar: float | None
    method: str
    mc_points: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def theory_report(cfg, mc_points: int = MC_POINTS, seed: int = THEORY_SEED) -> TheoryReport:
    """Every reference value that applies to a configuration, from one set of draws."""
    if isinstance(cfg, FiniteDistribution):
        m = enumeration_oracle(cfg)
        return TheoryReport(
            v_star=m.v_star,
            e_abs_z=m.e_abs_z,
            b_cal=None,
            sharp_bound=None,
            kappa=attenuation_kappa(cfg),
            tau_bar=cfg.tau,
            method="enumeration",
            mc_points=0,
            seed=0,
        )
    dr = _draw(cfg, mc_points, seed, with_score=True)
    v_star = float(np.mean(dr.v))
    z = 2.0 * dr.p - 1.0
    e_abs_z = float(np.mean(np.abs(z)))
    b_cal = bound = None
    if cfg.eta_shape != "none" and v_star > VSTAR_TOL:
        b_cal = cfg.tau0 * float(np.mean(z * eta(cfg.eta_shape, dr.p, cfg.delta))) / (2.0 * v_star)
        bound = abs(cfg.tau0) * cfg.delta * e_abs_z / (2.0 * v_star)
    kappa = float(2.0 * np.mean(np.abs(dr.p - 0.5))) if cfg.variant == "symmetric_threshold" else None
    tau_bar = cfg.tau0
    if cfg.tau1 != 0 and v_star > 0:
        tau_bar = float(np.sum((cfg.tau0 + cfg.tau1 * dr.x[:, 0]) * dr.v) / np.sum(dr.v))
    return TheoryReport(
        v_star=v_star,
        e_abs_z=e_abs_z,
        b_cal=b_cal,
        sharp_bound=bound,
        kappa=kappa,
        tau_bar=tau_bar,
        method="mc_integration",
        mc_points=mc_points,
        seed=seed,
    )

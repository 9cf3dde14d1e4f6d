"""Synthetic data generators with a known latent group indicator.

Every generator draws, in order: covariates, score, a uniform for the latent
indicator, and outcome noise. Drawing G by thresholding a uniform keeps the
miscalibrated generator at delta=0 bit-identical to the baseline.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import expit

from .core import Array, NuisancePair, ObservedSample

VARIANTS = ("baseline", "symmetric_threshold", "hetero_A", "hetero_B")
ETA_SHAPES = ("none", "worst_case", "linear", "symmetric")

# Calibrated so that E[r(X)(1 - r(X))] = 0.2245 for X ~ N(0, I_3).
DEFAULT_BETA_R = (0.41, 0.41, 0.41)
DEFAULT_BETA_M = (1.0, -0.5, 0.25)
R_CLAMP = 1e-6
HETERO_VAR_SLOPE = 0.8
HETERO_VAR_CAP = 0.9


@dataclass(frozen=True)
class DgpConfig:
    n: int = 1000
    tau0: float = 1.0
    tau1: float = 0.0
    sigma_u: float = 0.30
    beta_r: tuple[float, ...] = DEFAULT_BETA_R
    beta_m: tuple[float, ...] = DEFAULT_BETA_M
    d: int = 3
    noise_sd: float = 1.0
    eta_shape: str = "none"
    delta: float = 0.0
    variant: str = "baseline"

    def __post_init__(self):
        object.__setattr__(self, "beta_r", tuple(float(b) for b in self.beta_r))
        object.__setattr__(self, "beta_m", tuple(float(b) for b in self.beta_m))
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        # sigma_u = 0 is allowed: the score then equals r(X) exactly (non-identified)
        if not 0.0 <= self.sigma_u < 1.0:
            raise ValueError(f"sigma_u must lie in [0, 1), got {self.sigma_u}")
        if len(self.beta_r) != self.d or len(self.beta_m) != self.d:
            raise ValueError(f"beta_r and beta_m must have length d={self.d}")
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.eta_shape not in ETA_SHAPES:
            raise ValueError(f"unknown eta_shape {self.eta_shape!r}; choose from {ETA_SHAPES}")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.eta_shape == "none" and self.delta != 0:
            raise ValueError("delta must be 0 when eta_shape is 'none'")
        if self.eta_shape != "none" and self.variant != "baseline":
            raise ValueError("miscalibration is only defined for the baseline variant")
        if self.variant.startswith("hetero") and self.d < 1:
            raise ValueError("heterogeneous designs need at least one covariate")

    @property
    def tau(self) -> float:
        return self.tau0

    def with_n(self, n: int) -> "DgpConfig":
        return replace(self, n=n)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["beta_r"] = list(self.beta_r)
        out["beta_m"] = list(self.beta_m)
        return out


@dataclass(frozen=True)
class LatentSample:
    observed: ObservedSample
    g: Array
    true_m: Array
    true_r: Array
    true_mu: Array
    tau_of_x: Array
    v_of_x: Array

    @property
    def n(self) -> int:
        return self.observed.n

    def weighted_atoms(self) -> dict:
        n = self.n
        return {
            "w": np.full(n, 1.0 / n),
            "y": self.observed.y,
            "x": self.observed.x,
            "p": self.observed.p,
            "g": self.g,
            "m": self.true_m,
            "r": self.true_r,
            "mu": self.true_mu,
            "tau": float(np.mean(self.tau_of_x)),
        }


# -- score law ------------------------------------------------------------


def eta(shape: str, p, delta: float) -> Array:
    """Calibration error eta(p) for the three miscalibration shapes."""
    p = np.asarray(p, dtype=float)
    if shape == "none":
        return np.zeros_like(p)
    if shape == "worst_case":
        return delta * np.sign(2.0 * p - 1.0)
    if shape == "linear":
        return delta * (2.0 * p - 1.0)
    if shape == "symmetric":
        return delta * np.sin(math.pi * p)
    raise ValueError(f"unknown eta_shape {shape!r}")


def _structural_mean(cfg: DgpConfig, x: Array) -> Array:
    return x @ np.asarray(cfg.beta_m)


def _tau_of_x(cfg: DgpConfig, x: Array) -> Array:
    return cfg.tau0 + cfg.tau1 * x[:, 0] if cfg.variant.startswith("hetero") else np.full(x.shape[0], cfg.tau0)


def _score_mean(cfg: DgpConfig, x: Array) -> Array:
    if cfg.variant == "symmetric_threshold":
        return np.full(x.shape[0], 0.5)
    return np.clip(expit(x @ np.asarray(cfg.beta_r)), R_CLAMP, 1.0 - R_CLAMP)


def score_law(cfg: DgpConfig, x: Array) -> tuple[Array, Array, Array]:
    """Per-row (r, Var(p|X), concentration) of the Beta score distribution.

    Concentration is +inf when sigma_u = 0 (the score is degenerate at r).
    """
    r = _score_mean(cfg, x)
    bern_var = r * (1.0 - r)
    s2 = cfg.sigma_u**2
    if cfg.variant == "hetero_B":
        v = np.minimum(s2 * np.exp(HETERO_VAR_SLOPE * x[:, 0]), HETERO_VAR_CAP * bern_var)
    else:
        v = s2 * bern_var
    with np.errstate(divide="ignore"):
        conc = np.where(v > 0, bern_var / np.where(v > 0, v, 1.0) - 1.0, np.inf)
    return r, v, conc


def draw_score(cfg: DgpConfig, x: Array, rng: np.random.Generator) -> Array:
    r, _, conc = score_law(cfg, x)
    if cfg.sigma_u == 0.0:
        return r.copy()
    return rng.beta(r * conc, (1.0 - r) * conc)


def true_nuisances(cfg: DgpConfig) -> NuisancePair:
    """Closed-form m(x) = mu(x) + tau(x) r(x) and r(x) for a configuration."""

    def m(x):
        x = np.atleast_2d(x)
        return _structural_mean(cfg, x) + _tau_of_x(cfg, x) * _score_mean(cfg, x)

    def r(x):
        return _score_mean(cfg, np.atleast_2d(x))

    return NuisancePair(m=m, r=r)


# -- generators -------------------------------------------------------------


def _generate(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    x = rng.standard_normal((cfg.n, cfg.d))
    r, v, _ = score_law(cfg, x)
    p = draw_score(cfg, x, rng)
    prob = p if cfg.eta_shape == "none" else np.clip(p + eta(cfg.eta_shape, p, cfg.delta), 0.0, 1.0)
    g = (rng.random(cfg.n) < prob).astype(float)
    eps = cfg.noise_sd * rng.standard_normal(cfg.n)
    mu = _structural_mean(cfg, x)
    tau_x = _tau_of_x(cfg, x)
    y = mu + tau_x * g + eps
    return LatentSample(
        observed=ObservedSample(y=y, x=x, p=p),
        g=g,
        true_m=mu + tau_x * r,
        true_r=r,
        true_mu=mu,
        tau_of_x=tau_x,
        v_of_x=v,
    )


def baseline_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    if cfg.variant != "baseline":
        raise ValueError(f"baseline_sample needs variant='baseline', got {cfg.variant!r}")
    return _generate(replace(cfg, eta_shape="none", delta=0.0), rng)


def miscalibrated_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    """Baseline draw with G ~ Bernoulli(clip(p + eta(p), 0, 1)).

    The stored nuisances stay those of the calibrated model, m = mu + tau r.
    """
    if cfg.eta_shape == "none":
        raise ValueError("miscalibrated_sample needs an eta_shape other than 'none'")
    return _generate(cfg, rng)


def symmetric_threshold_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    if cfg.variant != "symmetric_threshold":
        raise ValueError("symmetric_threshold_sample needs variant='symmetric_threshold'")
    return _generate(cfg, rng)


def heterogeneous_sample(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    if cfg.variant not in ("hetero_A", "hetero_B"):
        raise ValueError("heterogeneous_sample needs variant 'hetero_A' or 'hetero_B'")
    return _generate(cfg, rng)


def generate(cfg: DgpConfig, rng: np.random.Generator) -> LatentSample:
    """Dispatch on the configuration's variant and miscalibration shape."""
    if cfg.variant == "baseline":
        if cfg.eta_shape == "none":
            return baseline_sample(cfg, rng)
        return miscalibrated_sample(cfg, rng)
    if cfg.variant == "symmetric_threshold":
        return symmetric_threshold_sample(cfg, rng)
    return heterogeneous_sample(cfg, rng)


def equivalence_construction(
    sample: LatentSample, tau_prime: float, rng: np.random.Generator
) -> LatentSample:
    """Alternative model with coefficient tau_prime and the same observables.

    G' = 1{U <= p} for an independent uniform U and mu'(X) = m(X) - tau' r(X).
    """
    u = rng.random(sample.n)
    g_new = (u <= sample.observed.p).astype(float)
    return LatentSample(
        observed=sample.observed,
        g=g_new,
        true_m=sample.true_m,
        true_r=sample.true_r,
        true_mu=sample.true_m - tau_prime * sample.true_r,
        tau_of_x=np.full(sample.n, float(tau_prime)),
        v_of_x=sample.v_of_x,
    )


# -- finite-support fixture ---------------------------------------------------


@dataclass(frozen=True)
class FiniteDistribution:
    """Discrete model: X, then p | X, then G | p ~ Bernoulli(p), plus independent noise.

    Y = mu(X) + tau * G + eps. Covariates are scalar.
    """

    x_values: tuple[float, ...]
    x_probs: tuple[float, ...]
    p_values: tuple[tuple[float, ...], ...]
    p_probs: tuple[tuple[float, ...], ...]
    mu_values: tuple[float, ...]
    tau: float
    eps_values: tuple[float, ...] = (-1.0, 1.0)
    eps_probs: tuple[float, ...] = (0.5, 0.5)
    prob_tol: float = field(default=1e-12, repr=False)

    def check(self) -> None:
        groups = [("X", self.x_probs), ("eps", self.eps_probs)]
        groups += [(f"p|X={xv}", pp) for xv, pp in zip(self.x_values, self.p_probs)]
        for name, probs in groups:
            if any(q < 0 for q in probs):
                raise ValueError(f"negative probability in {name}")
            total = math.fsum(probs)
            if abs(total - 1.0) > self.prob_tol:
                raise ValueError(f"probabilities of {name} sum to {total!r}, not 1")
        if not (len(self.x_values) == len(self.x_probs) == len(self.p_values) == len(self.p_probs) == len(self.mu_values)):
            raise ValueError("per-X tables must all have one entry per covariate value")

    def r_of(self, i: int) -> float:
        return math.fsum(v * q for v, q in zip(self.p_values[i], self.p_probs[i]))

    def m_of(self, i: int) -> float:
        return self.mu_values[i] + self.tau * self.r_of(i)

    def weighted_atoms(self) -> dict:
        """Every (X, p, G, eps) atom with its probability and true nuisance values."""
        rows = []
        for i, (xv, xq) in enumerate(zip(self.x_values, self.x_probs)):
            r, m = self.r_of(i), self.m_of(i)
            for pv, pq in zip(self.p_values[i], self.p_probs[i]):
                for gv, gq in ((1.0, pv), (0.0, 1.0 - pv)):
                    for ev, eq in zip(self.eps_values, self.eps_probs):
                        y = self.mu_values[i] + self.tau * gv + ev
                        rows.append((xq * pq * gq * eq, xv, pv, gv, ev, y, m, r, self.mu_values[i]))
        cols = np.array(rows, dtype=float).T
        return {
            "w": cols[0],
            "x": cols[1].reshape(-1, 1),
            "p": cols[2],
            "g": cols[3],
            "eps": cols[4],
            "y": cols[5],
            "m": cols[6],
            "r": cols[7],
            "mu": cols[8],
            "tau": float(self.tau),
        }

    def sample(self, n: int, rng: np.random.Generator) -> LatentSample:
        """Draw n i.i.d. rows from the distribution."""
        ix = rng.choice(len(self.x_values), size=n, p=self.x_probs)
        p = np.empty(n)
        for i in range(len(self.x_values)):
            rows = np.flatnonzero(ix == i)
            p[rows] = rng.choice(self.p_values[i], size=rows.size, p=self.p_probs[i])
        g = (rng.random(n) < p).astype(float)
        eps = rng.choice(self.eps_values, size=n, p=self.eps_probs)
        x = np.asarray(self.x_values)[ix]
        mu = np.asarray(self.mu_values)[ix]
        r = np.array([self.r_of(i) for i in range(len(self.x_values))])[ix]
        p_var = np.array([
            math.fsum(q * (v - self.r_of(i)) ** 2 for v, q in zip(self.p_values[i], self.p_probs[i]))
            for i in range(len(self.x_values))
        ])[ix]
        return LatentSample(
            observed=ObservedSample(y=mu + self.tau * g + eps, x=x.reshape(-1, 1), p=p),
            g=g,
            true_m=mu + self.tau * r,
            true_r=r,
            true_mu=mu,
            tau_of_x=np.full(n, float(self.tau)),
            v_of_x=p_var,
        )

    def nuisances(self) -> NuisancePair:
        table_m = {xv: self.m_of(i) for i, xv in enumerate(self.x_values)}
        table_r = {xv: self.r_of(i) for i, xv in enumerate(self.x_values)}
        return NuisancePair(
            m=lambda x: np.array([table_m[float(v)] for v in np.atleast_2d(x)[:, 0]]),
            r=lambda x: np.array([table_r[float(v)] for v in np.atleast_2d(x)[:, 0]]),
        )


def finite_support_distribution() -> FiniteDistribution:
    """The canonical 16-atom test model (tau = 2, V* = 0.01, E|2p-1| = 0.4)."""
    return FiniteDistribution(
        x_values=(0.0, 1.0),
        x_probs=(0.5, 0.5),
        p_values=((0.2, 0.4), (0.6, 0.8)),
        p_probs=((0.5, 0.5), (0.5, 0.5)),
        mu_values=(0.0, 1.0),
        tau=2.0,
    )

"""Monte Carlo cells: R seeded replications of one (design, estimator, n) combination."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import kstest, norm

from .core import LatentGapError
from .dgp import DgpConfig, generate, true_nuisances
from .estimators import (
    Method,
    TauEstimate,
    hard_threshold_gap,
    oracle_tau,
    orthogonal_tau,
    plugin_tau,
)
from .nuisance import DEFAULT_LAMBDA


def replication_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent stream for one replication, hashed from (master_seed, index)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(index)]))


@dataclass(frozen=True)
class CellSpec:
    dgp: DgpConfig
    estimator: Method
    n: int
    reps: int
    master_seed: int
    target: float
    alpha: float = 0.05
    lam: float = DEFAULT_LAMBDA
    folds: int = 5

    def __post_init__(self):
        object.__setattr__(self, "estimator", Method(self.estimator))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not math.isfinite(self.target):
            raise ValueError("target must be finite")

    def to_dict(self) -> dict:
        return {
            "dgp": self.dgp.with_n(self.n).to_dict(),
            "estimator": self.estimator.value,
            "n": self.n,
            "reps": self.reps,
            "master_seed": self.master_seed,
            "target": self.target,
            "alpha": self.alpha,
            "lambda": self.lam,
            "folds": self.folds,
        }


@dataclass(frozen=True)
class CellReport:
    spec: CellSpec
    mean: float
    bias: float
    sd: float
    rmse: float
    coverage: float
    n_finite: int
    n_failed: int
    degenerate: bool
    estimates: np.ndarray = field(repr=False)
    ses: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            "estimator": self.spec.estimator.value,
            "n": self.spec.n,
            "target": self.spec.target,
            "mean": self.mean,
            "bias": self.bias,
            "sd": self.sd,
            "rmse": self.rmse,
            "coverage": self.coverage,
            "n_finite": self.n_finite,
            "n_failed": self.n_failed,
            "degenerate": self.degenerate,
        }

    @property
    def mc_error(self) -> float:
        """Standard error of the mean estimate across replications."""
        return self.sd / math.sqrt(self.n_finite) if self.n_finite > 0 else math.nan


def estimate_once(spec: CellSpec, index: int) -> TauEstimate:
    rng = replication_rng(spec.master_seed, index)
    cfg = spec.dgp.with_n(spec.n)
    sample = generate(cfg, rng)
    obs = sample.observed
    method = spec.estimator
    if method is Method.ORACLE:
        return oracle_tau(obs, true_nuisances(cfg), spec.alpha)
    if method is Method.PLUGIN:
        return plugin_tau(obs, spec.lam, spec.alpha)
    if method is Method.ORTHOGONAL:
        fold_seed = int(rng.integers(2**63 - 1))
        return orthogonal_tau(obs, spec.folds, spec.lam, fold_seed, spec.alpha)
    return hard_threshold_gap(obs, true_nuisances(cfg), spec.alpha)


def _run_block(spec: CellSpec, start: int, stop: int) -> np.ndarray:
    """Rows of (tau_hat, se, covers) for replications [start, stop); NaN marks a failure."""
    out = np.full((stop - start, 3), np.nan)
    for j, index in enumerate(range(start, stop)):
        try:
            est = estimate_once(spec, index)
        except (LatentGapError, ValueError, np.linalg.LinAlgError):
            continue
        if math.isfinite(est.tau_hat) and math.isfinite(est.se):
            out[j] = (est.tau_hat, est.se, float(est.covers(spec.target)))
    return out


def _blocks(reps: int, workers: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(reps / (workers * 4)))
    return [(s, min(s + size, reps)) for s in range(0, reps, size)]


def run_replications(spec: CellSpec, workers: int = 1) -> np.ndarray:
    if workers <= 1:
        return _run_block(spec, 0, spec.reps)
    blocks = _blocks(spec.reps, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_block, [spec] * len(blocks), *zip(*blocks)))
    # map preserves submission order, so the reduction below is order-independent
    return np.vstack(parts)


def summarize(spec: CellSpec, rows: np.ndarray) -> CellReport:
    ok = np.isfinite(rows[:, 0])
    n_finite = int(np.count_nonzero(ok))
    if n_finite == 0:
        raise LatentGapError(f"all {spec.reps} replications failed (non-identified or non-finite)")
    est = rows[ok, 0]
    mean = float(np.mean(est))
    bias = mean - spec.target
    sd = float(np.std(est, ddof=1)) if n_finite > 1 else 0.0
    rmse = float(math.sqrt(np.mean((est - spec.target) ** 2)))
    coverage = float(np.mean(rows[ok, 2]))
    return CellReport(
        spec=spec,
        mean=mean,
        bias=bias,
        sd=sd,
        rmse=rmse,
        coverage=coverage,
        n_finite=n_finite,
        n_failed=spec.reps - n_finite,
        degenerate=n_finite < 2,
        estimates=est,
        ses=rows[ok, 1],
    )


def run_cell(spec: CellSpec, workers: int = 1) -> CellReport:
    """Run every replication and aggregate bias, SD, RMSE and Wald coverage.

    Results do not depend on ``workers``: each replication owns its stream.
    """
    return summarize(spec, run_replications(spec, workers))


@dataclass(frozen=True)
class QQData:
    theoretical: np.ndarray
    empirical: np.ndarray
    ks: float
    degenerate: bool


def qq_data(estimates, target: float, ses, n: int) -> QQData:
    """Sorted sqrt(n)(tau_hat - target)/se against normal quantiles at (i - 0.5)/R."""
    est = np.asarray(estimates, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if est.size < 100:
        raise ValueError(f"qq_data needs at least 100 estimates, got {est.size}")
    r = est.size
    theo = norm.ppf((np.arange(1, r + 1) - 0.5) / r)
    with np.errstate(divide="ignore", invalid="ignore"):
        std = math.sqrt(n) * (est - target) / ses
    degenerate = bool(np.ptp(est) == 0 or not np.all(np.isfinite(std)))
    if degenerate:
        return QQData(theo, np.sort(std), math.nan, True)
    emp = np.sort(std)
    return QQData(theo, emp, float(kstest(emp, "norm").statistic), False)


def with_reps(spec: CellSpec, reps: int) -> CellSpec:
    return replace(spec, reps=reps)

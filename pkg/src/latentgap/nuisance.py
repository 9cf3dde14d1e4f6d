"""Degree-2 polynomial ridge regression and fold assignment for cross-fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Array, NuisancePair, ObservedSample

# Sum-of-squares loss on standardized features; see README for how this was chosen.
DEFAULT_LAMBDA = 20.0


def poly_features(x, degree: int = 2) -> Array:
    """Expand covariates into [linear, squares, pairwise products].

    Accepts a single row (1-D) or a matrix (2-D); the intercept is left to
    the model. For d inputs the expansion has d + d + d(d-1)/2 columns.
    """
    if degree != 2:
        raise ValueError(f"only degree=2 is supported, got degree={degree}")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    d = x.shape[1]
    cols = [x, x * x]
    crosses = [x[:, i] * x[:, j] for i in range(d) for j in range(i + 1, d)]
    if crosses:
        cols.append(np.column_stack(crosses))
    out = np.hstack(cols)
    return out[0] if single else out


@dataclass(frozen=True)
class RidgeModel:
    """Ridge fit on standardized features with an unpenalized intercept."""

    weights: Array
    intercept: float
    feature_mean: Array
    feature_scale: Array
    lam: float

    def predict(self, features) -> Array:
        f = np.atleast_2d(np.asarray(features, dtype=float))
        return self.intercept + ((f - self.feature_mean) / self.feature_scale) @ self.weights

    @property
    def raw_coefficients(self) -> Array:
        """Slopes on the original (unstandardized) feature scale."""
        return self.weights / self.feature_scale

    @property
    def raw_intercept(self) -> float:
        return float(self.intercept - np.sum(self.weights * self.feature_mean / self.feature_scale))


def ridge_fit(features, targets, lam: float = DEFAULT_LAMBDA) -> RidgeModel:
    """Minimize sum((t - pred)^2) + lam * ||w||^2 via the normal equations."""
    f = np.atleast_2d(np.asarray(features, dtype=float))
    t = np.asarray(targets, dtype=float).reshape(-1)
    if f.shape[0] != t.shape[0]:
        raise ValueError(f"{f.shape[0]} feature rows but {t.shape[0]} targets")
    if f.shape[0] < 2:
        raise ValueError("ridge_fit needs at least 2 rows")
    if not lam >= 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")

    mean = f.mean(axis=0)
    scale = f.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    zf = (f - mean) / scale
    t_mean = float(np.mean(t))

    gram = zf.T @ zf
    if lam > 0:
        gram = gram + lam * np.eye(gram.shape[0])
    elif np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise np.linalg.LinAlgError(
            "normal equations are singular at lambda=0; use lambda > 0"
        )
    w = np.linalg.solve(gram, zf.T @ (t - t_mean))
    return RidgeModel(weights=w, intercept=t_mean, feature_mean=mean, feature_scale=scale, lam=float(lam))


def fit_nuisances(sample: ObservedSample, lam: float = DEFAULT_LAMBDA) -> NuisancePair:
    """Fit m(x) on y and r(x) on p with degree-2 ridge; r predictions are clamped to [0, 1]."""
    feats = poly_features(sample.x)
    if sample.n < feats.shape[1] + 1:
        raise ValueError(
            f"need at least {feats.shape[1] + 1} rows to fit {feats.shape[1]} features, got {sample.n}"
        )
    m_model = ridge_fit(feats, sample.y, lam)
    r_model = ridge_fit(feats, sample.p, lam)
    return NuisancePair(
        m=lambda x: m_model.predict(poly_features(np.atleast_2d(x))),
        r=lambda x: np.clip(r_model.predict(poly_features(np.atleast_2d(x))), 0.0, 1.0),
    )


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray
    k: int

    def indices(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train, test) row indices for one fold."""
        test = self.fold_of == fold
        return np.flatnonzero(~test), np.flatnonzero(test)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.k)


def kfold_split(n: int, k: int, seed: int) -> FoldAssignment:
    """Uniform random partition of range(n) into k folds of near-equal size."""
    if k < 2:
        raise ValueError(f"need k >= 2 folds, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} rows into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    fold_of.setflags(write=False)
    return FoldAssignment(fold_of=fold_of, k=k)


def crossfit_predictions(
    sample: ObservedSample, folds: FoldAssignment, lam: float = DEFAULT_LAMBDA
) -> tuple[Array, Array]:
    """Out-of-fold predictions of (m, r); each fold uses its training split's standardization."""
    feats = poly_features(sample.x)
    m_hat = np.empty(sample.n)
    r_hat = np.empty(sample.n)
    for k in range(folds.k):
        train, test = folds.indices(k)
        m_hat[test] = ridge_fit(feats[train], sample.y[train], lam).predict(feats[test])
        r_hat[test] = ridge_fit(feats[train], sample.p[train], lam).predict(feats[test])
    return m_hat, np.clip(r_hat, 0.0, 1.0)

"""Observed data containers and the derived quantities shared by all estimators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]
Mapping = Callable[[Array], Array]

# V* below this is treated as exact non-identification.
VSTAR_TOL = 1e-12


class LatentGapError(Exception):
    """Base class for errors raised by this package."""


class NonIdentifiedError(LatentGapError):
    """The residual score variance is (numerically) zero.

    When the score is a deterministic function of the covariates, both sides
    of the moment equation vanish and every value of the group effect is
    observationally equivalent.
    """

    def __init__(self, v_star: float, message: str | None = None):
        self.v_star = float(v_star)
        if message is None:
            message = (
                f"group effect not identified: residual score variance V*={self.v_star:.3e} "
                f"is below {VSTAR_TOL:g}; the score is (numerically) a deterministic function of X"
            )
        super().__init__(message)


class NuisanceEvaluationError(LatentGapError):
    """A nuisance function returned a non-finite value."""


@dataclass(frozen=True)
class ObservedSample:
    """Rows of (Y, X, p). ``x`` is always stored as an (n, d) matrix."""

    y: Array
    x: Array
    p: Array

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise ValueError(f"x must be 1-D or 2-D, got shape {x.shape}")
        n = y.shape[0]
        if n < 1:
            raise ValueError("sample must contain at least one row")
        if p.shape[0] != n or x.shape[0] != n:
            raise ValueError(
                f"length mismatch: y has {n} rows, x has {x.shape[0]}, p has {p.shape[0]}"
            )
        bad = np.flatnonzero(~((p >= 0.0) & (p <= 1.0)))
        if bad.size:
            i = int(bad[0])
            raise ValueError(f"score p must lie in [0, 1]; row {i} has p={p[i]!r}")
        for name, arr in (("y", y), ("p", p), ("x", x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def take(self, idx) -> "ObservedSample":
        return ObservedSample(self.y[idx], self.x[idx], self.p[idx])


@dataclass(frozen=True)
class NuisancePair:
    """Conditional mean functions m(x) = E[Y|X=x] and r(x) = E[p|X=x].

    Both callables take an (n, d) covariate matrix and return length-n arrays.
    Outputs of ``r`` are clamped to [0, 1] on evaluation.
    """

    m: Mapping
    r: Mapping

    def evaluate(self, x: Array) -> tuple[Array, Array]:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        m_vals = np.asarray(self.m(x), dtype=float).reshape(-1)
        r_vals = np.asarray(self.r(x), dtype=float).reshape(-1)
        for name, vals in (("m", m_vals), ("r", r_vals)):
            if vals.shape[0] != x.shape[0]:
                raise NuisanceEvaluationError(
                    f"nuisance {name} returned {vals.shape[0]} values for {x.shape[0]} rows"
                )
            bad = np.flatnonzero(~np.isfinite(vals))
            if bad.size:
                i = int(bad[0])
                raise NuisanceEvaluationError(
                    f"nuisance {name} is non-finite at row {i} (value {vals[i]!r})"
                )
        return m_vals, np.clip(r_vals, 0.0, 1.0)

    @classmethod
    def constant(cls, m: float, r: float) -> "NuisancePair":
        return cls(
            m=lambda x: np.full(x.shape[0], float(m)),
            r=lambda x: np.full(x.shape[0], float(r)),
        )


@dataclass(frozen=True)
class DerivedQuantities:
    z: Array
    r_resid: Array
    a: Array

    @property
    def n(self) -> int:
        return int(self.z.shape[0])


def derive(sample: ObservedSample, nuis: NuisancePair) -> DerivedQuantities:
    """Signed score z = 2p - 1, outcome residual R = y - m(x), score residual a = p - r(x)."""
    m_vals, r_vals = nuis.evaluate(sample.x)
    return derive_from_values(sample, m_vals, r_vals)


def derive_from_values(sample: ObservedSample, m_vals: Array, r_vals: Array) -> DerivedQuantities:
    m_vals = np.asarray(m_vals, dtype=float)
    r_vals = np.clip(np.asarray(r_vals, dtype=float), 0.0, 1.0)
    return DerivedQuantities(
        z=2.0 * sample.p - 1.0,
        r_resid=sample.y - m_vals,
        a=sample.p - r_vals,
    )


def residual_variance(a) -> float:
    """Sample analogue of V* = E[(p - r(X))^2]."""
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size == 0:
        raise ValueError("residual_variance needs at least one value")
    # numpy's sum is pairwise, so the result does not depend on chunking
    return float(np.sum(a * a) / a.size)

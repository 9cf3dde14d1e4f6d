"""Identification and estimation of a latent group effect from a calibrated probability score."""

from .core import (
    DerivedQuantities,
    LatentGapError,
    NonIdentifiedError,
    NuisancePair,
    ObservedSample,
    derive,
    residual_variance,
)
from .dgp import DgpConfig, LatentSample, finite_support_distribution, generate, true_nuisances
from .estimators import (
    Method,
    ScoreKind,
    TauEstimate,
    gateaux_derivative,
    hard_threshold_gap,
    oracle_tau,
    orthogonal_tau,
    plugin_tau,
    sandwich_se,
    score_values,
)
from .harness import CellReport, CellSpec, qq_data, run_cell
from .nuisance import fit_nuisances, kfold_split, poly_features, ridge_fit

__version__ = "0.1.0"

"""Patchwork kriging: scalable Gaussian process regression by stitching
local GPs together with zero-valued boundary pseudo-observations."""

from .errors import (
    ConfigurationError,
    FactorizationError,
    FitError,
    InputError,
    NumericalError,
    OptimizationError,
    PatchworkError,
    SamplingError,
    SizeError,
    StateError,
)
from .kernels import Family, HyperParams, KernelSpec
from .likelihood import NLState, neg_log_marginal, optimize_hyperparams
from .metrics import MetricReport, boundary_metrics, evaluate_predictions, mse, nlpd
from .model import PatchworkModel, fit, predict, predict_on_boundary
from .partition import BoundarySet, SpatialTree, adjacency, build_tree, place_pseudo_points
from .reference import dense_augmented_predict, dense_nl, exact_gp_predict
from .simulate import SimSpec, benchmark_prediction_targets, sample_gp_at, sample_gp_dataset

__version__ = "0.1.0"

__all__ = [
    "BoundarySet",
    "ConfigurationError",
    "FactorizationError",
    "Family",
    "FitError",
    "HyperParams",
    "InputError",
    "KernelSpec",
    "MetricReport",
    "NLState",
    "NumericalError",
    "OptimizationError",
    "PatchworkError",
    "PatchworkModel",
    "SamplingError",
    "SimSpec",
    "SizeError",
    "SpatialTree",
    "StateError",
    "adjacency",
    "benchmark_prediction_targets",
    "boundary_metrics",
    "build_tree",
    "dense_augmented_predict",
    "dense_nl",
    "evaluate_predictions",
    "exact_gp_predict",
    "fit",
    "mse",
    "neg_log_marginal",
    "nlpd",
    "optimize_hyperparams",
    "place_pseudo_points",
    "predict",
    "predict_on_boundary",
    "sample_gp_at",
    "sample_gp_dataset",
]

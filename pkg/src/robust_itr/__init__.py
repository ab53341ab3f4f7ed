"""Robust-regression estimation of individualized treatment rules."""

__version__ = "0.1.0"

from .data import Dataset, FeatureMap, ModelSpec, design_matrix, design_row, load_csv, save_csv
from .errors import (
    EstimatorError,
    ScenarioError,
    SchemaError,
    SingularDesignError,
    SolverError,
    UndefinedValueError,
)
from .inference import asymptotic_covariance_pinball, bootstrap
from .learners import FittedModel, fit_lsa, fit_q_learning, fit_rr, predict_contrast
from .losses import LossSpec
from .policy import TreatmentRule, TruthModel, decide, delta_metrics, pcd, value_mean, value_quantile
from .simulation import Scenario, generate, run_cell
from .solver import SolverConfig, minimize
from .value import ValueEstimate, aipwe, ipwe

__all__ = [
    "Dataset", "FeatureMap", "ModelSpec", "design_matrix", "design_row", "load_csv", "save_csv",
    "EstimatorError", "ScenarioError", "SchemaError", "SingularDesignError", "SolverError",
    "UndefinedValueError", "asymptotic_covariance_pinball", "bootstrap", "FittedModel", "fit_lsa",
    "fit_q_learning", "fit_rr", "predict_contrast", "LossSpec", "TreatmentRule", "TruthModel",
    "decide", "delta_metrics", "pcd", "value_mean", "value_quantile", "Scenario", "generate",
    "run_cell", "SolverConfig", "minimize", "ValueEstimate", "aipwe", "ipwe",
]

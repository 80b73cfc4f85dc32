"""Sparse group lasso regularization paths for dense and sparse designs."""

from .groups import GroupStructure
from .linalg import DenseMatrix, SparseColumnMatrix, as_design
from .model import SolutionPath, coef_at, path_summary, predict
from .penalty import PenaltyParams, objective
from .solver import Family, FitConfig, fit_path, lambda_max, lambda_sequence

__version__ = "0.1.0"

__all__ = [
    "GroupStructure",
    "DenseMatrix",
    "SparseColumnMatrix",
    "as_design",
    "SolutionPath",
    "coef_at",
    "path_summary",
    "predict",
    "PenaltyParams",
    "objective",
    "Family",
    "FitConfig",
    "fit_path",
    "lambda_max",
    "lambda_sequence",
]

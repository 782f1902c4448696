"""Locally sparse reconstruction with the l1,inf penalty and a double-split ADMM."""

from .admm import SolverParams, SolveReport, debias_on_support, solve
from .dictionary import build_kinetic_dictionary, mutual_incoherence, normalize_columns
from .model import (CoefficientMatrix, ContractError, Conv2dOperator, DenseOperator,
                    DictionaryMatrix, apply_forward, norm_l1_inf)
from .projection import RowProjectionParams, project_matrix, project_row
from .recovery import extract_support, predict_asymptotic_support

__all__ = [
    "CoefficientMatrix", "ContractError", "Conv2dOperator", "DenseOperator", "DictionaryMatrix",
    "RowProjectionParams", "SolveReport", "SolverParams", "apply_forward",
    "build_kinetic_dictionary", "debias_on_support", "extract_support", "mutual_incoherence",
    "norm_l1_inf", "normalize_columns", "predict_asymptotic_support", "project_matrix",
    "project_row", "solve",
]

"""Fairness-constrained score transformation via a low-dimensional convex dual."""

from .constraints import ConstraintSpec, ProbabilityEstimates
from .core_transform import binary_cross_entropy, g_grad, g_hess, g_value, transform_score
from .data import Dataset, load_dataset
from .dual_solver import AdmmConfig, DualSolution, solve_dual_admm, solve_dual_admm_alt
from .pipeline import FstModel, fit, fit_batch, preprocess, select_threshold, transform

__version__ = "0.1.0"

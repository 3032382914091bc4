"""Online nonnegative matrix factorization with general divergences."""

__version__ = "0.1.0"

from .batch import BatchReport, run_batch
from .coeff_solver import SolveReport, StepPolicy, solve_h, solve_h_batch
from .datagen import SampleStream, SyntheticSpec, make_stream
from .divergence import DivergenceSpec, eval_div, grad_y, parse_divergence
from .geometry import CoeffConstraint, DictConstraint, project_C, project_H, simplex_project
from .online import ExperimentConfig, LossTrace, StepSchedule, run_online

__all__ = [
    "BatchReport", "CoeffConstraint", "DictConstraint", "DivergenceSpec", "ExperimentConfig",
    "LossTrace", "SampleStream", "SolveReport", "StepPolicy", "StepSchedule", "SyntheticSpec",
    "eval_div", "grad_y", "make_stream", "parse_divergence", "project_C", "project_H",
    "run_batch", "run_online", "simplex_project", "solve_h", "solve_h_batch",
]

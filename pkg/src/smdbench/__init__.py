"""Scalable bilevel test problems, a problem construction kit and a nested evolutionary solver."""

from .core import (BilevelVector, Bounds, Dims, DimensionError, DomainError, EvalOutcome,
                   clamp_to_bounds, split, total_violation)
from .smd import (ProblemId, ProblemInstance, contour_grid, evaluate, instantiate, known_optimum,
                  psi_reference)
from .solver import GAConfig, NestedBilevelGA, SolveResult, lower_optimize, solve
from .construction import (ComponentFunction, InteractionMode, StackelbergParams,
                           apply_interaction, compose, multi_global_lower, stackelberg_optimum,
                           stackelberg_problem)
from .bench import RunRecord, RunSpec, SummaryTable, run_suite, summarize

__version__ = "0.1.0"

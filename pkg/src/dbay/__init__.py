"""Distributed Bayesian optimisation for continuous DCOPs."""

from .acquisition import AcquisitionParams, LipschitzModel, bayes_optimize, expected_improvement, select_next_sample
from .baselines import GridSearchSolver, dpop_solve, exhaustive_solve, make_grid
from .benchmark import generate_problem, grid_utility, relative_utility, run_experiment
from .dcop import (
    ContinuousDomain,
    DcopInstance,
    Operator,
    UtilityFunction,
    build_constraint_graph,
    build_pseudo_forest,
    build_pseudo_tree,
    evaluate_objective,
)
from .gp import DirichletGPRegressor, DirichletKernel, ObservationSet, posterior_interval
from .runtime import DBaySolver, run_to_completion

__version__ = "0.1.0"

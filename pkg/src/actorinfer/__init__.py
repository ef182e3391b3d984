"""Bayesian actor models for log-normal reproduction tasks: forward
simulation, amortized optimal actions, and full posterior inference over
actor parameters from behavior."""

__version__ = "0.1.0"

from .actor import (
    ActorParams,
    AsymmetricQuadratic,
    Dataset,
    PosteriorBelief,
    Quadratic,
    QuadraticWithEffort,
    Trial,
    closed_form_action,
    cost,
    make_cost,
    optimal_action_quadratic,
    optimal_action_quadratic_effort,
    posterior,
    sample_posterior_state,
    sample_response,
    simulate_trials,
)
from .backends import backend_name
from .oracle import EvaluationSet, OracleConfig, build_evaluation_set, expected_loss, solve_optimal_action

__all__ = [
    "ActorParams",
    "AsymmetricQuadratic",
    "Dataset",
    "EvaluationSet",
    "OracleConfig",
    "PosteriorBelief",
    "Quadratic",
    "QuadraticWithEffort",
    "Trial",
    "backend_name",
    "build_evaluation_set",
    "closed_form_action",
    "cost",
    "expected_loss",
    "make_cost",
    "optimal_action_quadratic",
    "optimal_action_quadratic_effort",
    "posterior",
    "sample_posterior_state",
    "sample_response",
    "simulate_trials",
    "solve_optimal_action",
    "__version__",
]

"""Hyperparameter optimization with pluggable proposers.

Proposers share one contract (``propose(space, history, budget, step)``), so
LLM prompting loops, random search, GP-EI Bayesian optimization, replayed
traces, and hybrids are interchangeable in the tuning loop and in benchmarks.
"""

from hpokit.space import (
    Config,
    ParamSpec,
    SearchSpace,
    ValidationErrors,
    builtin_space,
    canonical_json,
    describe,
    load_space,
    sample,
    toy_space,
    validate,
)
from hpokit.proposers import History, Trial, best_so_far

__all__ = [
    "Config",
    "ParamSpec",
    "SearchSpace",
    "ValidationErrors",
    "builtin_space",
    "canonical_json",
    "describe",
    "load_space",
    "sample",
    "toy_space",
    "validate",
    "History",
    "Trial",
    "best_so_far",
]

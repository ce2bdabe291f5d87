"""Generic stochastic reward nets and their CTMC expansion."""
from .expand import Ctmc, conserve_tokens_check, expand_reachability
from .export import read_edge_list, write_edge_list
from .net import (
    ImmediateTransition,
    Place,
    SrnModel,
    TimedTransition,
    validate_model,
)

__all__ = [
    "Ctmc",
    "ImmediateTransition",
    "Place",
    "SrnModel",
    "TimedTransition",
    "conserve_tokens_check",
    "expand_reachability",
    "read_edge_list",
    "validate_model",
    "write_edge_list",
]

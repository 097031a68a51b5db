"""Implicit recurrent neural networks: fixed-point layers trained by
backpropagation through the equilibrium."""

from .equilibrium import Equilibrium, SolverConfig, TwoLayerEquilibrium, solve_one_layer, solve_two_layer
from .networks import (
    FeedForwardParams,
    OneLayerParams,
    TwoLayerParams,
    init_feedforward,
    init_one_layer,
    init_two_layer,
    load_model,
    save_model,
)

__all__ = [
    "Equilibrium",
    "FeedForwardParams",
    "OneLayerParams",
    "SolverConfig",
    "TwoLayerEquilibrium",
    "TwoLayerParams",
    "init_feedforward",
    "init_one_layer",
    "init_two_layer",
    "load_model",
    "save_model",
    "solve_one_layer",
    "solve_two_layer",
]

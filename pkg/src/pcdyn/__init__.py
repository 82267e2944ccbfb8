"""Predictive-coding feedback dynamics on small convolutional classifiers."""

from . import (
    attacks,
    corruption,
    data,
    gradcheck,
    harness,
    hyperparams,
    network,
    optim,
    pcoder,
    tensor,
    training,
)

__all__ = [
    "tensor",
    "optim",
    "gradcheck",
    "hyperparams",
    "pcoder",
    "network",
    "corruption",
    "data",
    "training",
    "attacks",
    "harness",
]
__version__ = "0.1.0"

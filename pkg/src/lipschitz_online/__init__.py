"""Online prediction on beta-mixing Markov sources with Lipschitz-constrained ERM.

Submodules
----------
processes
    Finite-state Markov chains of order ``d``, clamped AR sources, sampling and
    exact mixing coefficients.
oracle
    Exact optimal risk ``L*`` by context enumeration.
lipschitz_fit
    Lipschitz-constrained ERM (anchored envelope fit and spectrally capped MLP).
blocking
    Independent-block partitions, uniform deviations and tail bounds.
harness
    The online game loop and its strategies.
cli
    Experiment runner (``lipschitz-online``).
"""

from . import blocking, harness, lipschitz_fit, losses, oracle, processes
from .errors import (
    ConfigError,
    LipschitzOnlineError,
    NoConvergence,
    NotErgodic,
    NumericError,
    RowSumError,
    ValidationError,
)
from .losses import LossFn, make_loss

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "LipschitzOnlineError",
    "LossFn",
    "NoConvergence",
    "NotErgodic",
    "NumericError",
    "RowSumError",
    "ValidationError",
    "blocking",
    "harness",
    "lipschitz_fit",
    "losses",
    "make_loss",
    "oracle",
    "processes",
]

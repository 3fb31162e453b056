"""Filtering of an Ornstein-Uhlenbeck drift from returns and expert opinions.

Submodules
----------
matops
    Symmetric matrix primitives.
model
    Market model, drift moments and path simulation.
filters
    Conditional covariance and mean for the regimes R, E, C and F.
riccati
    Algebraic Riccati and Lyapunov equations.
asymptotics
    Decay in the number of experts and limit cycles.
portfolio
    Log-utility strategy, value function, efficiency and Monte Carlo.
config, cli
    Experiment configuration files and the ``driftfilter`` command.
"""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, DriftFilterError, NotPSDError, NumericError
from .model import ExpertSchedule, InterestRate, MarketModel

__all__ = [
    "__version__",
    "ConfigError",
    "ConvergenceError",
    "DriftFilterError",
    "NotPSDError",
    "NumericError",
    "ExpertSchedule",
    "InterestRate",
    "MarketModel",
]

"""Driven interfaces in quenched obstacle fields.

Simulators for the discrete lattice model and the continuum semilinear
equation, closed-form velocity lower bounds, and the path-ensemble checks
behind them.
"""

__version__ = "0.1.0"

from .bounds import (beta_tilde_180, beta_tilde_generic, gamma, p, positivity_threshold,
                     v_bound, w_bound, wbar)
from .errors import (ConfigError, DivergenceError, DomainError, PreconditionError,
                     SimulationError, WindowTooNarrowError)
from .field import (BumpProfile, ObstacleField, ObstacleLattice, StrengthDistribution,
                    exp_moment)

__all__ = [
    "BumpProfile", "ConfigError", "DivergenceError", "DomainError", "ObstacleField",
    "ObstacleLattice", "PreconditionError", "SimulationError", "StrengthDistribution",
    "WindowTooNarrowError", "beta_tilde_180", "beta_tilde_generic", "exp_moment", "gamma", "p",
    "positivity_threshold", "v_bound", "w_bound", "wbar",
]

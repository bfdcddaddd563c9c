"""Toolkit for simulating and verifying sums of multi-argument observables
evaluated along sparse index families of a mixing stationary process.

Subpackages cover process models and mixing coefficients, index-family
geometry, observables and their telescoping decomposition, cumulant
machinery, a martingale approximation of the partial sums, closed-form
deviation bounds, and a Monte Carlo engine that checks each bound against
simulation at desk scale.
"""

from nonconv.errors import BudgetError, CheckFailure, ConfigError, OutOfWindowError

__version__ = "0.1.0"

__all__ = [
    "BudgetError",
    "CheckFailure",
    "ConfigError",
    "OutOfWindowError",
    "__version__",
]

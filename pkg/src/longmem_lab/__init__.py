"""Residual empirical processes of long- and short-memory linear processes.

Modules
-------
linproc
    Linear-process simulation, autocovariances, ``sigma_n`` and the marginal law.
models
    Regression with intercept and unstable autoregressions: simulation and least squares.
empirics
    Empirical and residual empirical processes, sup statistics, local Whittle.
limitlaws
    Fractional Brownian motion and sampled limit functionals.
harness
    Experiment orchestration used by the ``longmem-lab`` command.
"""
from .errors import ConfigurationError, DomainError, EstimationError, LongMemError, NumericalError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "LongMemError",
    "ValidationError",
    "DomainError",
    "ConfigurationError",
    "EstimationError",
    "NumericalError",
]

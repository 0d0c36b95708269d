"""Dependence analytics for hourly power-market panels.

The package fits AR-GARCH marginal models with calendar dummies to
hour-sliced daily series, couples the standardized residuals through
regular vine copulas, and measures joint tail behaviour with
Kendall-function based conditional tail coefficients.
"""

__version__ = "0.1.0"

from . import bicop, counting, data_ingest, errors, marginals, pipeline, taildep, vine

__all__ = [
    "__version__",
    "bicop",
    "counting",
    "data_ingest",
    "errors",
    "marginals",
    "pipeline",
    "taildep",
    "vine",
]

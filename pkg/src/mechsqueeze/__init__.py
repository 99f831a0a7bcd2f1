"""Optimal estimation of a continuously measured mechanical oscillator.

Submodules: :mod:`params`, :mod:`conditional`, :mod:`wiener`,
:mod:`riccati`, :mod:`montecarlo` and :mod:`cli`.
"""

__version__ = "0.1.0"

from .conditional import (
    ConditionalCovariance,
    ModelValidityWarning,
    conditional_covariance,
    optimal_quadrature,
    purity,
    rwa_baseline,
    wigner,
)
from .params import (
    DerivedQuantities,
    OscillatorParams,
    Regime,
    classify,
    derive,
    squeezing_threshold,
    thermal_occupancy,
)

__all__ = [
    "__version__",
    "ConditionalCovariance",
    "ModelValidityWarning",
    "conditional_covariance",
    "optimal_quadrature",
    "purity",
    "rwa_baseline",
    "wigner",
    "DerivedQuantities",
    "OscillatorParams",
    "Regime",
    "classify",
    "derive",
    "squeezing_threshold",
    "thermal_occupancy",
]

"""Record spectra, spectral factorisation and causal Wiener filters."""

from .excess import (
    ExcessNoiseModel,
    PinkNoiseStudy,
    clean_squeezing_crossing,
    excess_conditional_covariance,
    excess_position_filter,
    excess_squeezing_threshold,
    pink_noise_study,
)
from .filters import (
    FilterCoefficients,
    FilterResponse,
    ImpulseResponse,
    NonConvergentIntegralError,
    causal_part,
    cross_spectrum,
    default_grid,
    error_covariance,
    error_variance,
    fit_filter_coefficients,
    measured_factor,
    measured_spectrum,
    mechanical_spectrum,
    momentum_cross_spectrum,
    momentum_filter,
    momentum_spectrum,
    oscillator_poles,
    position_filter,
    position_momentum_spectrum,
    spectral_factor,
    wiener_from_spectra,
)
from .rational import PartialFractions, RationalSpectrum
from .tables import SpectrumTable, frequency_grid, read_table_csv, write_table_csv

__all__ = [
    "ExcessNoiseModel",
    "PinkNoiseStudy",
    "clean_squeezing_crossing",
    "excess_conditional_covariance",
    "excess_position_filter",
    "excess_squeezing_threshold",
    "pink_noise_study",
    "FilterCoefficients",
    "FilterResponse",
    "ImpulseResponse",
    "NonConvergentIntegralError",
    "causal_part",
    "cross_spectrum",
    "default_grid",
    "error_covariance",
    "error_variance",
    "fit_filter_coefficients",
    "measured_factor",
    "measured_spectrum",
    "mechanical_spectrum",
    "momentum_cross_spectrum",
    "momentum_filter",
    "momentum_spectrum",
    "oscillator_poles",
    "position_filter",
    "position_momentum_spectrum",
    "spectral_factor",
    "wiener_from_spectra",
    "PartialFractions",
    "RationalSpectrum",
    "SpectrumTable",
    "frequency_grid",
    "read_table_csv",
    "write_table_csv",
]

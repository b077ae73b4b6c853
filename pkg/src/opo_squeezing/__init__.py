"""Squeezed-light OPO modelling, parameter estimation and noise analysis."""

__version__ = "0.1.0"

from .physics import (  # noqa: E402
    CavityCharacter,
    CavityGeometry,
    DomainError,
    LossBudget,
    characterize,
    db_from_ratio,
    escape_efficiency,
    finesse,
    free_spectral_range,
    ratio_from_db,
    total_efficiency,
)
from .opo_model import (  # noqa: E402
    REFERENCE_PARAMS,
    OpoModelParams,
    Quadrature,
    SpectrumTrace,
    max_detected_squeezing,
    parametric_gain,
    quadrature_variance,
    spectrum,
)
from .estimation import (  # noqa: E402
    ExclusionBand,
    FitResult,
    GainMeasurement,
    correct_electronic_noise,
    fit_gain,
    fit_power_sweep,
    fit_spectra,
    least_squares,
)
from .noise_analysis import TimeSeries, normalize_fractional, oadev, welch_psd  # noqa: E402

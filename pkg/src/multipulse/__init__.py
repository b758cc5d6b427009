"""Coherence decay of a two-level system under trains of ideal pi pulses."""
from .analysis import (
    AsymptoteReport,
    DecayFit,
    SweepResult,
    SweepRow,
    effective_t2_formula,
    find_peaks,
    fit_decay,
    fit_decay_time,
    sweep_tau_s,
    verify_asymptote,
)
from .cumulant import CumulantEngine, DephasingRate, asymptotic_rate, s_from_correlation, s_from_spectrum
from .errors import ConfigError, DomainError, FitError, QuadratureError
from .models import (
    CaldeiraLeggettDensity,
    ExponentialCorrelation,
    GaussianCouplingDensity,
    LinearBosonModel,
    QuadraticBosonModel,
    SpectrumGrid,
    ThermalConfig,
    bose_occupation,
    linear_spectrum,
    quadratic_correlation,
    quadratic_spectrum,
)
from .pulsecontrol import (
    CoefficientSeries,
    DecayCurve,
    IrregularTrain,
    PulseTrain,
    coefficients,
    filter_oracle,
    intensity_curve,
    log_intensity,
    log_intensity_closed_exp,
    stroboscopic_curve,
)
from .quadrature import QuadratureConfig

__version__ = "0.1.0"

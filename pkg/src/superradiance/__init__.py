"""Higher-order photon correlations of independent emitters in the far field.

Closed forms, exact quantum engines, Monte Carlo speckle synthesis and a
camera-frame measurement pipeline for directional emission from N
single-photon, thermal or coherent sources.
"""
from .analytic import (
    analytic_curve,
    g_spe_coincident,
    g_tls_coincident,
    peak_fwhm,
    visibility_spe,
    visibility_tls,
)
from .estimator import (
    FitResult,
    FrameCorrelator,
    FrameStack,
    OffsetPrefactorRegressor,
    correlate_frames,
    curve_metrics,
    fit_offset_prefactor,
    synthesize_frames,
)
from .exceptions import DegenerateDesignError, DomainError, NumericalError, ResourceError
from .model import (
    CorrelationCurve,
    DetectorSet,
    EmitterChain,
    detector_phase,
    grating_factor,
    phase_difference,
)
from .quantum import g_spe_permanent, g_spe_statevector, permanent
from .stochastic import gaussian_moment_oracle, mc_correlation

__version__ = "0.1.0"

__all__ = [
    "CorrelationCurve",
    "DegenerateDesignError",
    "DetectorSet",
    "DomainError",
    "EmitterChain",
    "FitResult",
    "FrameCorrelator",
    "FrameStack",
    "NumericalError",
    "OffsetPrefactorRegressor",
    "ResourceError",
    "analytic_curve",
    "correlate_frames",
    "curve_metrics",
    "detector_phase",
    "fit_offset_prefactor",
    "g_spe_coincident",
    "g_spe_permanent",
    "g_spe_statevector",
    "g_tls_coincident",
    "gaussian_moment_oracle",
    "grating_factor",
    "mc_correlation",
    "peak_fwhm",
    "permanent",
    "phase_difference",
    "synthesize_frames",
    "visibility_spe",
    "visibility_tls",
]

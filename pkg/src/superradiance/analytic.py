"""Closed-form correlation functions for the coincident detector geometry.

``m - 1`` detectors sit at ``theta1`` and one detector scans ``theta2``. Both
single-photon emitters and thermal sources then give a constant baseline plus
an N-slit grating pattern; only the baseline differs, which fixes the
visibility.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .exceptions import DomainError
from .model import (
    CorrelationCurve,
    EmitterChain,
    as_angle_array,
    grating_factor,
    phase_difference,
)


@dataclass(frozen=True)
class ModelPrediction:
    """Two-term structure ``baseline + modulation * grating / N**2``."""

    value: float
    baseline: float
    modulation_amplitude: float


def _check_order(m):
    if int(m) != m or m < 1:
        raise DomainError(f"order m must be a positive integer, got {m}")
    return int(m)


def _require(chain: EmitterChain, model: str):
    if chain.source_model != model:
        raise DomainError(
            f"expected a {model.upper()} chain, got {chain.source_model.upper()}"
        )


def spe_components(n: int, m: int):
    """Baseline and modulation amplitude for N single-photon emitters."""
    m = _check_order(m)
    if m > n:
        raise DomainError(f"SPE correlation of order {m} > N={n} vanishes identically")
    return (n - m) / n, (m - 1) / 1.0


def tls_components(n: int, m: int, absolute_scale: bool = False):
    """Baseline and modulation amplitude for N thermal sources."""
    m = _check_order(m)
    scale = factorial(m - 1) if absolute_scale else 1
    return float(scale), float(scale * (m - 1))


def _evaluate(baseline, modulation, chain, theta1, theta2):
    n = chain.n_sources
    delta = phase_difference(theta1, theta2, chain.spacing_kd)
    return baseline + modulation * grating_factor(delta, n) / n**2


def g_spe_coincident(chain: EmitterChain, m: int, theta1, theta2):
    """Order-``m`` correlation of N initially excited two-level atoms.

    Returns ``(N - m)/N + (m - 1)/N**2 * grating_factor``; this is the mean
    intensity pattern of a symmetric Dicke state with ``N - m + 1``
    excitations. Vectorized over ``theta2``.
    """
    _require(chain, "spe")
    baseline, modulation = spe_components(chain.n_sources, m)
    return _evaluate(baseline, modulation, chain, theta1, theta2)


def g_tls_coincident(chain: EmitterChain, m: int, theta1, theta2, absolute_scale=False):
    """Order-``m`` correlation of N independent thermal sources.

    With ``absolute_scale`` the result is multiplied by ``(m - 1)!``, which is
    the value the normalized intensity-moment estimator converges to.
    """
    _require(chain, "tls")
    baseline, modulation = tls_components(chain.n_sources, m, absolute_scale)
    return _evaluate(baseline, modulation, chain, theta1, theta2)


def predict(chain: EmitterChain, m: int, theta1: float, theta2: float,
            absolute_scale: bool = False) -> ModelPrediction:
    if chain.source_model == "spe":
        baseline, modulation = spe_components(chain.n_sources, m)
    elif chain.source_model == "tls":
        baseline, modulation = tls_components(chain.n_sources, m, absolute_scale)
    else:
        raise DomainError("no closed form for coherent sources; use the Monte Carlo engine")
    value = float(_evaluate(baseline, modulation, chain, theta1, theta2))
    return ModelPrediction(value, baseline, modulation)


def visibility_spe(n: int, m: int) -> float:
    m = _check_order(m)
    if n < 2:
        raise DomainError("visibility needs at least two emitters")
    if m > n:
        raise DomainError(f"order {m} exceeds N={n} for single-photon emitters")
    return (m - 1) / (m + 1 - 2 * m / n)


def visibility_tls(m: int) -> float:
    m = _check_order(m)
    return (m - 1) / (m + 1)


def peak_fwhm(chain: EmitterChain) -> float:
    """Approximate angular width of the central peak, ``2*pi/(N*kd)``."""
    if chain.n_sources < 2:
        raise DomainError("a single emitter has no interference peak")
    return 2 * np.pi / (chain.n_sources * chain.spacing_kd)


def analytic_curve(chain: EmitterChain, m: int, theta1: float, grid,
                   normalization: str = "raw", absolute_scale: bool = False) -> CorrelationCurve:
    """Sample the closed form for ``chain`` over a grid of ``theta2``."""
    grid = as_angle_array(grid)
    if chain.source_model == "spe":
        values = g_spe_coincident(chain, m, theta1, grid)
    elif chain.source_model == "tls":
        values = g_tls_coincident(chain, m, theta1, grid, absolute_scale)
    else:
        raise DomainError("no closed form for coherent sources; use the Monte Carlo engine")
    meta = {
        "n_sources": chain.n_sources,
        "m": int(m),
        "theta1": float(theta1),
        "kd": float(chain.spacing_kd),
        "source_model": chain.source_model,
        "engine": "analytic",
        "absolute_scale": bool(absolute_scale),
    }
    curve = CorrelationCurve(grid, np.atleast_1d(values), meta=meta)
    if normalization == "max-normalized":
        return curve.max_normalized()
    if normalization != "raw":
        raise DomainError(f"unsupported normalization {normalization!r}")
    return curve

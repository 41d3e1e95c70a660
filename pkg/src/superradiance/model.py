"""Geometry of a linear emitter chain observed in the far field.

All quantities are reduced to the dimensionless pair ``(kd, theta)``: the
phase a photon picks up when it leaves source ``l`` and reaches a detector at
angle ``theta`` is ``-l * kd * sin(theta)``. Absolute distances never enter.

Angles are radians throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DomainError

SOURCE_MODELS = ("spe", "tls", "cls")
NORMALIZATIONS = ("raw", "max-normalized", "baseline-normalized")

# |sin(delta/2)| below this is treated as the removable singularity of the
# grating factor; the second-order error there is < 1e-16 * n**4.
SINGULAR_THRESHOLD = 1e-9


@dataclass(frozen=True)
class EmitterChain:
    """N identical, equally spaced emitters along a line.

    Parameters
    ----------
    n_sources : int
        Number of emitters ``N``.
    spacing_kd : float
        Product of wave number and emitter spacing.
    source_model : {"spe", "tls", "cls"}
        Single-photon emitters (two-level atoms), thermal sources with
        circular Gaussian field statistics, or coherent sources with fixed
        modulus and random phase.
    mean_intensity : float
        Mean intensity per thermal source.
    amplitude : float
        Field modulus per coherent source.
    """

    n_sources: int
    spacing_kd: float = np.pi
    source_model: str = "spe"
    mean_intensity: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        model = str(self.source_model).lower()
        object.__setattr__(self, "source_model", model)
        if model not in SOURCE_MODELS:
            raise DomainError(f"unknown source model {self.source_model!r}")
        if int(self.n_sources) != self.n_sources or self.n_sources < 1:
            raise DomainError(f"n_sources must be a positive integer, got {self.n_sources}")
        object.__setattr__(self, "n_sources", int(self.n_sources))
        if not np.isfinite(self.spacing_kd) or self.spacing_kd <= 0:
            raise DomainError(f"spacing_kd must be positive, got {self.spacing_kd}")
        if not self.mean_intensity > 0:
            raise DomainError("mean_intensity must be positive")
        if not self.amplitude > 0:
            raise DomainError("amplitude must be positive")

    @property
    def positions(self) -> np.ndarray:
        """Source indices ``1..N`` (positions in units of the spacing)."""
        return np.arange(1, self.n_sources + 1)

    def to_dict(self) -> dict:
        return {
            "n_sources": self.n_sources,
            "spacing_kd": float(self.spacing_kd),
            "source_model": self.source_model,
            "mean_intensity": float(self.mean_intensity),
            "amplitude": float(self.amplitude),
        }


@dataclass(frozen=True)
class DetectorSet:
    """Ordered far-field detection angles, one per detected photon."""

    angles: tuple

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.angles))
        if len(angles) < 1:
            raise DomainError("at least one detector is required")
        if not all(np.isfinite(angles)):
            raise DomainError("detector angles must be finite")
        object.__setattr__(self, "angles", angles)

    @property
    def order(self) -> int:
        return len(self.angles)

    @classmethod
    def coincident(cls, theta1: float, theta2: float, m: int) -> "DetectorSet":
        """``m - 1`` detectors at ``theta1`` and the last one at ``theta2``."""
        if m < 1:
            raise DomainError(f"order must be >= 1, got {m}")
        return cls(tuple([theta1] * (m - 1) + [theta2]))


@dataclass
class CorrelationCurve:
    """Sampled correlation function versus the scanned detector angle.

    ``replicates`` optionally holds one independent estimate of the whole
    curve per batch (shape ``(batches, len(theta2))``); statistics of derived
    quantities such as visibility are taken from their spread.
    """

    theta2: np.ndarray
    values: np.ndarray
    stderr: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)
    replicates: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.theta2 = np.asarray(self.theta2, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.theta2.shape != self.values.shape or self.values.ndim != 1:
            raise DomainError("theta2 and values must be 1-D arrays of equal length")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)
            if self.stderr.shape != self.values.shape:
                raise DomainError("stderr must match values in length")
            if np.any(self.stderr < 0):
                raise DomainError("stderr must be nonnegative")
        if np.any(self.values < 0):
            raise DomainError("correlation values must be nonnegative")
        if self.replicates is not None:
            self.replicates = np.asarray(self.replicates, dtype=float)
            if self.replicates.ndim != 2 or self.replicates.shape[1] != self.values.size:
                raise DomainError("replicates must have shape (batches, len(values))")
        self.meta = dict(self.meta)
        self.meta.setdefault("normalization", "raw")
        if self.meta["normalization"] not in NORMALIZATIONS:
            raise DomainError(f"unknown normalization tag {self.meta['normalization']!r}")

    def __len__(self):
        return self.values.size

    def max_normalized(self) -> "CorrelationCurve":
        peak = self.values.max()
        if peak <= 0:
            raise DomainError("cannot max-normalize an all-zero curve")
        stderr = None if self.stderr is None else self.stderr / peak
        reps = None if self.replicates is None else self.replicates / peak
        meta = dict(self.meta, normalization="max-normalized")
        return CorrelationCurve(self.theta2.copy(), self.values / peak, stderr, meta, reps)


def detector_phase(source_index, theta, kd, n_sources=None):
    """Optical phase of a photon from source ``l`` seen at angle ``theta``.

    The phase is measured relative to a photon emitted at the origin and
    equals ``-l * kd * sin(theta)``. Passing ``n_sources`` also bounds the
    index from above.
    """
    source_index = np.asarray(source_index)
    if np.any(source_index < 1) or (n_sources is not None and np.any(source_index > n_sources)):
        raise DomainError(f"source index out of range: {source_index}")
    return -source_index * kd * np.sin(theta)


def phase_difference(theta1, theta2, kd):
    """Phase offset between the reference and the scanned detector.

    Equals ``phi_11 - phi_12 = kd * (sin(theta2) - sin(theta1))``.
    """
    return kd * (np.sin(theta2) - np.sin(theta1))


def grating_factor(delta, n: int):
    """N-slit interference factor ``sin^2(n*delta/2) / sin^2(delta/2)``.

    Bounded by ``n**2``, which is returned at the removable singularities
    ``delta = 2*pi*q``. Accepts scalars or arrays.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    delta = np.asarray(delta, dtype=float)
    if n == 1:
        out = np.ones_like(delta)
        return out[()] if out.ndim == 0 else out
    half = np.sin(delta / 2.0)
    singular = np.abs(half) < SINGULAR_THRESHOLD
    safe = np.where(singular, 1.0, half)
    out = np.where(singular, float(n * n), np.sin(n * delta / 2.0) ** 2 / safe**2)
    out = np.clip(out, 0.0, float(n * n))
    return out[()] if out.ndim == 0 else out


def as_angle_array(angles: Sequence[float]) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(angles, dtype=float))
    if arr.size == 0:
        raise DomainError("angle grid must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError("angle grid must be finite")
    return arr

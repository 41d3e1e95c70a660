"""Synthetic camera frames, frame correlation and the two-parameter fit.

A camera row in the Fourier plane maps pixel ``p`` to a far-field angle.
Every frame is one speckle realization; the normalized m-th order
correlation with ``m - 1`` photons at a reference pixel is

    g(p) = <I_ref^(m-1) I_p> / (<I_ref>^(m-1) <I_p>)

averaged over frames, with batch-means standard errors.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import DegenerateDesignError, DomainError, NumericalError
from .model import CorrelationCurve, EmitterChain, as_angle_array
from .stochastic import (
    BLOCK_SIZE,
    MIN_BATCHES,
    batch_edges,
    farfield_intensity,
    normalized_moment,
    sample_block,
)


@dataclass
class FrameStack:
    """``R`` frames of ``P`` pixel intensities plus the pixel angle map."""

    intensities: np.ndarray
    pixel_angles: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.intensities = np.asarray(self.intensities, dtype=np.float32)
        self.pixel_angles = np.asarray(self.pixel_angles, dtype=float)
        if self.intensities.ndim != 2 or self.intensities.shape[1] != self.pixel_angles.size:
            raise DomainError("intensities must have shape (frames, pixels)")
        if np.any(np.diff(self.pixel_angles) <= 0):
            raise DomainError("pixel angles must be strictly increasing")
        if np.any(self.intensities < 0):
            raise DomainError("intensities must be nonnegative")

    @property
    def frames(self) -> int:
        return self.intensities.shape[0]

    @property
    def pixels(self) -> int:
        return self.intensities.shape[1]

    def nearest_pixel(self, theta: float = 0.0) -> int:
        return int(np.argmin(np.abs(self.pixel_angles - theta)))


@dataclass(frozen=True)
class FitResult:
    offset: float
    prefactor: float
    residual_rms: float
    parameter_stderr: tuple


@dataclass(frozen=True)
class CurveMetrics:
    visibility: float
    fwhm: float
    peak_position: float


def slit_envelope(theta, kd: float, slit_ratio: float):
    """Single-slit diffraction envelope ``sinc^2((a/d) kd sin(theta) / 2)``."""
    beta = slit_ratio * kd * np.sin(theta) / 2.0
    return np.sinc(beta / np.pi) ** 2


def _expected_intensity(chain: EmitterChain) -> float:
    per_source = chain.mean_intensity if chain.source_model == "tls" else chain.amplitude**2
    return chain.n_sources * per_source


def synthesize_frames(chain: EmitterChain, pixel_angles, frames: int, seed: int,
                      envelope: Optional[float] = None, shot_noise: Optional[float] = None,
                      workers: int = 1) -> FrameStack:
    """Render one speckle realization per frame at every pixel angle.

    Parameters
    ----------
    envelope : float, optional
        Slit width over slit spacing; multiplies each frame by the single-slit
        diffraction envelope.
    shot_noise : float, optional
        Mean photon count per pixel at the mean source intensity. Intensities
        are replaced by Poisson counts rescaled back to intensity units.
    """
    if chain.source_model not in ("tls", "cls"):
        raise DomainError("camera frames are synthesized for thermal or coherent sources only")
    if frames < 1:
        raise DomainError("at least one frame is required")
    angles = as_angle_array(pixel_angles)
    kd = chain.spacing_kd
    env = None if envelope is None else slit_envelope(angles, kd, envelope)
    scale = _expected_intensity(chain)

    def render(block):
        lo = block * BLOCK_SIZE
        hi = min(lo + BLOCK_SIZE, frames)
        amps = sample_block(chain, seed, block)[: hi - lo]
        img = farfield_intensity(amps, angles, kd)
        if env is not None:
            img = img * env
        if shot_noise is not None:
            gen = np.random.Generator(np.random.Philox(
                np.random.SeedSequence(seed, spawn_key=(block, 1))))
            img = gen.poisson(img * (shot_noise / scale)) * (scale / shot_noise)
        return img.astype(np.float32)

    blocks = range(-(-frames // BLOCK_SIZE))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(render, blocks))
    else:
        parts = [render(b) for b in blocks]
    meta = {
        "chain": chain.to_dict(),
        "seed": int(seed),
        "frames": int(frames),
        "envelope": envelope,
        "shot_noise": shot_noise,
    }
    return FrameStack(np.concatenate(parts), angles, meta)


def _batch_sums(x: np.ndarray, ref: np.ndarray, m: int):
    # pixel-major layout: every column is reduced the same way whatever the
    # chunking, which keeps results bit-identical across worker counts
    xt = np.ascontiguousarray(x.T, dtype=np.float64)
    scan = xt.sum(axis=1)
    if m == 1:
        return scan, scan
    weight = ref.astype(np.float64) ** (m - 1)
    return (xt * weight).sum(axis=1), scan


def correlate_frames(stack: FrameStack, ref_pixel: Optional[int] = None, m: int = 2,
                     n_batches: int = MIN_BATCHES, workers: int = 1) -> CorrelationCurve:
    """Normalized order-``m`` correlation of every pixel with ``ref_pixel``.

    ``ref_pixel`` defaults to the pixel nearest ``theta = 0``.
    """
    if m < 1:
        raise DomainError(f"order must be >= 1, got {m}")
    if ref_pixel is None:
        ref_pixel = stack.nearest_pixel(0.0)
    if not 0 <= ref_pixel < stack.pixels:
        raise DomainError(f"reference pixel {ref_pixel} outside 0..{stack.pixels - 1}")
    if stack.frames < 2:
        raise DomainError("at least two frames are required")
    n_batches = min(n_batches, stack.frames)
    edges = batch_edges(stack.frames, n_batches)
    data = stack.intensities

    def columns(cols):
        num = np.empty((n_batches, len(cols)))
        scan = np.empty((n_batches, len(cols)))
        for b in range(n_batches):
            rows = slice(edges[b], edges[b + 1])
            num[b], scan[b] = _batch_sums(data[rows, cols], data[rows, ref_pixel], m)
        return num, scan

    chunks = np.array_split(np.arange(stack.pixels), max(1, min(workers, stack.pixels)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(columns, chunks))
    else:
        parts = [columns(c) for c in chunks]
    sum_num = np.concatenate([p[0] for p in parts], axis=1)
    sum_scan = np.concatenate([p[1] for p in parts], axis=1)

    means = sum_scan.sum(axis=0)
    empty = np.flatnonzero(means <= 0)
    if empty.size:
        raise NumericalError(f"zero mean intensity at pixel {int(empty[0])}")

    sum_ref = sum_scan[:, ref_pixel]
    estimate, stderr, replicates = normalized_moment(
        sum_num, sum_ref, sum_scan, np.diff(edges), m)
    if m == 1:
        estimate = np.ones_like(estimate)
        stderr = np.zeros_like(stderr)
    stderr = np.nan_to_num(stderr)
    chain = stack.meta.get("chain", {})
    meta = {
        "n_sources": chain.get("n_sources"),
        "m": int(m),
        "theta1": float(stack.pixel_angles[ref_pixel]),
        "kd": chain.get("spacing_kd"),
        "source_model": chain.get("source_model"),
        "engine": "frames",
        "ref_pixel": int(ref_pixel),
        "frames": stack.frames,
        "normalization": "baseline-normalized",
    }
    return CorrelationCurve(stack.pixel_angles.copy(), estimate, stderr, meta, replicates)


def _fit_arrays(y, t, sigma=None):
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    if not np.all(np.isfinite(w)):
        raise NumericalError("zero standard error in weighted fit")
    sw = w.sum()
    t_bar = (w * t).sum() / sw
    y_bar = (w * y).sum() / sw
    tc = t - t_bar
    stt = (w * tc * tc).sum()
    if stt <= 1e-24 * max(1.0, (w * t * t).sum()):
        raise DegenerateDesignError("template is constant; offset and prefactor are not separable")
    prefactor = (w * tc * (y - y_bar)).sum() / stt
    offset = y_bar - prefactor * t_bar
    resid = y - offset - prefactor * t
    # inverse of [[sw, swt], [swt, swtt]] expressed through the centered sums
    var_pref = 1.0 / stt
    var_off = 1.0 / sw + t_bar**2 / stt
    if sigma is None:
        dof = y.size - 2
        s2 = (resid**2).sum() / dof if dof > 0 else 0.0
        var_pref, var_off = var_pref * s2, var_off * s2
    return offset, prefactor, resid, (np.sqrt(var_off), np.sqrt(var_pref))


def fit_offset_prefactor(data: CorrelationCurve, template: CorrelationCurve,
                         weighted: bool = False) -> FitResult:
    """Least-squares ``data ~ offset + prefactor * template``.

    Unweighted by default; ``weighted=True`` uses inverse squared standard
    errors of ``data``. Parameter errors come from the design covariance,
    scaled by the residual variance in the unweighted case.
    """
    if data.values.shape != template.values.shape or not np.allclose(
            data.theta2, template.theta2, rtol=1e-12, atol=1e-15):
        raise DomainError("data and template must share the same theta2 grid")
    sigma = None
    if weighted:
        if data.stderr is None:
            raise DomainError("weighted fit needs standard errors on the data")
        sigma = data.stderr
    offset, prefactor, resid, stderr = _fit_arrays(data.values, template.values, sigma)
    return FitResult(float(offset), float(prefactor), float(np.sqrt(np.mean(resid**2))),
                     (float(stderr[0]), float(stderr[1])))


def fit_replicates(data: CorrelationCurve, template: CorrelationCurve):
    """Fit every batch replicate; returns the per-batch (offset, prefactor).

    The spread of these pairs gives parameter errors that account for the
    correlation between grid points sharing the same frames.
    """
    if data.replicates is None:
        raise DomainError("curve carries no batch replicates")
    pairs = [_fit_arrays(rep, template.values)[:2] for rep in data.replicates]
    return np.array(pairs)


def visibility(curve: CorrelationCurve) -> float:
    hi, lo = curve.values.max(), curve.values.min()
    return 0.0 if hi + lo == 0 else float((hi - lo) / (hi + lo))


def _is_flat(values) -> bool:
    return np.ptp(values) <= 1e-12 * max(1.0, np.abs(values).max())


def fwhm(curve: CorrelationCurve) -> float:
    """Full width at half height above the curve minimum around the maximum.

    Crossings are located by linear interpolation between bracketing grid
    points.
    """
    x, y = curve.theta2, curve.values
    if _is_flat(y):
        raise NumericalError("FWHM is undefined for a flat curve")
    k = int(np.argmax(y))
    half = y.min() + 0.5 * (y[k] - y.min())

    def crossing(step):
        j = k
        while 0 <= j + step < y.size:
            if y[j + step] < half:
                a, b = j, j + step
                return x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a])
            j += step
        raise NumericalError("peak does not fall to half height inside the grid")

    return float(crossing(1) - crossing(-1))


def peak_position(curve: CorrelationCurve) -> float:
    """Grid maximum refined by the parabola through its neighbours."""
    x, y = curve.theta2, curve.values
    k = int(np.argmax(y))
    if k == 0 or k == y.size - 1:
        return float(x[k])
    coef = np.polyfit(x[k - 1:k + 2] - x[k], y[k - 1:k + 2], 2)
    if coef[0] >= 0:
        return float(x[k])
    return float(x[k] - coef[1] / (2 * coef[0]))


def curve_metrics(curve: CorrelationCurve) -> CurveMetrics:
    if len(curve) == 0:
        raise DomainError("empty curve")
    return CurveMetrics(visibility(curve), fwhm(curve), peak_position(curve))


class OffsetPrefactorRegressor(RegressorMixin, BaseEstimator):
    """Two-parameter linear model ``y = offset_ + prefactor_ * template``.

    ``X`` holds the template values, one sample per row and a single column.

    Parameters
    ----------
    weighted : bool
        Weight samples by ``sample_weight`` (typically inverse variances).
    """

    def __init__(self, weighted=False):
        self.weighted = weighted

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        if X.shape[1] != 1:
            raise DomainError("expected a single template column")
        sigma = None
        if self.weighted:
            if sample_weight is None:
                raise DomainError("weighted fit needs sample_weight")
            sigma = 1.0 / np.sqrt(np.asarray(sample_weight, dtype=float))
        offset, prefactor, resid, stderr = _fit_arrays(y, X[:, 0], sigma)
        self.offset_ = float(offset)
        self.prefactor_ = float(prefactor)
        self.stderr_ = stderr
        self.residual_rms_ = float(np.sqrt(np.mean(resid**2)))
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "prefactor_")
        X = check_array(X)
        return self.offset_ + self.prefactor_ * X[:, 0]


class FrameCorrelator(TransformerMixin, BaseEstimator):
    """Frame-wise intensity-correlation transformer.

    ``fit`` learns the mean pixel intensities of a frame stack ``X`` of
    shape ``(frames, pixels)``; ``transform`` maps each frame to
    ``I_ref^(m-1) I_p / (<I_ref>^(m-1) <I_p>)``, so averaging the transformed
    rows of the training frames yields the normalized correlation curve.
    """

    def __init__(self, m=2, ref_pixel=0):
        self.m = m
        self.ref_pixel = ref_pixel

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=2)
        if self.m < 1:
            raise DomainError("order must be >= 1")
        if not 0 <= self.ref_pixel < X.shape[1]:
            raise DomainError("reference pixel outside the frame")
        means = X.mean(axis=0)
        if np.any(means <= 0):
            raise NumericalError(f"zero mean intensity at pixel {int(np.argmin(means))}")
        self.mean_intensity_ = means
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_intensity_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise DomainError("frame width differs from the fitted frames")
        ref = X[:, self.ref_pixel] / self.mean_intensity_[self.ref_pixel]
        return ref[:, None] ** (self.m - 1) * (X / self.mean_intensity_)

    def correlation(self, X):
        return self.transform(X).mean(axis=0)

"""Monte Carlo fields of independent thermal and coherent sources.

Each realization is one frozen speckle configuration: a single complex
amplitude per source. Thermal amplitudes are circular complex Gaussian,
coherent amplitudes have a fixed modulus and a uniformly random phase.

Reproducibility
---------------
Realizations are generated in fixed blocks of :data:`BLOCK_SIZE`. Block ``b``
is drawn from a Philox generator keyed by ``SeedSequence(seed,
spawn_key=(b,))``, so realization ``r`` depends only on ``(seed, r)`` and
never on how blocks are scheduled over workers. Reductions run in block
order with compensated summation.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import factorial

import numpy as np

from .exceptions import DomainError
from .model import CorrelationCurve, EmitterChain, as_angle_array, grating_factor, phase_difference
from .quantum import permanent

BLOCK_SIZE = 1024
MIN_BATCHES = 20


@dataclass(frozen=True)
class RngContract:
    master_seed: int
    realization_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise DomainError("master_seed must be an unsigned 64-bit integer")
        if self.realization_index < 0:
            raise DomainError("realization_index must be nonnegative")


@dataclass(frozen=True)
class FieldRealization:
    amplitudes: np.ndarray


class CompensatedSum:
    """Neumaier summation over a sequence of equally shaped arrays."""

    def __init__(self, shape=()):
        self.total = np.zeros(shape)
        self._carry = np.zeros(shape)

    def add(self, value):
        value = np.asarray(value, dtype=float)
        t = self.total + value
        big = np.abs(self.total) >= np.abs(value)
        self._carry += np.where(big, (self.total - t) + value, (value - t) + self.total)
        self.total = t

    @property
    def value(self):
        return self.total + self._carry


def _block_generator(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(block,))
    return np.random.Generator(np.random.Philox(ss))


def _check_classical(chain: EmitterChain):
    if chain.source_model not in ("tls", "cls"):
        raise DomainError(
            "Monte Carlo synthesis covers thermal and coherent sources; "
            "single-photon emitters are handled by the quantum engines"
        )


def sample_block(chain: EmitterChain, seed: int, block: int) -> np.ndarray:
    """All ``BLOCK_SIZE`` realizations of one block, shape ``(BLOCK_SIZE, N)``."""
    _check_classical(chain)
    gen = _block_generator(seed, block)
    n = chain.n_sources
    if chain.source_model == "tls":
        xy = gen.standard_normal((BLOCK_SIZE, n, 2))
        return np.sqrt(chain.mean_intensity / 2.0) * (xy[..., 0] + 1j * xy[..., 1])
    phases = gen.uniform(0.0, 2.0 * np.pi, (BLOCK_SIZE, n))
    return chain.amplitude * np.exp(1j * phases)


def sample_realizations(chain: EmitterChain, seed: int, start: int, count: int,
                        workers: int = 1) -> np.ndarray:
    """Realizations ``start .. start + count - 1`` as a ``(count, N)`` array."""
    if count <= 0:
        return np.empty((0, chain.n_sources), dtype=complex)
    first, last = start // BLOCK_SIZE, (start + count - 1) // BLOCK_SIZE
    blocks = range(first, last + 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: sample_block(chain, seed, b), blocks))
    else:
        parts = [sample_block(chain, seed, b) for b in blocks]
    offset = start - first * BLOCK_SIZE
    return np.concatenate(parts)[offset:offset + count]


def sample_realization(chain: EmitterChain, rng: RngContract) -> FieldRealization:
    amps = sample_realizations(chain, rng.master_seed, rng.realization_index, 1)[0]
    return FieldRealization(amps)


def farfield_intensity(realization, theta, kd):
    """``|sum_l a_l exp(-i phi_l(theta))|**2``.

    ``realization`` may be a :class:`FieldRealization`, an ``(N,)`` amplitude
    vector or an ``(R, N)`` stack; ``theta`` a scalar or a grid. The output
    has shape ``(R?, G?)`` following the inputs.
    """
    amps = realization.amplitudes if isinstance(realization, FieldRealization) else realization
    amps = np.asarray(amps, dtype=complex)
    theta = np.asarray(theta, dtype=float)
    n = amps.shape[-1]
    weights = np.exp(1j * kd * np.multiply.outer(np.arange(1, n + 1), np.sin(theta)))
    return np.abs(amps @ weights) ** 2


def batch_edges(total: int, n_batches: int) -> np.ndarray:
    """Contiguous batch boundaries over ``total`` samples."""
    if n_batches < 2 or total < n_batches:
        raise DomainError(f"need at least {n_batches} samples for {n_batches} batches, got {total}")
    return (np.arange(n_batches + 1) * total) // n_batches


def normalized_moment(sum_num, sum_ref, sum_scan, counts, m: int):
    """Combine per-batch sums into the normalized moment estimate.

    Inputs are per-batch sums of ``I_ref^(m-1) I_scan``, ``I_ref`` and
    ``I_scan`` (batch along axis 0) plus batch sizes. Returns the pooled
    estimate, the batch-means standard error and the per-batch replicates.
    """
    counts = np.asarray(counts, dtype=float).reshape(-1, *([1] * (np.ndim(sum_num) - 1)))
    sum_ref = np.reshape(sum_ref, (len(counts),) + (1,) * (np.ndim(sum_num) - 1))
    total = counts.sum()
    estimate = (sum_num.sum(0) / total) / (
        (sum_ref.sum(0) / total) ** (m - 1) * (sum_scan.sum(0) / total)
    )
    replicates = (sum_num / counts) / ((sum_ref / counts) ** (m - 1) * (sum_scan / counts))
    stderr = replicates.std(axis=0, ddof=1) / np.sqrt(len(counts))
    return estimate, stderr, replicates


def mc_correlation(chain: EmitterChain, m: int, theta1: float, grid, realizations: int,
                   seed: int, n_batches: int = MIN_BATCHES, workers: int = 1) -> CorrelationCurve:
    """Normalized moment ``<I1^(m-1) I2> / (<I1>^(m-1) <I2>)`` over a grid.

    Standard errors come from batch means over ``n_batches`` contiguous
    batches of realizations.
    """
    _check_classical(chain)
    if m < 1:
        raise DomainError(f"order must be >= 1, got {m}")
    if n_batches < MIN_BATCHES:
        raise DomainError(f"at least {MIN_BATCHES} batches are required")
    grid = as_angle_array(grid)
    edges = batch_edges(realizations, n_batches)
    kd = chain.spacing_kd

    # per-batch sums of I1^(m-1) I2, I1, I2
    acc_num = [CompensatedSum(grid.shape) for _ in range(n_batches)]
    acc_i1 = [CompensatedSum() for _ in range(n_batches)]
    acc_i2 = [CompensatedSum(grid.shape) for _ in range(n_batches)]

    n_blocks = -(-realizations // BLOCK_SIZE)

    def work(block):
        lo = block * BLOCK_SIZE
        hi = min(lo + BLOCK_SIZE, realizations)
        amps = sample_block(chain, seed, block)[: hi - lo]
        i1 = farfield_intensity(amps, theta1, kd)
        i2 = farfield_intensity(amps, grid, kd)
        out = []
        for b in range(np.searchsorted(edges, lo, "right") - 1, n_batches):
            a, z = max(lo, edges[b]), min(hi, edges[b + 1])
            if a >= z:
                break
            sl = slice(a - lo, z - lo)
            out.append((b, (i1[sl] ** (m - 1)) @ i2[sl], i1[sl].sum(), i2[sl].sum(axis=0)))
        return out

    blocks = range(n_blocks)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = map(work, blocks)
    for parts in results:
        for b, num, s1, s2 in parts:
            acc_num[b].add(num)
            acc_i1[b].add(s1)
            acc_i2[b].add(s2)

    estimate, stderr, replicates = normalized_moment(
        np.array([a.value for a in acc_num]),
        np.array([a.value for a in acc_i1]),
        np.array([a.value for a in acc_i2]),
        np.diff(edges),
        m,
    )
    meta = {
        "n_sources": chain.n_sources,
        "m": int(m),
        "theta1": float(theta1),
        "kd": float(kd),
        "source_model": chain.source_model,
        "engine": "monte-carlo",
        "realizations": int(realizations),
        "seed": int(seed),
        "normalization": "baseline-normalized",
    }
    return CorrelationCurve(grid, estimate, stderr, meta, replicates)


def coherence_matrix(chain: EmitterChain, angles) -> np.ndarray:
    """Normalized first-order coherence ``Gamma_jk`` between detectors.

    ``Gamma_jk = (1/N) sum_l exp(i (phi_l(theta_k) - phi_l(theta_j)))``.
    """
    angles = np.asarray(angles, dtype=float)
    l = chain.positions
    phi = -np.multiply.outer(np.sin(angles), l) * chain.spacing_kd  # (m, N)
    e = np.exp(1j * phi)
    return (np.conj(e) @ e.T) / chain.n_sources


def gaussian_moment(chain: EmitterChain, angles) -> float:
    """Exact ``<prod_j I(theta_j)> / prod_j <I(theta_j)>`` for thermal fields.

    Circular Gaussian fields factorize moments into a permanent of the
    coherence matrix.
    """
    if chain.source_model != "tls":
        raise DomainError("the Gaussian moment theorem applies to thermal sources only")
    return float(permanent(coherence_matrix(chain, angles)).real)


def gaussian_moment_oracle(chain: EmitterChain, m: int, theta1: float, theta2: float) -> float:
    """Normalized thermal moment with ``m - 1`` detectors at ``theta1``."""
    if m < 1:
        raise DomainError(f"order must be >= 1, got {m}")
    return gaussian_moment(chain, [theta1] * (m - 1) + [theta2])


def gaussian_moment_closed(chain: EmitterChain, m: int, theta1, theta2):
    """``(m-1)! (1 + (m-1) |gamma|^2)`` with ``|gamma|^2 = grating / N**2``."""
    delta = phase_difference(theta1, theta2, chain.spacing_kd)
    gamma2 = grating_factor(delta, chain.n_sources) / chain.n_sources**2
    return factorial(m - 1) * (1 + (m - 1) * gamma2)


def cls_phase_integral_oracle(chain: EmitterChain, m: int, theta1: float, theta2,
                              points: int = 512) -> np.ndarray:
    """Normalized coherent-source moment by quadrature over both phases.

    Two sources only. The midpoint rule on a ``points x points`` grid over
    ``[0, 2 pi)^2`` integrates the trigonometric polynomials here exactly
    once ``points`` exceeds the polynomial degree ``2 m``.
    """
    if chain.source_model != "cls" or chain.n_sources != 2:
        raise DomainError("the phase-integral oracle covers two coherent sources")
    psi = (np.arange(points) + 0.5) * (2 * np.pi / points)
    p1, p2 = np.meshgrid(psi, psi, indexing="ij")
    amps = chain.amplitude * np.stack([np.exp(1j * p1), np.exp(1j * p2)], axis=-1).reshape(-1, 2)
    theta2 = np.atleast_1d(np.asarray(theta2, dtype=float))
    i1 = farfield_intensity(amps, theta1, chain.spacing_kd)
    i2 = farfield_intensity(amps, theta2, chain.spacing_kd)
    num = (i1 ** (m - 1)) @ i2 / i1.size
    out = num / (i1.mean() ** (m - 1) * i2.mean(axis=0))
    return out

"""Exact m-photon correlations of N initially excited two-level atoms.

Two independent engines evaluate the same quantity:

* :func:`g_spe_statevector` applies the far-field lowering operator
  ``sum_l exp(-i phi_l) s_l^-`` once per detector to the fully excited state
  and returns the squared norm of the result.
* :func:`g_spe_permanent` sums, over every set of ``m`` atoms that end in the
  ground state, the squared modulus of the permanent of the corresponding
  quantum-path matrix.

Neither result is normalized; they agree with each other exactly and with
the closed form up to a constant factor.

State index convention: bit ``l - 1`` of the amplitude index is set when atom
``l`` is excited, so the fully excited state lives at index ``2**N - 1``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, permutations

import numpy as np

from .exceptions import DomainError, ResourceError
from .model import DetectorSet, EmitterChain

MAX_STATEVECTOR_ATOMS = 20
MAX_PERMANENT_ORDER = 24
MAX_SUBSETS = 5_000_000
RYSER_THRESHOLD = 6  # naive enumeration below this order


@dataclass
class QuantumState:
    amplitudes: np.ndarray
    n_atoms: int

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (1 << self.n_atoms,):
            raise DomainError(f"expected {1 << self.n_atoms} amplitudes")

    @classmethod
    def fully_excited(cls, n_atoms: int, cap: int = MAX_STATEVECTOR_ATOMS) -> "QuantumState":
        if n_atoms > cap:
            raise ResourceError(f"state vector for N={n_atoms} exceeds cap N<={cap}")
        amps = np.zeros(1 << n_atoms, dtype=complex)
        amps[-1] = 1.0
        return cls(amps, n_atoms)

    @classmethod
    def basis(cls, n_atoms: int, excited) -> "QuantumState":
        """Product state with the given atoms (1-based) excited."""
        amps = np.zeros(1 << n_atoms, dtype=complex)
        amps[sum(1 << (l - 1) for l in excited)] = 1.0
        return cls(amps, n_atoms)

    def norm2(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)


@lru_cache(maxsize=32)
def _excited_indices(n_atoms: int):
    idx = np.arange(1 << n_atoms)
    return tuple(idx[(idx >> l) & 1 == 1] for l in range(n_atoms))


def apply_lowering(state: QuantumState, theta: float, kd: float) -> QuantumState:
    """Apply the far-field field operator for a detector at ``theta``."""
    n = state.n_atoms
    # exp(-i phi_l) with phi_l = -l kd sin(theta)
    weights = np.exp(1j * np.arange(1, n + 1) * kd * np.sin(theta))
    out = np.zeros_like(state.amplitudes)
    for l, src in enumerate(_excited_indices(n)):
        out[src ^ (1 << l)] += weights[l] * state.amplitudes[src]
    return QuantumState(out, n)


def _require_spe(chain: EmitterChain):
    if chain.source_model != "spe":
        raise DomainError("the quantum engines model single-photon emitters only")


def g_spe_statevector(chain: EmitterChain, detectors: DetectorSet,
                      cap: int = MAX_STATEVECTOR_ATOMS) -> float:
    """Squared norm after one lowering per detector, in detector order.

    Zero whenever more photons are detected than there are atoms.
    """
    _require_spe(chain)
    state = QuantumState.fully_excited(chain.n_sources, cap=cap)
    if detectors.order > chain.n_sources:
        return 0.0
    for theta in detectors.angles:
        state = apply_lowering(state, theta, chain.spacing_kd)
    return state.norm2()


@lru_cache(maxsize=16)
def _permutation_table(m: int) -> np.ndarray:
    return np.array(list(permutations(range(m))), dtype=np.intp).reshape(-1, m)


def _as_batch(matrices) -> np.ndarray:
    mats = np.asarray(matrices, dtype=complex)
    if mats.ndim == 2:
        mats = mats[None]
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[1] < 1:
        raise DomainError("permanent needs square matrices of size >= 1")
    if mats.shape[1] > MAX_PERMANENT_ORDER:
        raise ResourceError(f"permanent of order {mats.shape[1]} exceeds cap {MAX_PERMANENT_ORDER}")
    return mats


def permanent_naive(matrices) -> np.ndarray:
    """Permanent by explicit sum over all permutations.

    Accepts one ``(m, m)`` matrix or a stack ``(B, m, m)``; returns an array
    of ``B`` permanents.
    """
    mats = _as_batch(matrices)
    m = mats.shape[1]
    perms = _permutation_table(m)
    terms = mats[:, np.arange(m), perms]  # (B, m!, m)
    return terms.prod(axis=-1).sum(axis=-1)


def permanent_ryser(matrices, chunk: int = 1 << 15) -> np.ndarray:
    """Permanent by Ryser's inclusion-exclusion formula, ``O(2**m * m**2)``.

    ``perm(A) = (-1)**m * sum_S (-1)**|S| prod_i sum_{j in S} a_ij``.
    """
    mats = _as_batch(matrices)
    batch, m, _ = mats.shape
    total = np.zeros(batch, dtype=complex)
    n_masks = 1 << m
    bits = 1 << np.arange(m)
    chunk = max(1, min(chunk, (1 << 22) // max(1, batch * m)))
    for start in range(1, n_masks, chunk):
        masks = np.arange(start, min(start + chunk, n_masks))
        include = ((masks[:, None] & bits) != 0).astype(float)  # (K, m)
        sizes = include.sum(axis=1)
        signs = np.where((m - sizes) % 2 == 0, 1.0, -1.0)
        row_sums = mats @ include.T  # (B, m, K)
        total += (row_sums.prod(axis=1) * signs).sum(axis=1)
    return total


def permanent(matrix, method: str = "auto"):
    """Permanent ``sum_sigma prod_j M[j, sigma(j)]`` of a square matrix.

    ``method`` is ``"naive"``, ``"ryser"`` or ``"auto"`` (naive below order
    6). A single matrix yields a complex scalar; a stack yields an array.
    """
    mats = _as_batch(matrix)
    if method == "auto":
        method = "naive" if mats.shape[1] < RYSER_THRESHOLD else "ryser"
    if method == "naive":
        out = permanent_naive(mats)
    elif method == "ryser":
        out = permanent_ryser(mats)
    else:
        raise DomainError(f"unknown permanent method {method!r}")
    return complex(out[0]) if np.asarray(matrix).ndim == 2 else out


def path_matrix(subset, angles, kd) -> np.ndarray:
    """Quantum-path amplitudes ``M[j, c] = exp(-i phi(sigma_c, theta_j))``.

    ``subset`` holds 1-based source indices, ``angles`` the detector angles.
    Row ``j`` is a detector, column ``c`` a source of the subset.
    """
    subset = np.asarray(subset, dtype=float)
    sin_t = np.sin(np.asarray(angles, dtype=float))
    return np.exp(1j * kd * np.multiply.outer(sin_t, subset))


def g_spe_permanent(chain: EmitterChain, detectors: DetectorSet, workers: int = 1,
                    max_subsets: int = MAX_SUBSETS) -> float:
    """Incoherent sum over final atomic states of the coherent path sums."""
    _require_spe(chain)
    n, m = chain.n_sources, detectors.order
    if m > n:
        raise DomainError(f"order {m} exceeds N={n}; use g_spe_statevector for the zero result")
    if m > MAX_PERMANENT_ORDER:
        raise ResourceError(f"permanent of order {m} exceeds cap {MAX_PERMANENT_ORDER}")
    if math.comb(n, m) > max_subsets:
        raise ResourceError(f"C({n},{m}) subsets exceed cap {max_subsets}")

    subsets = np.array(list(combinations(range(1, n + 1), m)), dtype=float)
    sin_t = np.sin(np.asarray(detectors.angles))
    # (S, m detectors, m sources)
    mats = np.exp(1j * chain.spacing_kd * sin_t[None, :, None] * subsets[:, None, :])

    def block(part):
        return np.abs(permanent(part)) ** 2

    step = max(1, 4096 // max(1, math.factorial(min(m, RYSER_THRESHOLD))))
    parts = [mats[i:i + step] for i in range(0, len(mats), step)]
    if workers > 1 and len(parts) > 1:
        with ThreadPoolExecutor(workers) as pool:
            terms = list(pool.map(block, parts))
    else:
        terms = [block(p) for p in parts]
    # fsum makes the reduction independent of how the work was split
    return math.fsum(np.concatenate(terms).tolist())

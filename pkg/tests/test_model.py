import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from superradiance.exceptions import DomainError
from superradiance.model import (
    CorrelationCurve,
    DetectorSet,
    EmitterChain,
    detector_phase,
    grating_factor,
    phase_difference,
)


@pytest.mark.parametrize(
    "l, theta, kd, expected",
    [
        (1, 0.0, math.pi, 0.0),
        (1, math.pi / 2, math.pi, -math.pi),
        (3, math.pi / 6, math.pi, -1.5 * math.pi),
    ],
)
def test_detector_phase_examples(l, theta, kd, expected):
    assert detector_phase(l, theta, kd) == pytest.approx(expected, abs=1e-15)


def test_detector_phase_rejects_bad_index():
    with pytest.raises(DomainError):
        detector_phase(0, 0.1, 1.0)
    with pytest.raises(DomainError):
        detector_phase(4, 0.1, 1.0, n_sources=3)


def test_detector_phase_linear_in_index_and_kd():
    theta = 0.37
    base = detector_phase(1, theta, 1.0)
    for l in range(1, 6):
        for kd in (0.5, 1.0, math.pi):
            assert detector_phase(l, theta, kd) == pytest.approx(l * kd * base, rel=1e-14)


@pytest.mark.parametrize(
    "t1, t2, kd, expected",
    [
        (0.0, 0.0, math.pi, 0.0),
        (0.0, math.pi / 2, math.pi, math.pi),
        (-math.pi / 6, math.pi / 6, 2 * math.pi, 2 * math.pi),
    ],
)
def test_phase_difference_examples(t1, t2, kd, expected):
    assert phase_difference(t1, t2, kd) == pytest.approx(expected, abs=1e-14)


def test_phase_difference_matches_detector_phases():
    for t1, t2 in [(0.1, -0.4), (0.0, 0.9), (-1.2, 1.3)]:
        d = phase_difference(t1, t2, 2.0)
        assert d == pytest.approx(detector_phase(1, t1, 2.0) - detector_phase(1, t2, 2.0))


@pytest.mark.parametrize(
    "delta, n, expected",
    [(0.0, 5, 25.0), (math.pi, 2, 0.0), (math.pi / 2, 2, 2.0)],
)
def test_grating_factor_examples(delta, n, expected):
    assert grating_factor(delta, n) == pytest.approx(expected, abs=1e-12)


def _direct_grating(delta, n):
    # |sum_l exp(i l delta)|^2 by explicit summation
    return abs(sum(np.exp(1j * l * delta) for l in range(n))) ** 2


def test_grating_factor_matches_phasor_sum():
    for n in range(1, 17):
        for delta in np.linspace(-7, 7, 57):
            assert grating_factor(delta, n) == pytest.approx(_direct_grating(delta, n), abs=1e-9)


def test_grating_factor_singularities_are_exact():
    for n in range(1, 17):
        for q in range(-3, 4):
            assert grating_factor(2 * math.pi * q, n) == n * n


@given(st.floats(-20, 20), st.integers(1, 16))
def test_grating_factor_even_periodic_bounded(delta, n):
    g = grating_factor(delta, n)
    assert 0.0 <= g <= n * n
    assert grating_factor(-delta, n) == pytest.approx(g, abs=1e-9 * n * n)
    assert grating_factor(delta + 2 * math.pi, n) == pytest.approx(g, abs=1e-7 * n * n)


@given(st.floats(-50, 50))
def test_grating_factor_single_source_is_one(delta):
    assert grating_factor(delta, 1) == 1.0


def test_grating_factor_vectorized():
    d = np.linspace(-3, 3, 11)
    assert np.allclose(grating_factor(d, 4), [grating_factor(x, 4) for x in d])


def test_chain_validation():
    with pytest.raises(DomainError):
        EmitterChain(0)
    with pytest.raises(DomainError):
        EmitterChain(3, spacing_kd=0.0)
    with pytest.raises(DomainError):
        EmitterChain(3, source_model="laser")
    with pytest.raises(DomainError):
        EmitterChain(3, source_model="tls", mean_intensity=0.0)
    with pytest.raises(DomainError):
        EmitterChain(3, source_model="cls", amplitude=-1.0)
    assert EmitterChain(3, source_model="TLS").source_model == "tls"


def test_detector_set():
    d = DetectorSet.coincident(0.1, 0.2, 4)
    assert d.angles == (0.1, 0.1, 0.1, 0.2) and d.order == 4
    with pytest.raises(DomainError):
        DetectorSet((float("nan"),))
    with pytest.raises(DomainError):
        DetectorSet(())


def test_curve_invariants():
    with pytest.raises(DomainError):
        CorrelationCurve([0, 1], [1.0])
    with pytest.raises(DomainError):
        CorrelationCurve([0, 1], [1.0, -1.0])
    with pytest.raises(DomainError):
        CorrelationCurve([0, 1], [1.0, 1.0], stderr=[0.1])
    c = CorrelationCurve([0, 1, 2], [1.0, 4.0, 2.0], stderr=[0.1, 0.2, 0.1])
    n = c.max_normalized()
    assert n.values.max() == 1.0 and n.meta["normalization"] == "max-normalized"
    assert n.stderr[1] == pytest.approx(0.05)

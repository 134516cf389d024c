import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudobearing.errors import ContractError, DomainError, InsufficientDataError, StaleWindowError
from pseudobearing.geometry import GainPattern, SourceState, UavState, relative_bearing, two_element_pattern
from pseudobearing.measurement import (
    DifferentialMeasurement,
    MeasurementWindow,
    RollingWindow,
    difference_window,
    gaussian_logpdf,
    log_likelihood,
    log_likelihood_many,
    noise_covariance,
    predicted_deltas,
    predicted_deltas_many,
)

PATTERN = GainPattern.parametric(6.15, 10)


def window(rssi, uavs=None, times=None):
    n = len(rssi)
    uavs = uavs or [UavState((0.0, 0.0, 80.0), 0.7 * k) for k in range(n)]
    times = times or list(range(n))
    return MeasurementWindow(times, rssi, uavs)


def dyadic(rng, size, scale=100.0):
    # multiples of 2^-16 dB: sums stay exact, so offsets cancel bit for bit
    return np.round(rng.uniform(-scale, scale, size) * 2 ** 16) / 2 ** 16


class TestDifferenceWindow:
    def test_examples(self):
        np.testing.assert_array_equal(difference_window(window([-50.5] * 3)).deltas, [0.0, 0.0])
        np.testing.assert_array_equal(difference_window(window([1.0, 3.0, 6.0])).deltas, [2.0, 3.0])

    def test_offset_invariance_exact_on_dyadic_values(self, rng):
        for _ in range(200):
            z = dyadic(rng, 4)
            c = dyadic(rng, 1, 50.0)[0]
            w = window(list(z))
            np.testing.assert_array_equal(difference_window(w.shifted(c)).deltas, difference_window(w).deltas)

    @given(st.lists(st.floats(-120, 20), min_size=2, max_size=8), st.floats(-60, 60))
    def test_offset_invariance_arbitrary_floats(self, z, c):
        a = difference_window(window(z)).deltas
        b = difference_window(window(z).shifted(c)).deltas
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_errors(self):
        with pytest.raises(InsufficientDataError):
            difference_window(window([1.0]))
        with pytest.raises(StaleWindowError):
            difference_window(window([1.0, 2.0], times=[0.0, 3.0]))
        with pytest.raises(ContractError):
            MeasurementWindow([0, 1], [1.0], [UavState((0, 0, 0))] * 2)
        with pytest.raises(ContractError):
            MeasurementWindow([1, 0], [1.0, 2.0], [UavState((0, 0, 0))] * 2)


class TestRollingWindow:
    def test_emits_overlapping_windows(self):
        rw = RollingWindow(3, 1.5)
        uav = UavState((0, 0, 0))
        assert rw.push(0.0, 1.0, uav) is None
        assert rw.push(1.0, 2.0, uav) is None
        assert rw.push(2.0, 4.0, uav).rssi == (1.0, 2.0, 4.0)
        assert rw.push(3.0, 7.0, uav).rssi == (2.0, 4.0, 7.0)

    def test_gap_restarts(self):
        rw = RollingWindow(2, 1.5)
        uav = UavState((0, 0, 0))
        rw.push(0.0, 1.0, uav)
        assert rw.push(3.0, 2.0, uav) is None  # missed pulses in between
        assert rw.push(4.0, 5.0, uav).times == (3.0, 4.0)

    def test_minimum_length(self):
        with pytest.raises(DomainError):
            RollingWindow(1, 1.5)


class TestPredictedDeltas:
    def test_stationary_uav(self):
        uavs = [UavState((10.0, 5.0, 80.0), 1.0)] * 3
        np.testing.assert_array_equal(predicted_deltas(SourceState((300, 200, 0)), uavs, PATTERN), [0.0, 0.0])

    def test_half_turn(self):
        src = SourceState((0.0, 100.0, 0.0))
        uavs = [UavState((0, 0, 0), 0.0), UavState((0, 0, 0), math.pi)]
        np.testing.assert_allclose(predicted_deltas(src, uavs, PATTERN), [-10.0], atol=1e-12)

    def test_composition_oracle(self, rng):
        pattern = two_element_pattern()
        for _ in range(20):
            src = SourceState((*rng.uniform(-300, 300, 2), 0.0))
            uavs = [UavState((*rng.uniform(-300, 300, 2), 80.0), rng.uniform(0, 7)) for _ in range(3)]
            gains = [pattern.gain(relative_bearing(src, u)) for u in uavs]
            np.testing.assert_allclose(predicted_deltas(src, uavs, pattern), np.diff(gains), atol=1e-12)

    def test_translation_invariant(self, rng):
        src = np.array([120.0, -40.0])
        uavs = [UavState((*rng.uniform(-100, 100, 2), 50.0), rng.uniform(0, 6)) for _ in range(4)]
        shift = np.array([713.0, -221.0])
        moved = [UavState((u.position[0] + shift[0], u.position[1] + shift[1], 50.0), u.heading) for u in uavs]
        a = predicted_deltas(SourceState((*src, 0)), uavs, PATTERN)
        b = predicted_deltas(SourceState((*(src + shift), 0)), moved, PATTERN)
        np.testing.assert_allclose(a, b, atol=1e-9)

    def test_vectorised(self, rng):
        uavs = [UavState((0.0, 0.0, 80.0), k * 0.7) for k in range(4)]
        pts = rng.uniform(-400, 400, (25, 2))
        want = np.array([predicted_deltas(SourceState((*p, 0)), uavs, PATTERN) for p in pts])
        np.testing.assert_allclose(predicted_deltas_many(pts, uavs, PATTERN), want, atol=1e-12)


class TestNoiseCovariance:
    def test_examples(self):
        np.testing.assert_array_equal(noise_covariance(2, 3.0), [[18.0]])
        np.testing.assert_array_equal(noise_covariance(3, 4.0), [[32.0, -16.0], [-16.0, 32.0]])

    def test_positive_definite_up_to_64(self):
        for m in range(2, 65):
            cov = noise_covariance(m, 1.7)
            np.testing.assert_array_equal(cov, cov.T)
            np.linalg.cholesky(cov)

    def test_domain(self):
        with pytest.raises(DomainError):
            noise_covariance(1, 1.0)
        with pytest.raises(DomainError):
            noise_covariance(3, 0.0)


class TestLikelihood:
    def test_peak_value(self):
        for m, sigma in ((2, 1.0), (4, 3.0), (7, 0.5)):
            cov = noise_covariance(m, sigma)
            peak = -0.5 * ((m - 1) * math.log(2 * math.pi) + math.log(np.linalg.det(cov)))
            assert gaussian_logpdf(np.zeros(m - 1), m, sigma) == pytest.approx(peak, abs=1e-10)

    def test_m2_is_univariate(self):
        sigma, r = 2.0, 1.3
        var = 2 * sigma ** 2
        want = -0.5 * math.log(2 * math.pi * var) - r * r / (2 * var)
        assert gaussian_logpdf([r], 2, sigma) == pytest.approx(want, abs=1e-12)

    def test_m4_against_extended_precision(self, rng):
        mpmath.mp.dps = 40
        sigma = 2.5
        r = rng.normal(0, 4, 3)
        cov = mpmath.matrix(noise_covariance(4, sigma).tolist())
        rv = mpmath.matrix(r.tolist())
        quad = (rv.T * mpmath.inverse(cov) * rv)[0]
        want = -0.5 * (3 * mpmath.log(2 * mpmath.pi) + mpmath.log(mpmath.det(cov)) + quad)
        assert gaussian_logpdf(r, 4, sigma) == pytest.approx(float(want), abs=1e-11)

    def test_peak_at_prediction(self):
        src = SourceState((150.0, 80.0, 0.0))
        uavs = tuple(UavState((0.0, 0.0, 80.0), 0.7 * k) for k in range(3))
        meas = DifferentialMeasurement(predicted_deltas(src, uavs, PATTERN), uavs)
        at_truth = log_likelihood(meas, src, PATTERN, 2.0)
        assert at_truth == pytest.approx(float(gaussian_logpdf(np.zeros(2), 3, 2.0)))
        assert log_likelihood(meas, SourceState((-150.0, 80.0, 0.0)), PATTERN, 2.0) < at_truth

    def test_offset_invariance(self, rng):
        uavs = [UavState((0.0, 0.0, 80.0), 0.7 * k) for k in range(3)]
        w = window(list(dyadic(rng, 3)), uavs)
        pts = rng.uniform(-500, 500, (10, 2))
        a = log_likelihood_many(difference_window(w), pts, PATTERN, 2.0)
        b = log_likelihood_many(difference_window(w.shifted(-37.25)), pts, PATTERN, 2.0)
        np.testing.assert_array_equal(a, b)

    def test_vectorised_matches_scalar(self, rng):
        uavs = tuple(UavState((0.0, 0.0, 80.0), 0.7 * k) for k in range(4))
        meas = DifferentialMeasurement(rng.normal(0, 3, 3), uavs)
        pts = rng.uniform(-500, 500, (10, 2))
        want = [log_likelihood(meas, SourceState((*p, 0)), PATTERN, 2.0) for p in pts]
        np.testing.assert_allclose(log_likelihood_many(meas, pts, PATTERN, 2.0), want, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ContractError):
            gaussian_logpdf(np.zeros(3), 3, 1.0)
        with pytest.raises(ContractError):
            DifferentialMeasurement([1.0, 2.0], (UavState((0, 0, 0)),) * 2)

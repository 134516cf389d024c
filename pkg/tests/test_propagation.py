import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pseudobearing.errors import DomainError, GeometryError, OutOfBoundsError
from pseudobearing.geometry import GainPattern, Rect, SourceState, UavState
from pseudobearing.propagation import (
    EnvironmentModel,
    RadioModel,
    TerrainGrid,
    fresnel_radius,
    mean_rssi,
    mean_rssi_many,
    received_power,
    synthesize_rssi,
    terrain_loss,
    terrain_loss_many,
)

OMNI = GainPattern.omni(0.0)


def ridge_grid(ridge_height: float) -> TerrainGrid:
    """Flat ground with a north-south ridge along the grid line x = 500."""
    heights = np.zeros((11, 51))
    heights[:, 25] = ridge_height
    return TerrainGrid((0.0, 0.0), 20.0, heights)


class TestMeanRssi:
    def test_examples(self):
        m = RadioModel(20.0, 3.0, 1.0)
        src = SourceState((100.0, 0.0, 0.0))
        uav = UavState((0.0, 0.0, 0.0))
        assert mean_rssi(m, OMNI, src, uav) == pytest.approx(-40.0, abs=1e-12)
        m2 = RadioModel(10.0, 2.0, 1.0)
        pattern = GainPattern.parametric(6.15, 10)
        # source due east of a north-facing receiver -> phi = pi/2, gain 1.15 dB
        got = mean_rssi(m2, pattern, SourceState((250.0, 0.0, 0.0)), uav)
        assert got == pytest.approx(10 - 20 * math.log10(250) + 1.15, abs=1e-12)
        assert got == pytest.approx(-36.809, abs=5e-4)

    def test_reference_distance(self):
        for n in (1.5, 2.0, 4.0):
            m = RadioModel(7.0, n, 1.0)
            assert mean_rssi(m, OMNI, SourceState((1.0, 0.0, 0.0)), UavState((0, 0, 0))) == pytest.approx(7.0)

    def test_degenerate_geometry(self):
        m = RadioModel(0.0, 2.0)
        with pytest.raises(GeometryError):
            mean_rssi(m, OMNI, SourceState((0, 0, 0)), UavState((0, 0, 0)))
        with pytest.raises(GeometryError):
            mean_rssi(m, OMNI, SourceState((0, 0, 0)), UavState((0, 0, 50)))

    @given(st.floats(1.0, 1e4), st.floats(0.01, 100.0), st.floats(0.5, 6.0))
    def test_strictly_decreasing_in_distance(self, d, step, n):
        m = RadioModel(0.0, n)
        uav = UavState((0, 0, 0))
        near = mean_rssi(m, OMNI, SourceState((d, 0, 0)), uav)
        far = mean_rssi(m, OMNI, SourceState((d + step, 0, 0)), uav)
        assert far < near

    def test_vectorised_matches_scalar(self, rng):
        m = RadioModel(20.0, 3.0)
        pattern = GainPattern.parametric()
        uav = UavState((10.0, -20.0, 80.0), 0.7)
        pts = np.column_stack([rng.uniform(-500, 500, (30, 2)), np.zeros(30)])
        want = [mean_rssi(m, pattern, SourceState(p), uav) for p in pts]
        np.testing.assert_allclose(mean_rssi_many(m, pattern, pts, uav), want, atol=1e-12)


class TestFresnel:
    def test_example(self):
        assert fresnel_radius(0.5, 0.5, 0.15, 1.0) == pytest.approx(17.3 * math.sqrt(0.25 / 0.15), rel=1e-12)
        assert fresnel_radius(0.5, 0.5, 0.15, 1.0) == pytest.approx(22.33, abs=5e-3)

    def test_frequency_scaling(self):
        a = fresnel_radius(0.3, 0.7, 0.15, 1.0)
        assert fresnel_radius(0.3, 0.7, 0.6, 1.0) == pytest.approx(a / 2, rel=1e-12)

    def test_vanishes_at_endpoint(self):
        values = [fresnel_radius(d, 1.0 - d, 0.15, 1.0) for d in (1e-2, 1e-4, 1e-8)]
        assert values[0] > values[1] > values[2]
        assert values[-1] < 0.01

    def test_domain(self):
        with pytest.raises(DomainError):
            fresnel_radius(0.0, 1.0, 0.15, 1.0)
        with pytest.raises(DomainError):
            fresnel_radius(0.5, 0.5, 0.15, 1.2)


class TestTerrainLoss:
    def test_flat_terrain_clear_path(self):
        env = EnvironmentModel(ridge_grid(0.0))
        assert terrain_loss(env, (100.0, 100.0, 30.0), (200.0, 100.0, 30.0)) == 0.0

    def test_grazing_obstruction_is_ten_db(self):
        env = EnvironmentModel(ridge_grid(30.0))
        assert terrain_loss(env, (100.0, 100.0, 30.0), (900.0, 100.0, 30.0)) == pytest.approx(10.0, abs=1e-9)

    def test_half_fresnel_clearance_is_zero(self):
        f1 = fresnel_radius(0.4, 0.4, 0.15, 0.8)
        env = EnvironmentModel(ridge_grid(30.0 - f1 / 2))
        assert terrain_loss(env, (100.0, 100.0, 30.0), (900.0, 100.0, 30.0)) == pytest.approx(0.0, abs=1e-9)

    def test_blocked_path_exceeds_ten_db(self):
        f1 = fresnel_radius(0.4, 0.4, 0.15, 0.8)
        env = EnvironmentModel(ridge_grid(30.0 + f1))
        assert terrain_loss(env, (100.0, 100.0, 30.0), (900.0, 100.0, 30.0)) == pytest.approx(30.0, abs=1e-9)

    def test_no_terrain(self):
        assert terrain_loss(EnvironmentModel(), (0, 0, 0), (10, 0, 0)) == 0.0

    def test_errors(self):
        env = EnvironmentModel(ridge_grid(0.0))
        with pytest.raises(OutOfBoundsError):
            terrain_loss(env, (-10.0, 0.0, 5.0), (100.0, 100.0, 5.0))
        with pytest.raises(GeometryError):
            terrain_loss(env, (10.0, 10.0, 5.0), (10.0, 10.0, 5.0))

    def test_nonnegative_and_finite_on_synthetic_terrain(self, rng):
        grid = TerrainGrid.synthetic(Rect(0, 0, 1000, 1000), seed=3)
        env = EnvironmentModel(grid)
        tx = np.column_stack([rng.uniform(0, 1000, (500, 2)), rng.uniform(0, 60, 500)])
        loss = terrain_loss_many(env, tx, np.array([500.0, 500.0, 80.0]))
        assert np.all(np.isfinite(loss)) and np.all(loss >= 0)
        assert loss.max() > 0  # the hills do obstruct some links

    def test_vectorised_matches_single_link(self, rng):
        grid = TerrainGrid.synthetic(Rect(0, 0, 1000, 1000), seed=5)
        env = EnvironmentModel(grid)
        rx = np.array([300.0, 700.0, 60.0])
        tx = np.column_stack([rng.uniform(0, 1000, (40, 2)), np.full(40, 1.0)])
        want = [terrain_loss(env, t, rx) for t in tx]
        np.testing.assert_allclose(terrain_loss_many(env, tx, rx), want, atol=1e-12)


class TestTerrainGrid:
    def test_bilinear(self):
        g = TerrainGrid((0.0, 0.0), 10.0, [[0.0, 10.0], [20.0, 30.0]])
        assert g.height_at(5.0, 5.0) == pytest.approx(15.0)
        assert g.height_at(10.0, 0.0) == pytest.approx(10.0)
        assert g.height_at(0.0, 10.0) == pytest.approx(20.0)
        with pytest.raises(OutOfBoundsError):
            g.height_at(11.0, 0.0)

    def test_esri_round_trip(self, tmp_path):
        g = TerrainGrid.synthetic(Rect(0, 0, 200, 100), seed=1, margin=0.0)
        path = tmp_path / "dem.asc"
        g.to_esri_ascii(path)
        h = TerrainGrid.from_esri_ascii(path)
        assert h.origin == pytest.approx(g.origin)
        np.testing.assert_allclose(h.heights, g.heights, rtol=1e-5, atol=1e-4)

    def test_esri_orientation_and_nodata(self, tmp_path):
        path = tmp_path / "dem.asc"
        path.write_text(
            "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n"
            "1 -9999\n3 4\n"
        )
        g = TerrainGrid.from_esri_ascii(path)
        # first data row is the northern edge
        assert g.height_at(5.0, 5.0) == 3.0
        assert g.height_at(5.0, 15.0) == 1.0
        assert g.height_at(15.0, 15.0) == 1.0  # NODATA filled with the minimum

    def test_esri_size_mismatch(self, tmp_path):
        path = tmp_path / "dem.asc"
        path.write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\n1 2 3\n")
        with pytest.raises(DomainError):
            TerrainGrid.from_esri_ascii(path)

    def test_synthetic_is_seeded(self):
        a = TerrainGrid.synthetic(Rect(0, 0, 500, 500), seed=9)
        b = TerrainGrid.synthetic(Rect(0, 0, 500, 500), seed=9)
        np.testing.assert_array_equal(a.heights, b.heights)
        assert a.heights.min() == 0.0 and a.heights.max() == pytest.approx(40.0)


class TestSynthesize:
    src = SourceState((200.0, 300.0, 1.0))
    uav = UavState((0.0, 0.0, 80.0), 0.4)
    pattern = GainPattern.parametric()

    def test_noise_free_equals_mean(self, rng):
        m = RadioModel(20.0, 3.0, noise_std=0.0)
        z = synthesize_rssi(m, self.pattern, EnvironmentModel(), self.src, self.uav, rng)
        assert z == mean_rssi(m, self.pattern, self.src, self.uav)

    def test_extra_loss_shift(self):
        m = RadioModel(20.0, 3.0, noise_std=2.0)
        a = synthesize_rssi(m, self.pattern, EnvironmentModel(), self.src, self.uav, np.random.default_rng(4))
        b = synthesize_rssi(m, self.pattern, EnvironmentModel(extra_loss=7.0), self.src, self.uav,
                            np.random.default_rng(4))
        assert b == pytest.approx(a - 7.0, abs=1e-12)
        env = EnvironmentModel(extra_loss=7.0)
        assert received_power(m, self.pattern, env, self.src, self.uav) == pytest.approx(
            mean_rssi(m, self.pattern, self.src, self.uav) - 7.0, abs=1e-12)

    def test_never_detected(self, rng):
        m = RadioModel(20.0, 3.0)
        env = EnvironmentModel(detection_prob=0.0)
        assert all(synthesize_rssi(m, self.pattern, env, self.src, self.uav, rng) is None for _ in range(100))

    def test_noise_statistics(self):
        m = RadioModel(20.0, 3.0, noise_std=2.5)
        env = EnvironmentModel()
        rng = np.random.default_rng(0)
        z = np.array([synthesize_rssi(m, self.pattern, env, self.src, self.uav, rng) for _ in range(100_000)])
        assert z.std(ddof=1) == pytest.approx(2.5, rel=0.02)

    def test_detection_fraction(self):
        m = RadioModel(20.0, 3.0)
        env = EnvironmentModel(detection_prob=0.93)
        rng = np.random.default_rng(1)
        hits = sum(synthesize_rssi(m, self.pattern, env, self.src, self.uav, rng) is not None
                   for _ in range(100_000))
        assert abs(hits / 100_000 - 0.93) < 0.01

    def test_environment_validation(self):
        with pytest.raises(DomainError):
            EnvironmentModel(detection_prob=1.5)
        with pytest.raises(DomainError):
            EnvironmentModel(carrier_freq=0.0)

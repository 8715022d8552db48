import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from rydqubit.ensemble import (
    CloudGeometry,
    density_at,
    double_excitation_fraction,
    mean_density,
    peak_column_density,
    peak_optical_depth,
    rms_pair_distance,
    sample_positions,
)
from rydqubit.interactions import BlockadeThreshold, PairModel, preparation_threshold

GEOM = CloudGeometry()


class TestGeometry:
    @pytest.mark.parametrize("kw", [{"sigma_x": 0.0}, {"n_atoms": 0}, {"cross_section_reduction": 1.5}])
    def test_validation(self, kw):
        with pytest.raises(ValueError):
            CloudGeometry(**kw)

    def test_rms_pair_distance(self):
        assert rms_pair_distance(GEOM) == pytest.approx(8.41, abs=0.005)
        assert rms_pair_distance(GEOM) ** 2 == pytest.approx(2 * (2.4**2 + 4.6**2 + 2.9**2), rel=1e-15)

    def test_isotropic_identity(self):
        g = CloudGeometry(sigma_x=3.0, sigma_y=3.0, sigma_z=3.0)
        assert rms_pair_distance(g) == pytest.approx(3.0 * np.sqrt(6))

    def test_pair_distance_monte_carlo(self):
        a = sample_positions(GEOM, seed=1, n=100_000)
        b = sample_positions(GEOM, seed=2, n=100_000)
        mc = np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1)))
        assert mc == pytest.approx(rms_pair_distance(GEOM), rel=0.01)


class TestSampling:
    def test_deterministic(self):
        assert np.array_equal(sample_positions(GEOM, 7), sample_positions(GEOM, 7))

    def test_seed_changes_output(self):
        assert not np.array_equal(sample_positions(GEOM, 7), sample_positions(GEOM, 8))

    def test_variances(self):
        pts = sample_positions(GEOM, seed=3, n=10_000)
        assert np.allclose(pts.var(axis=0), GEOM.sigmas**2, rtol=0.05)

    def test_single_atom(self):
        g = CloudGeometry(n_atoms=1)
        assert sample_positions(g, 0).shape == (1, 3)


class TestOpticalDepth:
    def test_probe_along_y_hand_value(self):
        g = CloudGeometry(probe_angle_xy=0.0)
        sigma = 3 * 0.78**2 / (2 * np.pi) * 0.5
        assert peak_optical_depth(g) == pytest.approx(440 * sigma / (2 * np.pi * 2.4 * 2.9), rel=1e-12)
        assert 1.4 <= peak_optical_depth(g) <= 1.5

    def test_tilted_probe(self):
        # transverse in-plane size mixes x and y at 16 degrees
        su = np.sqrt(np.cos(np.deg2rad(16)) ** 2 * 2.4**2 + np.sin(np.deg2rad(16)) ** 2 * 4.6**2)
        sigma = 3 * 0.78**2 / (2 * np.pi) * 0.5
        assert peak_optical_depth(GEOM) == pytest.approx(440 * sigma / (2 * np.pi * su * 2.9), rel=1e-12)
        assert 1.0 <= peak_optical_depth(GEOM) <= 2.0

    def test_linearity(self):
        full = CloudGeometry(cross_section_reduction=1.0)
        assert peak_optical_depth(full) == pytest.approx(2 * peak_optical_depth(GEOM))
        assert peak_optical_depth(CloudGeometry(n_atoms=880)) == pytest.approx(2 * peak_optical_depth(GEOM))

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
    def test_rotation_invariance(self, a, b, c):
        rot = Rotation.from_euler("zyx", [a, b, c]).as_matrix()
        cov = GEOM.covariance
        k = GEOM.probe_direction
        before = peak_column_density(cov, k, 440)
        after = peak_column_density(rot @ cov @ rot.T, rot @ k, 440)
        assert after == pytest.approx(before, rel=1e-9)


class TestDensity:
    def test_closed_form(self):
        expected = 440 / (8 * np.pi**1.5 * 2.4 * 4.6 * 2.9) * 1e12
        assert mean_density(GEOM) == pytest.approx(expected, rel=1e-12)
        assert mean_density(GEOM) == pytest.approx(3.085e11, rel=0.01)

    def test_within_factor_two_of_reported(self):
        assert 1e11 <= mean_density(GEOM) <= 4e11

    def test_scaling(self):
        g2 = CloudGeometry(sigma_x=4.8, sigma_y=9.2, sigma_z=5.8)
        assert mean_density(g2) == pytest.approx(mean_density(GEOM) / 8)

    def test_monte_carlo_density_weighted(self):
        pts = sample_positions(GEOM, seed=11, n=100_000)
        assert np.mean(density_at(GEOM, pts)) == pytest.approx(mean_density(GEOM), rel=0.02)


class TestDoubleExcitation:
    def test_matches_independent_radius_oracle(self):
        frac, err = double_excitation_fraction(GEOM, PairModel.rprime_pair(), preparation_threshold(), 10**6, 5)
        # oracle: unprotected <=> R > r_B(theta) = (C6(theta)/nu)^(1/6), fresh samples
        rng = np.random.default_rng(123)
        d = (rng.standard_normal((10**6, 3)) - rng.standard_normal((10**6, 3))) * GEOM.sigmas
        R = np.linalg.norm(d, axis=1)
        cos = d @ GEOM.probe_direction / R
        rb = (1.94e6 * (cos**2 + 1.6**6 * (1 - cos**2)) / 0.6) ** (1 / 6)
        oracle = np.mean(R > rb)
        assert abs(frac - oracle) < 4 * np.sqrt(2) * err
        assert frac < 0.1

    def test_limits(self):
        model = PairModel.rprime_pair()
        assert double_excitation_fraction(GEOM, model, BlockadeThreshold(1e-12), 1000, 1)[0] == 0.0
        assert double_excitation_fraction(GEOM, model, BlockadeThreshold(1e15), 1000, 1)[0] == 1.0

    def test_monotone_in_linewidth(self):
        model = PairModel.rprime_pair()
        fr = [double_excitation_fraction(GEOM, model, BlockadeThreshold(w), 20_000, 4)[0]
              for w in (0.01, 0.1, 0.6, 3.0, 30.0)]
        assert all(a <= b for a, b in zip(fr, fr[1:]))

    def test_rejects_zero_pairs(self):
        with pytest.raises(ValueError):
            double_excitation_fraction(GEOM, PairModel.rprime_pair(), preparation_threshold(), 0, 1)

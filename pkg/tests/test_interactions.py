import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydqubit.interactions import (
    AverageConvention,
    BlockadeThreshold,
    Branch,
    PairKind,
    PairModel,
    ThresholdConvention,
    UnblockadedError,
    blockade_average,
    blockade_radius,
    calibrate_threshold,
    pair_potential,
    preparation_threshold,
    threshold_crossings,
)

PLUS = PairModel.r_rprime_pair(Branch.PLUS)
MINUS = PairModel.r_rprime_pair(Branch.MINUS)
RPRIME = PairModel.rprime_pair()
EIT = calibrate_threshold(PLUS)


def dense_crossings(f, nu, lo=0.5, hi=20.0, step=1e-3):
    R = np.arange(lo, hi, step)
    g = np.abs(f(R)) - nu
    idx = np.where(np.sign(g[:-1]) != np.sign(g[1:]))[0]
    return R[idx]


class TestPairModel:
    def test_exchange_needs_branch(self):
        with pytest.raises(ValueError):
            PairModel(PairKind.EXCHANGE_PLUS_VDW, 1.0, 1.0)

    def test_exchange_needs_c3(self):
        with pytest.raises(ValueError):
            PairModel(PairKind.EXCHANGE_PLUS_VDW, 1.0, 0.0, branch=Branch.PLUS)

    @pytest.mark.parametrize("kw", [{"c6_parallel": 0.0}, {"c3": -1.0}, {"anisotropy_ratio": 0.5}])
    def test_invalid_fields(self, kw):
        base = dict(kind=PairKind.VDW_ANISOTROPIC, c6_parallel=1.0, c3=0.0, anisotropy_ratio=1.0)
        base.update(kw)
        with pytest.raises(ValueError):
            PairModel(**base)


class TestPairPotential:
    def test_plus_at_calibration_radius(self):
        # 6.31e6 / 12.7**6 + 2.36e4 / 12.7**3
        assert pair_potential(PLUS, 12.7) == pytest.approx(13.025141588, rel=1e-9)

    def test_plus_at_rms_distance(self):
        v = pair_potential(PLUS, 8.4)
        assert v == pytest.approx(57.7794709, rel=1e-7)
        assert v >= 10.0

    def test_rprime_axial(self):
        assert pair_potential(RPRIME, 12.0, 0.0) == pytest.approx(1.94e6 / 12**6, rel=1e-12)
        assert pair_potential(RPRIME, 12.0, 0.0) == pytest.approx(0.65, abs=0.01)

    def test_theta_ignored_for_exchange(self):
        assert pair_potential(PLUS, 9.0, 0.0) == pair_potential(PLUS, 9.0, 1.1)

    def test_decays_to_zero(self):
        vals = pair_potential(PLUS, np.geomspace(1, 1e4, 200))
        assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-6

    def test_domain_error(self):
        with pytest.raises(ValueError):
            pair_potential(PLUS, 0.0)
        with pytest.raises(ValueError):
            pair_potential(PLUS, np.array([1.0, -2.0]))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.05, 500), st.floats(1e-4, 10))
    def test_plus_positive_and_decreasing(self, R, dR):
        assert pair_potential(PLUS, R) > pair_potential(PLUS, R + dR) > 0


class TestBlockadeRadius:
    def test_rprime_full_linewidth(self):
        r = blockade_radius(RPRIME, preparation_threshold(), 0.0)
        assert r == pytest.approx((1.94e6 / 0.6) ** (1 / 6), abs=1e-6)
        assert 11.5 <= r <= 14.0

    def test_half_linewidth_convention(self):
        thr = BlockadeThreshold(0.6, ThresholdConvention.HALF_LINEWIDTH)
        assert blockade_radius(RPRIME, thr) == pytest.approx((1.94e6 / 0.3) ** (1 / 6), abs=1e-6)

    def test_plus_calibrated(self):
        assert EIT.convention is ThresholdConvention.HALF_LINEWIDTH
        assert EIT.energy == pytest.approx(13.0251, abs=1e-3)
        assert blockade_radius(PLUS, EIT) == pytest.approx(12.7, abs=0.05)

    def test_minus_independent_prediction(self):
        r = blockade_radius(MINUS, EIT)
        oracle = dense_crossings(lambda R: 6.31e6 / R**6 - 2.36e4 / R**3, EIT.energy)[0]
        assert r == pytest.approx(oracle, abs=2e-3)
        assert r == pytest.approx(6.2, abs=0.1)

    def test_aspect_ratio(self):
        thr = preparation_threshold()
        ratio = blockade_radius(RPRIME, thr, np.pi / 2) / blockade_radius(RPRIME, thr, 0.0)
        assert ratio == pytest.approx(1.6, rel=1e-9)

    @pytest.mark.parametrize("model,theta", [(PLUS, 0.0), (MINUS, 0.0), (RPRIME, 0.7)])
    def test_root_satisfies_threshold(self, model, theta):
        thr = EIT if model.kind is PairKind.EXCHANGE_PLUS_VDW else preparation_threshold()
        r = blockade_radius(model, thr, theta)
        lo, hi = abs(pair_potential(model, r - 1e-3, theta)), abs(pair_potential(model, r + 1e-3, theta))
        assert min(lo, hi) <= thr.energy <= max(lo, hi)

    def test_unblockaded(self):
        with pytest.raises(UnblockadedError):
            blockade_radius(RPRIME, BlockadeThreshold(1e12))

    @settings(max_examples=25, deadline=None)
    @given(st.floats(0.0, np.pi / 2))
    def test_c6_scaling(self, theta):
        thr = preparation_threshold()
        doubled = PairModel.rprime_pair(c6_parallel=2 * 1.94e6)
        ratio = blockade_radius(doubled, thr, theta) / blockade_radius(RPRIME, thr, theta)
        assert ratio == pytest.approx(2 ** (1 / 6), rel=1e-6)


class TestThresholdCrossings:
    def test_minus_branch_structure(self):
        got = threshold_crossings(MINUS, EIT, 0.0, r_max=20.0)
        oracle = dense_crossings(lambda R: 6.31e6 / R**6 - 2.36e4 / R**3, EIT.energy)
        assert [d for _, d in got] == ["falling", "rising", "falling"]
        assert np.allclose([r for r, _ in got], oracle, atol=2e-3)
        assert np.allclose(oracle, [6.184, 6.882, 11.41], atol=2e-3)

    def test_plus_single_crossing(self):
        got = threshold_crossings(PLUS, EIT, 0.0, r_max=20.0)
        assert len(got) == 1 and got[0][1] == "falling"

    def test_huge_threshold_empty(self):
        assert threshold_crossings(RPRIME, BlockadeThreshold(1e12), 0.0, r_max=20.0) == []

    def test_rejects_bad_range(self):
        with pytest.raises(ValueError):
            threshold_crossings(PLUS, EIT, 0.0, r_max=0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(1e-3, 1e7))
    def test_plus_always_one_crossing(self, nu):
        thr = BlockadeThreshold(nu)
        # stay inside the search window: V(0.5 um) ~ 4e8 MHz, V(100 um) ~ 0.02 MHz
        if pair_potential(PLUS, 100.0) < nu < pair_potential(PLUS, 0.5):
            assert len(threshold_crossings(PLUS, thr)) == 1


class TestAverages:
    def test_branch_mean(self):
        r = blockade_average(PLUS, EIT, AverageConvention.BRANCH_MEAN)
        assert r == pytest.approx(9.44, abs=0.01)
        assert r == pytest.approx(9.4, abs=0.1)

    def test_branch_mean_label_swap(self):
        a = blockade_average(PLUS, EIT, "branch_mean")
        b = blockade_average(MINUS, EIT, "branch_mean")
        assert a == b

    def test_solid_angle_mean_vs_dense_oracle(self):
        thr = preparation_threshold()
        th = np.linspace(0, np.pi, 10_001)
        r = (1.94e6 * (np.cos(th) ** 2 + 1.6**6 * np.sin(th) ** 2) / 0.6) ** (1 / 6)
        oracle = np.trapezoid(r * np.sin(th), th) / 2
        assert blockade_average(RPRIME, thr, "solid_angle_mean") == pytest.approx(oracle, abs=1e-3)

    def test_axes_means(self):
        thr = preparation_threshold()
        a = blockade_radius(RPRIME, thr, 0.0)
        c = blockade_radius(RPRIME, thr, np.pi / 2)
        assert blockade_average(RPRIME, thr, "arithmetic_axes_mean") == pytest.approx((a + 2 * c) / 3)
        assert blockade_average(RPRIME, thr, "geometric_axes_mean") == pytest.approx((a * c * c) ** (1 / 3))

    def test_incompatible_conventions(self):
        with pytest.raises(ValueError):
            blockade_average(RPRIME, preparation_threshold(), "branch_mean")
        with pytest.raises(ValueError):
            blockade_average(PLUS, EIT, "solid_angle_mean")

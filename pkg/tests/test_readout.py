from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rydqubit.readout import (
    Classifier,
    calibrate_r_low,
    detection_operating_point,
    detection_pmfs,
    expected_histograms,
    fidelity_curve,
    fidelity_vs_rate,
    fit_histograms,
    fit_impurity,
    optimal_threshold,
    repeated_measurement_table,
    synthetic_histograms,
    transistor_gain,
)
from rydqubit.seeding import generator
from rydqubit.telegraph import R_LOW_CALIBRATED, TelegraphParams, Window, exact_pmf

P = TelegraphParams()
W = Window(0.0, 6.0)
STARTS = [Window(t, 6.0) for t in (0.0, 6.0, 12.0, 18.0)]
START_GUESS = TelegraphParams(r_high=7.0, r_low=3.0, gamma_loss=0.05, f_prep=0.85)


class TestThreshold:
    def test_identical_pmfs(self):
        pmf = exact_pmf(P, W, False)
        assert np.allclose(fidelity_curve(pmf, pmf), 0.5)
        assert optimal_threshold(pmf, pmf) == (0, 0.5)

    def test_disjoint_supports(self):
        up = np.array([0.3, 0.7, 0, 0])
        down = np.array([0, 0, 0.5, 0.5])
        assert optimal_threshold(up, down) == (1, 1.0)

    def test_brute_force_identity(self):
        up, down = detection_pmfs(P, W)
        n = max(up.probs.size, down.probs.size)
        brute = [0.5 * (up.probs[: k + 1].sum() + down.probs[k + 1:].sum()) for k in range(n)]
        k, f = optimal_threshold(up, down)
        assert f == pytest.approx(max(brute), abs=1e-12)
        assert k == int(np.argmax(brute))

    def test_classifier(self):
        c = Classifier(30)
        assert c.is_up([30, 31]).tolist() == [True, False]
        with pytest.raises(ValueError):
            Classifier(-1)


class TestCalibration:
    def test_default_is_calibrated(self):
        r = calibrate_r_low(0.92, P, W)
        assert r == pytest.approx(R_LOW_CALIBRATED, abs=1e-4)
        assert 2.0 <= r <= 4.5

    def test_operating_point(self):
        thr, fd = detection_operating_point(P, W)
        assert 25 <= thr <= 35
        assert fd == pytest.approx(0.92, abs=0.002)

    def test_half_target_is_degenerate(self):
        assert calibrate_r_low(0.5, P, W) == P.r_high

    def test_unreachable(self):
        with pytest.raises(ValueError, match="achievable"):
            calibrate_r_low(0.9999, P, W)


class TestGain:
    def test_degenerate(self):
        assert transistor_gain(replace(P, r_low=8.0), W)[0] == pytest.approx(0.0, abs=1e-12)

    def test_frozen_rates_closed_form(self):
        p = replace(P, gamma_loss=0.0, gamma_imp=0.0)
        g, gi = transistor_gain(p, W)
        assert g == pytest.approx((8.0 - p.r_low) * 6.0, rel=1e-12)
        assert gi == pytest.approx(g / (0.9 * 0.47))

    def test_matches_pmf_means(self):
        up, down = detection_pmfs(P, W)
        assert transistor_gain(P, W)[0] == pytest.approx(down.mean - up.mean, rel=1e-6)

    def test_within_factor_two_of_reported(self):
        assert 8.5 <= transistor_gain(P, W)[0] <= 34

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 0.5), st.floats(0.0, 0.5))
    def test_switching_identity(self, frac, gl, gi):
        # gain = (r_high - r_low) * (E[min(tau_loss, T)] + E[min(tau_imp, T)] - T)
        p = TelegraphParams(r_low=8.0 * frac, gamma_loss=gl, gamma_imp=gi)

        def e_min(g):
            return 6.0 if g == 0 else -np.expm1(-g * 6.0) / g

        expected = (8.0 - p.r_low) * (e_min(gl) + e_min(gi) - 6.0)
        assert transistor_gain(p, W)[0] == pytest.approx(expected, rel=1e-9, abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 0.1), st.floats(0.0, 0.1))
    def test_non_negative(self, frac, gl, gi):
        # holds while the two mean dwell times cover the window, true for slow switching
        p = TelegraphParams(r_low=8.0 * frac, gamma_loss=gl, gamma_imp=gi)
        assert transistor_gain(p, W)[0] >= -1e-12


class TestHistogramFit:
    def test_recovers_truth(self):
        hist = synthetic_histograms(P, STARTS, True, 2000, seed=12)
        fit = fit_histograms(hist, START_GUESS, seed=1)
        assert fit.converged
        assert abs(fit.f_prep - 0.93) <= 0.02
        assert abs(fit.gamma_loss - 0.035) <= 0.2 * 0.035
        assert np.isfinite(fit.log_likelihood)
        assert fit.n_restarts_used == 8

    def test_null_loss_rate(self):
        truth = replace(P, gamma_loss=0.0)
        fit = fit_histograms(expected_histograms(truth, STARTS, True, 2000), START_GUESS, seed=2)
        assert fit.gamma_loss <= 1e-3

    def test_single_window_rejected(self):
        with pytest.raises(ValueError):
            fit_histograms(synthetic_histograms(P, [W], True, 100, 0), START_GUESS)

    def test_same_start_rejected(self):
        with pytest.raises(ValueError):
            fit_histograms(synthetic_histograms(P, [W, W], True, 100, 0), START_GUESS)

    def test_low_rank_flag(self):
        hists = [(Window(0.0, 6.0), np.array([0, 0, 50.0])), (Window(6.0, 6.0), np.array([0, 0, 50.0]))]
        fit = fit_histograms(hists, START_GUESS, restarts=0)
        assert "low_rank" in fit.flags

    def test_coverage(self):
        # 20 random truths; the fit should land within 3 standard errors in >= 18 of them
        rng = generator(2024)
        hits = 0
        for k in range(20):
            truth = TelegraphParams(r_high=rng.uniform(6, 10), r_low=rng.uniform(2, 4.5),
                                    gamma_loss=rng.uniform(0.02, 0.06), f_prep=rng.uniform(0.8, 0.97))
            hist = synthetic_histograms(truth, STARTS, True, 2000, seed=100 + k)
            fit = fit_histograms(hist, truth, restarts=2, seed=k)
            ok = all(abs(getattr(fit, n) - getattr(truth, n)) <= 3 * fit.stderr[n]
                     for n in ("r_high", "r_low", "gamma_loss", "f_prep"))
            hits += ok
        assert hits >= 18


class TestImpurityFit:
    def test_recovers_rate(self):
        hist = synthetic_histograms(P, [W], False, 2000, seed=8)[0]
        fit = fit_impurity(hist, replace(P, gamma_imp=0.03, r_high=7.5), seed=3)
        assert abs(fit.gamma_imp - 0.015) <= 0.3 * 0.015

    def test_null_rate(self):
        truth = replace(P, gamma_imp=0.0)
        fit = fit_impurity(expected_histograms(truth, [W], False, 2000), replace(P, gamma_imp=0.03))
        assert fit.gamma_imp <= 1e-3

    def test_unidentifiable_when_rates_equal(self):
        truth = replace(P, r_low=8.0)
        fit = fit_impurity(expected_histograms(truth, [W], False, 2000), truth, restarts=1)
        assert "unidentifiable" in fit.flags


@pytest.fixture(scope="module")
def table():
    cls = Classifier(detection_operating_point(P, W)[0], W)
    return repeated_measurement_table(P, cls, 100_000, seed=6)


class TestRepeatedTable:

    def test_first_window_matches_single_window_classification(self, table):
        cls = Classifier(detection_operating_point(P, W)[0], W)
        up, down = detection_pmfs(P, W)
        p_up = up.cdf()[cls.threshold]
        p_fp = down.cdf()[cls.threshold]
        se = 0.5 / np.sqrt(100_000)
        assert abs(table.table[0, 0, 0] - p_up) < 4 * se
        assert abs(table.table[1, 0, 0] - p_fp) < 4 * se

    def test_rows_sum_to_one(self, table):
        assert np.allclose(table.table.sum(axis=2), 1.0)

    def test_second_window_closed_form(self, table):
        # P(up in window 2 | prepared, f=1) from the exact distribution of the later window
        pmf = exact_pmf(replace(P, f_prep=1.0), Window(6.0, 6.0), True)
        cls = Classifier(detection_operating_point(P, W)[0])
        expected = pmf.cdf()[cls.threshold]
        assert abs(table.table[0, 1, 0] - expected) < 4 * 0.5 / np.sqrt(100_000)

    def test_perfect_detector_agrees(self):
        p = TelegraphParams(r_high=50.0, r_low=0.0, gamma_loss=0.0, gamma_imp=0.0)
        t = repeated_measurement_table(p, Classifier(100, W), 5000, seed=1)
        assert t.agreement == 1.0
        assert np.array_equal(t.table[:, 0], t.table[:, 1])

    def test_uncorrected_mixes_in_preparation_error(self, table):
        cls = Classifier(detection_operating_point(P, W)[0], W)
        raw = repeated_measurement_table(P, cls, 100_000, seed=6, prep_corrected=False)
        assert raw.table[0, 0, 0] < table.table[0, 0, 0]
        assert np.array_equal(raw.table[1], table.table[1])


class TestRateSweep:
    RATES = np.array([0.5, 1, 2, 4, 8, 16, 32, 64, 128])

    def test_no_penalty_is_monotone(self):
        sweep = fidelity_vs_rate(self.RATES, 0.0, P)
        assert np.all(np.diff(sweep.fidelity) >= -1e-12)

    def test_interior_maximum(self):
        sweep = fidelity_vs_rate(self.RATES, 0.015 / 8, P)
        assert sweep.interior_maximum
        assert np.all((sweep.best_window >= 3.0) & (sweep.best_window <= 8.0))

    def test_vanishing_rate(self):
        sweep = fidelity_vs_rate([1e-6], 0.0, P)
        assert sweep.fidelity[0] == pytest.approx(0.5, abs=1e-4)

    def test_negative_beta(self):
        with pytest.raises(ValueError):
            fidelity_vs_rate([8.0], -1.0, P)

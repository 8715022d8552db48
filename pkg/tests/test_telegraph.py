import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from rydqubit.seeding import seed_derive
from rydqubit.telegraph import (
    CountPmf,
    TelegraphParams,
    Window,
    count_moments,
    exact_pmf,
    histogram,
    mean_rate_curve,
    simulate_shots,
    simulate_trace,
    simulate_trajectory,
    switch_pmf,
    total_variation,
    trajectory_seeds,
    two_window_joint,
    window_state_weights,
)

P = TelegraphParams()
W = Window(0.0, 6.0)
FROZEN = TelegraphParams(gamma_loss=0.0, gamma_imp=0.0)


class TestValidation:
    @pytest.mark.parametrize("kw", [{"r_low": 9.0}, {"r_low": -1.0}, {"gamma_loss": -0.1},
                                    {"f_prep": 1.2}, {"detection_eff": 0.0}])
    def test_params(self, kw):
        with pytest.raises(ValueError):
            TelegraphParams(**kw)

    @pytest.mark.parametrize("kw", [{"t_start": -1.0}, {"t_len": 0.0}])
    def test_window(self, kw):
        with pytest.raises(ValueError):
            Window(**kw)


class TestExactPmf:
    @pytest.mark.parametrize("prepared", [True, False])
    @pytest.mark.parametrize("t_start", [0.0, 12.0])
    def test_normalised_with_small_tail(self, prepared, t_start):
        pmf = exact_pmf(P, Window(t_start, 6.0), prepared)
        assert pmf.probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(pmf.probs >= 0)
        assert poisson.sf(pmf.n_max, P.r_high * 6.0) < 1e-12

    def test_no_switching_closed_form(self):
        pmf = exact_pmf(FROZEN, W, True)
        n = pmf.support
        expected = 0.93 * poisson.pmf(n, FROZEN.r_low * 6) + 0.07 * poisson.pmf(n, 48.0)
        assert np.allclose(pmf.probs, expected, atol=1e-14)

    @pytest.mark.parametrize("prepared", [True, False])
    def test_node_refinement(self, prepared):
        a = exact_pmf(P, W, prepared, n_nodes=256)
        b = exact_pmf(P, W, prepared, n_nodes=512)
        assert np.max(np.abs(a.probs - b.probs)) < 1e-8

    def test_mean_matches_hand_formula(self):
        T, g = 6.0, 0.035
        e_min = (1 - np.exp(-g * T)) / g
        up = 8.0 * T - (8.0 - P.r_low) * e_min
        # unprepared branch: starts transparent, may switch to blocked
        gi = 0.015
        e_min_i = (1 - np.exp(-gi * T)) / gi
        down = P.r_low * T + (8.0 - P.r_low) * e_min_i
        expected = 0.93 * up + 0.07 * down
        assert exact_pmf(P, W, True).mean == pytest.approx(expected, rel=1e-6)

    @pytest.mark.parametrize("prepared", [True, False])
    @pytest.mark.parametrize("params", [P, TelegraphParams(gamma_loss=0.5, gamma_imp=0.2, f_prep=0.6),
                                        TelegraphParams(gamma_loss=1e-7, gamma_imp=1e-6)])
    def test_moments_match_closed_form(self, prepared, params):
        w = Window(3.0, 6.0)
        pmf = exact_pmf(params, w, prepared)
        mean, var = count_moments(params, w, prepared)
        assert pmf.mean == pytest.approx(mean, rel=1e-6)
        assert pmf.var == pytest.approx(var, rel=1e-6)

    def test_switch_symmetry(self):
        # prepared at f=1 with (a, b, gl) mirrors unprepared with (b, a, gi)
        n = np.arange(120, dtype=float)
        a = switch_pmf(n, 2.0, 8.0, 0.2, 6.0)
        b = switch_pmf(n, 8.0, 2.0, 0.2, 6.0)
        lo = TelegraphParams(r_low=2.0, gamma_loss=0.2, gamma_imp=0.0, f_prep=1.0)
        hi = TelegraphParams(r_low=2.0, gamma_loss=0.0, gamma_imp=0.2, f_prep=1.0)
        assert np.allclose(exact_pmf(lo, W, True, n_max=119).probs, a, atol=1e-15)
        assert np.allclose(exact_pmf(hi, W, False, n_max=119).probs, b, atol=1e-15)

    def test_degenerate_rates_ignore_preparation(self):
        p = TelegraphParams(r_low=8.0)
        assert np.allclose(exact_pmf(p, W, True).probs, exact_pmf(p, W, False).probs, atol=1e-15)

    def test_window_start_decays_blocked_weight(self):
        w = window_state_weights(P, 10.0, True)
        assert w[0] == pytest.approx(0.93 * np.exp(-0.35))
        assert w.sum() == pytest.approx(1.0)

    def test_impurity_switch_for_unprepared_fraction(self):
        off = TelegraphParams(impurity_when_unprepared=False)
        w = window_state_weights(off, 10.0, True)
        assert w[2] == 0 and w[3] == 0
        assert w[1] == pytest.approx(0.93 * (1 - np.exp(-0.35)) + 0.07)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 0.5), st.floats(0.0, 0.5))
    def test_monotone_in_loss_rate(self, g1, dg):
        lo = TelegraphParams(gamma_loss=g1)
        hi = TelegraphParams(gamma_loss=g1 + dg + 1e-3)
        assert count_moments(hi, W, True)[0] > count_moments(lo, W, True)[0]

    @settings(max_examples=15, deadline=None)
    @given(st.floats(0.0, 0.9), st.floats(0.01, 0.1))
    def test_monotone_in_prep_fidelity(self, f, df):
        lo = TelegraphParams(f_prep=f)
        hi = TelegraphParams(f_prep=f + df)
        assert count_moments(hi, W, True)[0] < count_moments(lo, W, True)[0]


class TestMeanRate:
    def test_initial_value(self):
        p = TelegraphParams(f_prep=1.0)
        assert mean_rate_curve(p, True, [0.0])[0] == pytest.approx(p.r_low, abs=1e-15)

    def test_monotone_directions(self):
        t = np.linspace(0, 30, 61)
        assert np.all(np.diff(mean_rate_curve(P, True, t)) > 0)
        assert np.all(np.diff(mean_rate_curve(P, False, t)) < 0)

    def test_without_impurity_matches_simple_formula(self):
        p = TelegraphParams(impurity_when_unprepared=False)
        t = np.linspace(0, 12, 7)
        pb = 0.93 * np.exp(-0.035 * t)
        assert np.allclose(mean_rate_curve(p, True, t), pb * p.r_low + (1 - pb) * 8.0)

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            mean_rate_curve(P, True, [1.0, 0.0])

    @pytest.mark.parametrize("prepared", [True, False])
    def test_binned_monte_carlo(self, prepared):
        bins = simulate_trace(P, W, prepared, 100_000, seed=21)
        observed = bins.mean(axis=0) / 0.5
        edges = np.arange(0, 6.01, 0.5)
        # exact bin average of the rate curve
        fine = np.linspace(0, 6, 12 * 200 + 1)
        curve = mean_rate_curve(P, prepared, fine)
        expected = np.array([np.mean(curve[i * 200:(i + 1) * 200 + 1]) for i in range(12)])
        se = bins.std(axis=0) / np.sqrt(bins.shape[0]) / 0.5
        assert edges.size == 13
        assert np.all(np.abs(observed - expected) < 3 * se + 1e-3)


class TestSimulation:
    @pytest.mark.parametrize("prepared", [True, False])
    def test_total_variation_vs_exact(self, prepared):
        rec = simulate_shots(P, [W], prepared, 100_000, seed=3)
        pmf = exact_pmf(P, W, prepared)
        emp = histogram(rec.counts[:, 0]) / 100_000
        assert total_variation(emp, pmf) < 0.01

    def test_no_switching_is_poisson(self):
        p = TelegraphParams(gamma_loss=0.0, gamma_imp=0.0, f_prep=1.0)
        c = simulate_shots(p, [W], True, 50_000, seed=4).counts[:, 0]
        assert c.mean() == pytest.approx(p.r_low * 6, rel=0.01)
        assert c.var() == pytest.approx(p.r_low * 6, rel=0.03)

    def test_deterministic_and_sliceable(self):
        a = simulate_shots(P, [W], True, 1000, seed=9).counts
        b = simulate_shots(P, [W], True, 1000, seed=9).counts
        tail = simulate_shots(P, [W], True, 400, seed=9, first=600).counts
        assert np.array_equal(a, b)
        assert np.array_equal(a[600:], tail)

    def test_trajectory_shares_switch_time_with_batch(self):
        rec = simulate_shots(P, [W], True, 50, seed=5)
        for i in (0, 17, 49):
            tr = simulate_trajectory(P, W, True, int(trajectory_seeds(5, 50)[i]))
            assert tr.start_blocked == rec.start_blocked[i]
            assert tr.switch_time == pytest.approx(rec.switch_time[i])
            assert tr.counts == tr.binned_counts.sum()
            assert tr.binned_counts.size == 12

    def test_trajectory_no_switch(self):
        tr = simulate_trajectory(FROZEN, W, True, seed_derive(1, "x"))
        assert tr.switch_time is None

    def test_seeds_derived_from_index(self):
        assert int(trajectory_seeds(77, 3)[2]) == seed_derive(77, "trajectory", 2)


class TestTwoWindows:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            two_window_joint(P, W, Window(5.0, 6.0), True, 10, 0)

    def test_state_persists_gives_correlation(self):
        c = two_window_joint(P, W, Window(6.0, 6.0), True, 50_000, 1)
        assert np.corrcoef(c.T)[0, 1] > 0.3

    def test_degenerate_rates_uncorrelated(self):
        p = TelegraphParams(r_low=8.0)
        c = two_window_joint(p, W, Window(6.0, 6.0), True, 50_000, 2)
        assert abs(np.corrcoef(c.T)[0, 1]) < 4 / np.sqrt(50_000)

    def test_frozen_rates_conditionally_independent(self):
        p = TelegraphParams(gamma_loss=0.0, gamma_imp=0.0)
        rec = simulate_shots(p, [W, Window(6.0, 6.0)], True, 50_000, 3)
        for state in (True, False):
            sel = rec.counts[rec.start_blocked == state]
            assert abs(np.corrcoef(sel.T)[0, 1]) < 4 / np.sqrt(len(sel))

    def test_second_window_marginal_matches_exact(self):
        c = two_window_joint(P, W, Window(6.0, 6.0), True, 100_000, 4)
        pmf = exact_pmf(P, Window(6.0, 6.0), True)
        assert total_variation(histogram(c[:, 1]) / 100_000, pmf) < 0.01


def test_count_pmf_helpers():
    pmf = CountPmf(np.array([0.25, 0.5, 0.25]))
    assert pmf.mean == 1.0 and pmf.var == 0.5
    assert np.allclose(pmf.cdf(), [0.25, 0.75, 1.0])
    assert pmf.padded(5).tolist() == [0.25, 0.5, 0.25, 0.0, 0.0]

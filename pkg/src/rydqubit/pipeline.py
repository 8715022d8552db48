"""Targets that regenerate every figure and table analog, and the writer that stores them.

Each target is a pure function of ``(RunConfig, seed)`` returning a
:class:`TargetResult`.  Targets run in worker processes, but all files are
written by the parent in a fixed order, so the artifact directory does not
depend on the worker count.

Directory layout under the output directory::

    config.yaml          the resolved configuration
    provenance.json      origin of every setting
    manifest.json        status of every target
    <target>/data.csv    main curve or histogram
    <target>/*.csv       auxiliary curves, when the target has them
    <target>/summary.json headline numbers and fit results
    <target>/seed.txt    the derived seed of the target

Every CSV starts with ``#`` comment lines carrying the tool version, the
config hash, the target name and its seed, followed by one header row.
"""

from __future__ import annotations

import json
import math
import shutil
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, emit_config, provenance
from .ensemble import (
    double_excitation_fraction,
    mean_density,
    peak_optical_depth,
    rms_pair_distance,
    sample_pair_separations,
)
from .interactions import (
    AverageConvention,
    BlockadeThreshold,
    PairModel,
    ThresholdConvention,
    blockade_average,
    blockade_radius,
    calibrate_threshold,
    pair_potential,
)
from .prep import LEVELS, PrepConfig, evolve, mw_rampdown_comparison, perturbative_coupling, scan_three_photon
from .qubit import (
    fit_rabi,
    fit_ramsey,
    invert_channel,
    leakage_bound,
    rabi_model,
    rabi_population,
    ramsey_contrast,
    ramsey_experiment,
    simulate_rabi_data,
    spectator_leakage,
    two_excitation_contrast,
    washout_time,
    zeeman_splittings,
)
from .readout import (
    Classifier,
    calibrate_r_low,
    detection_operating_point,
    detection_pmfs,
    expected_histograms,
    fidelity_vs_rate,
    fit_histograms,
    fit_impurity,
    repeated_measurement_table,
    synthetic_histograms,
    transistor_gain,
)
from .seeding import seed_derive
from .telegraph import (
    CountPmf,
    Window,
    count_moments,
    exact_pmf,
    histogram,
    mean_rate_curve,
    simulate_shots,
    simulate_trace,
    total_variation,
    two_window_joint,
)


@dataclass
class TargetResult:
    """Tables (name -> ordered columns) and a JSON-ready summary."""

    tables: dict[str, dict[str, np.ndarray]]
    summary: dict
    description: str = ""


@dataclass
class TargetStatus:
    name: str
    ok: bool
    error: str | None = None


@dataclass
class RunReport:
    out_dir: Path
    statuses: list[TargetStatus] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 0 if all(s.ok for s in self.statuses) else 1


def target_seed(cfg: RunConfig, name: str) -> int:
    return seed_derive(cfg.master_seed, name, 0)


# ---------------------------------------------------------------------------
# targets


def _models(cfg: RunConfig):
    i = cfg.interactions
    rr = PairModel.rprime_pair(i.c6_rprime, i.aspect_ratio)
    plus = PairModel.r_rprime_pair("plus", i.c6_r_rprime, i.c3_r_rprime)
    return rr, plus, plus.other_branch()


def blockade(cfg: RunConfig, seed: int) -> TargetResult:
    i = cfg.interactions
    rr, plus, minus = _models(cfg)
    prep_thr = BlockadeThreshold(i.gamma3, ThresholdConvention.FULL_LINEWIDTH)
    eit = calibrate_threshold(plus, i.r_blockade_plus)
    theta = np.linspace(0.0, 90.0, i.n_angles)
    radii = np.array([blockade_radius(rr, prep_thr, float(np.deg2rad(t))) for t in theta])
    r_plus, r_minus = blockade_radius(plus, eit), blockade_radius(minus, eit)
    # one row per (branch, angle); the r r' pair is isotropic, so it has a single row per branch
    table = {
        "theta_deg": np.concatenate([theta, [0.0, 0.0]]),
        "R_um": np.concatenate([radii, [r_plus, r_minus]]),
        "V_MHz": np.concatenate([pair_potential(rr, radii, np.deg2rad(theta)),
                                 [pair_potential(plus, r_plus), pair_potential(minus, r_minus)]]),
        "branch": np.array(["rprime_rprime"] * theta.size + ["plus", "minus"]),
    }
    R = np.geomspace(3.0, 30.0, 200)
    summary = {
        "rprime_rprime_radius_axis_um": radii[0],
        "rprime_rprime_radius_equator_um": radii[-1],
        "rprime_rprime_radius_solid_angle_mean_um": blockade_average(rr, prep_thr),
        "rprime_rprime_radius_geometric_axes_mean_um": blockade_average(
            rr, prep_thr, AverageConvention.GEOMETRIC_AXES_MEAN),
        "rprime_rprime_threshold_MHz": prep_thr.energy,
        "eit_linewidth_MHz": eit.linewidth,
        "r_rprime_radius_plus_um": r_plus,
        "r_rprime_radius_minus_um": r_minus,
        "r_rprime_radius_branch_mean_um": blockade_average(plus, eit, AverageConvention.BRANCH_MEAN),
    }
    return TargetResult(
        {
            "data": table,
            "potentials": {"R_um": R, "V_plus_MHz": pair_potential(plus, R), "V_minus_MHz": pair_potential(minus, R),
                           "V_rprime_rprime_axis_MHz": pair_potential(rr, R, 0.0)},
        },
        summary,
        "blockade radii versus angle and pair potentials",
    )


def ensemble(cfg: RunConfig, seed: int) -> TargetResult:
    geom = cfg.geometry()
    n = cfg.ensemble.n_pairs
    _, plus, minus = _models(cfg)
    R = np.linalg.norm(sample_pair_separations(geom, n, seed_derive(seed, "pairs", 0)), axis=1)
    d0 = rms_pair_distance(geom)
    edges = np.linspace(0.0, 30.0, 61)
    density, _ = np.histogram(R, bins=edges, density=True)
    eit = calibrate_threshold(plus, cfg.interactions.r_blockade_plus)
    frac, frac_se = double_excitation_fraction(geom, plus, eit, n, seed_derive(seed, "blockade", 0))
    summary = {
        "d0_um": d0,
        "rms_pair_distance_mc_um": float(np.sqrt(np.mean(R**2))),
        "mean_pair_distance_mc_um": float(R.mean()),
        "n_pairs": n,
        "od_peak": peak_optical_depth(geom),
        "mean_density_cm3": mean_density(geom),
        "pair_shift_at_d0_plus_MHz": pair_potential(plus, d0),
        "pair_shift_at_d0_minus_MHz": pair_potential(minus, d0),
        "washout_time_plus_ns": 1e3 * washout_time(plus, d0),
        "washout_time_minus_ns": 1e3 * washout_time(minus, d0),
        "double_excitation_fraction": frac,
        "double_excitation_fraction_stderr": frac_se,
    }
    centers = 0.5 * (edges[1:] + edges[:-1])
    return TargetResult({"data": {"R_um": centers, "pair_distance_density": density}}, summary,
                        "pair-distance distribution, optical depth and density")


def prep_scan(cfg: RunConfig, seed: int) -> TargetResult:
    p = cfg.prep
    base = cfg.prep_config()
    grid = np.linspace(-p.scan_span, p.scan_span, p.scan_points)
    ls = scan_three_photon(base, grid, p.dt)
    res = evolve(base, p.dt, check_convergence=True)
    strong = PrepConfig.strong_coupling(delta_e=p.delta_e, delta_r=p.delta_r, duration=p.duration,
                                        gamma_e=p.gamma_e, detuning_sign=p.detuning_sign)
    strong_res = evolve(strong, p.strong_dt, sample_every=0)
    summary = {
        "peak_MHz": ls.peak,
        "fwhm_MHz": ls.fwhm,
        "final_populations": dict(zip(LEVELS, res.final.populations)),
        "max_populations": dict(zip(LEVELS, res.max_populations)),
        "convergence_error": res.convergence_error,
        "flags": list(res.flags),
        "perturbative_coupling_MHz": perturbative_coupling(base),
        "mw_rampdown": mw_rampdown_comparison(base, p.dt),
        "strong_coupling": {
            "omega_p_peak": strong.omega_p_peak, "omega_c_peak": strong.omega_c_peak,
            "omega_mw": strong.omega_mw,
            "final_rprime": strong_res.final_population("rprime"),
            "max_populations": dict(zip(LEVELS, strong_res.max_populations)),
        },
    }
    pops = {"t_us": res.times}
    pops.update({f"P_{name}": res.populations[:, k] for k, name in enumerate(LEVELS)})
    scan = {"detuning_MHz": ls.detuning, "p_rprime": ls.p_rprime, "p_r": ls.p_r, "p_e": ls.p_e}
    return TargetResult({"data": scan, "populations": pops},
                        summary, "three-photon preparation lineshape and population dynamics")


def prep_evolve(cfg: RunConfig, seed: int) -> TargetResult:
    res = evolve(cfg.prep_config(), cfg.prep.dt, check_convergence=True)
    pops = {"t_us": res.times}
    pops.update({f"P_{name}": res.populations[:, k] for k, name in enumerate(LEVELS)})
    summary = {"final_populations": dict(zip(LEVELS, res.final.populations)),
               "max_populations": dict(zip(LEVELS, res.max_populations)),
               "convergence_error": res.convergence_error, "flags": list(res.flags)}
    return TargetResult({"data": pops}, summary, "population dynamics during preparation")


def _padded(a: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[: min(n, a.size)] = a[:n]
    return out


def detection_histograms(cfg: RunConfig, seed: int) -> TargetResult:
    p = cfg.telegraph_params()
    w = cfg.window()
    n = cfg.telegraph.n_shots
    up, down = detection_pmfs(p, w)
    thr, fd = detection_operating_point(p, w)
    mc_up = simulate_shots(replace(p, f_prep=1.0), [w], True, n, seed_derive(seed, "up", 0)).counts[:, 0]
    mc_down = simulate_shots(p, [w], False, n, seed_derive(seed, "down", 0)).counts[:, 0]
    prepared = exact_pmf(p, w, True)
    mc_prep = simulate_shots(p, [w], True, n, seed_derive(seed, "prepared", 0)).counts[:, 0]
    size = max(up.n_max, down.n_max, prepared.n_max, mc_up.max(), mc_down.max(), mc_prep.max()) + 1
    gain, gain_in = transistor_gain(p, w)
    mean_up, _ = count_moments(replace(p, f_prep=1.0), w, True)
    summary = {
        "threshold": thr,
        "detection_fidelity": fd,
        "r_low": p.r_low,
        "r_low_calibrated": calibrate_r_low(cfg.readout.target_fd, p, w),
        "tv_up": total_variation(up, histogram(mc_up) / n),
        "tv_unprepared": total_variation(down, histogram(mc_down) / n),
        "tv_prepared": total_variation(prepared, histogram(mc_prep) / n),
        "mean_up_pmf": up.mean,
        "mean_up_closed_form": mean_up,
        "gain_detected": gain,
        "gain_input_referred": gain_in,
        "n_shots": n,
        "params": asdict(p),
        "window": asdict(w),
    }
    data = {
        "counts": np.arange(size),
        "pmf_up": _padded(up.probs, size),
        "pmf_unprepared": _padded(down.probs, size),
        "pmf_prepared": _padded(prepared.probs, size),
        "mc_up": _padded(histogram(mc_up), size) / n,
        "mc_unprepared": _padded(histogram(mc_down), size) / n,
        "mc_prepared": _padded(histogram(mc_prep), size) / n,
    }
    return TargetResult({"data": data}, summary, "photon-count histograms and threshold classification")


def detection_traces(cfg: RunConfig, seed: int) -> TargetResult:
    p = cfg.telegraph_params()
    t = cfg.telegraph
    w = Window(0.0, t.trace_length)
    bw = t.trace_bin
    traces = {s: simulate_trace(p, w, s == "prepared", t.trace_shots, seed_derive(seed, s, 0), bw)
              for s in ("prepared", "unprepared")}
    n_bins = traces["prepared"].shape[1]
    edges = np.minimum(bw * np.arange(n_bins + 1), w.t_end)
    centers = 0.5 * (edges[1:] + edges[:-1])
    widths = np.diff(edges)
    data = {"t_us": centers}
    for s, counts in traces.items():
        data[f"rate_mc_{s}"] = counts.mean(axis=0) / widths
        data[f"rate_model_{s}"] = mean_rate_curve(p, s == "prepared", centers)
    dev = max(float(np.max(np.abs(data[f"rate_mc_{s}"] - data[f"rate_model_{s}"]))) for s in traces)
    summary = {"bin_width_us": bw, "n_shots": t.trace_shots, "max_abs_rate_deviation": dev,
               "params": asdict(p), "window": asdict(w)}
    return TargetResult({"data": data}, summary, "mean detected photon rate versus time")


def detection_joint(cfg: RunConfig, seed: int) -> TargetResult:
    p = cfg.telegraph_params()
    w1 = cfg.window()
    w2 = Window(w1.t_end, w1.t_len)
    n = cfg.telegraph.n_shots
    counts = two_window_joint(p, w1, w2, True, n, seed_derive(seed, "joint", 0))
    size = int(counts.max()) + 1
    joint = np.zeros((size, size))
    np.add.at(joint, (counts[:, 0], counts[:, 1]), 1.0)
    n1, n2 = np.nonzero(joint)
    summary = {"n_shots": n, "correlation": float(np.corrcoef(counts.T)[0, 1]),
               "mean_first": float(counts[:, 0].mean()), "mean_second": float(counts[:, 1].mean()),
               "params": asdict(p), "windows": [asdict(w1), asdict(w2)]}
    return TargetResult({"data": {"n_first": n1, "n_second": n2, "fraction": joint[n1, n2] / n}}, summary,
                        "joint counts in two consecutive windows of prepared runs")


def fidelity_sweep(cfg: RunConfig, seed: int) -> TargetResult:
    r = cfg.readout
    windows = np.linspace(r.sweep_window_min, r.sweep_window_max, r.sweep_window_points)
    p = cfg.telegraph_params()
    with_penalty = fidelity_vs_rate(r.sweep_rates, r.sweep_beta, p, windows)
    no_penalty = fidelity_vs_rate(r.sweep_rates, 0.0, p, windows)
    k = int(np.argmax(with_penalty.fidelity))
    summary = {"beta": r.sweep_beta, "interior_maximum": with_penalty.interior_maximum,
               "best_rate": with_penalty.r_high[k], "best_fidelity": with_penalty.fidelity[k]}
    data = {"r_high": with_penalty.r_high, "fidelity": with_penalty.fidelity,
            "best_window_us": with_penalty.best_window, "best_threshold": with_penalty.best_threshold,
            "fidelity_no_impurity_penalty": no_penalty.fidelity}
    return TargetResult({"data": data}, summary, "detection fidelity versus transparent photon rate")


def _fit_summary(fit) -> dict:
    return {"r_high": fit.r_high, "r_low": fit.r_low, "gamma_loss": fit.gamma_loss, "f_prep": fit.f_prep,
            "gamma_imp": fit.gamma_imp, "log_likelihood": fit.log_likelihood, "converged": fit.converged,
            "stderr": fit.stderr, "flags": list(fit.flags)}


def histogram_fit(cfg: RunConfig, seed: int) -> TargetResult:
    p = cfg.telegraph_params()
    r = cfg.readout
    windows = [Window(t, cfg.telegraph.window) for t in r.fit_starts]
    hists = synthetic_histograms(p, windows, True, r.fit_shots, seed_derive(seed, "prepared", 0))
    start = replace(p, r_high=0.9 * p.r_high, r_low=0.9 * p.r_low, gamma_loss=1.5 * p.gamma_loss,
                    f_prep=0.9 * p.f_prep)
    fit = fit_histograms(hists, start, restarts=r.fit_restarts, seed=seed_derive(seed, "fit", 0))
    unprep = synthetic_histograms(p, [windows[0]], False, r.fit_shots, seed_derive(seed, "unprepared", 0))[0]
    imp = fit_impurity(unprep, replace(fit.params(p), gamma_imp=2 * p.gamma_imp + 1e-3),
                       restarts=r.fit_restarts, seed=seed_derive(seed, "fit", 1))
    expected = expected_histograms(fit.params(p), windows, True, r.fit_shots)
    rows = {"t_start_us": [], "counts": [], "observed": [], "fitted": []}
    for (w, h), (_, e) in zip(hists, expected):
        size = max(h.size, e.size)
        rows["t_start_us"].append(np.full(size, w.t_start))
        rows["counts"].append(np.arange(size))
        rows["observed"].append(_padded(h, size))
        rows["fitted"].append(_padded(e, size))
    summary = {"truth": asdict(p), "fit": _fit_summary(fit), "impurity_fit": _fit_summary(imp),
               "shots_per_histogram": r.fit_shots}
    return TargetResult({"data": {k: np.concatenate(v) for k, v in rows.items()}}, summary,
                        "maximum-likelihood fit of histograms at several window start times")


def load_histogram(path) -> tuple[Window, np.ndarray, bool]:
    """Read a measured histogram: CSV columns ``count,occurrences`` plus a JSON sidecar.

    The sidecar has the same stem and holds ``t_start`` and ``t_len`` in us,
    and optionally ``prepared`` (default true).  Counts missing from the CSV
    have zero occurrences.
    """
    path = Path(path)
    rows = np.loadtxt(path, delimiter=",", comments="#", skiprows=1, ndmin=2)
    header = next(line for line in path.read_text().splitlines() if not line.startswith("#"))
    if [h.strip() for h in header.split(",")] != ["count", "occurrences"]:
        raise ValueError(f"{path.name}: expected header 'count,occurrences', got '{header}'")
    counts = rows[:, 0].astype(int)
    if np.any(counts < 0) or np.any(rows[:, 1] < 0):
        raise ValueError(f"{path.name}: counts and occurrences must be non-negative")
    hist = np.zeros(counts.max() + 1 if counts.size else 1)
    np.add.at(hist, counts, rows[:, 1])
    meta = json.loads(path.with_suffix(".json").read_text())
    return Window(float(meta["t_start"]), float(meta["t_len"])), hist, bool(meta.get("prepared", True))


def fit_measured(cfg: RunConfig, seed: int, paths) -> TargetResult:
    """Fit histograms read from files; unprepared histograms feed the impurity fit."""
    loaded = [load_histogram(p) for p in paths]
    prepared = [(w, h) for w, h, prep in loaded if prep]
    unprepared = [(w, h) for w, h, prep in loaded if not prep]
    p = cfg.telegraph_params()
    r = cfg.readout
    summary = {"files": [Path(x).name for x in paths]}
    if prepared:
        fit = fit_histograms(prepared, p, restarts=r.fit_restarts, seed=seed_derive(seed, "fit", 0))
        summary["fit"] = _fit_summary(fit)
        p = fit.params(p)
    if unprepared:
        imp = fit_impurity(unprepared, p, restarts=r.fit_restarts, seed=seed_derive(seed, "fit", 1))
        summary["impurity_fit"] = _fit_summary(imp)
        p = imp.params(p)
    rows = {"t_start_us": [], "prepared": [], "counts": [], "observed": [], "fitted": []}
    for w, h, prep in loaded:
        e = expected_histograms(p, [w], prep, h.sum())[0][1]
        size = max(h.size, e.size)
        rows["t_start_us"].append(np.full(size, w.t_start))
        rows["prepared"].append(np.full(size, prep))
        rows["counts"].append(np.arange(size))
        rows["observed"].append(_padded(h, size))
        rows["fitted"].append(_padded(e, size))
    return TargetResult({"data": {k: np.concatenate(v) for k, v in rows.items()}}, summary,
                        "maximum-likelihood fit of measured histograms")


def repeated_table(cfg: RunConfig, seed: int) -> TargetResult:
    p = cfg.telegraph_params()
    w = cfg.window()
    cls = Classifier(detection_operating_point(p, w)[0], w)
    n = cfg.readout.table_shots
    tab = repeated_measurement_table(p, cls, n, seed_derive(seed, "table", 0), cfg.readout.prep_corrected)
    raw = repeated_measurement_table(p, cls, n, seed_derive(seed, "table", 0), False)
    rows = {"ensemble": [], "window": [], "p_detect_up": [], "p_detect_down": []}
    for e, ens in enumerate(("prepared", "unprepared")):
        for k in range(2):
            rows["ensemble"].append(ens)
            rows["window"].append(k + 1)
            rows["p_detect_up"].append(tab.table[e, k, 0])
            rows["p_detect_down"].append(tab.table[e, k, 1])
    summary = {
        "threshold": cls.threshold, "n_shots": n, "prep_corrected": tab.prep_corrected,
        "second_window_up_given_prepared": tab.table[0, 1, 0],
        "agreement": tab.agreement, "agreement_given_up": tab.agreement_given_up,
        "agreement_given_down": tab.agreement_given_down,
        "mean_correct_second_window": 0.5 * (tab.table[0, 1, 0] + tab.table[1, 1, 1]),
        "uncorrected_table": raw.table.tolist(),
    }
    return TargetResult({"data": {k: np.asarray(v) for k, v in rows.items()}}, summary,
                        "repeated detection in two consecutive windows")


def readout_gain(cfg: RunConfig, seed: int) -> TargetResult:
    p = cfg.telegraph_params()
    lengths = np.linspace(1.0, 12.0, 23)
    gains = np.array([transistor_gain(p, Window(0.0, T)) for T in lengths])
    g, gi = transistor_gain(p, cfg.window())
    summary = {"window_us": cfg.telegraph.window, "gain_detected": g, "gain_input_referred": gi,
               "gain_frozen_rates": (p.r_high - p.r_low) * cfg.telegraph.window}
    return TargetResult({"data": {"window_us": lengths, "gain_detected": gains[:, 0],
                                  "gain_input_referred": gains[:, 1]}}, summary,
                        "single-excitation transistor gain versus window length")


def rabi(cfg: RunConfig, seed: int) -> TargetResult:
    q = cfg.qubit
    rc = cfg.rabi_config()
    ch = cfg.channel()
    t = np.linspace(0.0, q.rabi_t_max, q.rabi_points)
    measured = simulate_rabi_data(rc, ch, t, q.rabi_shots, seed_derive(seed, "rabi", 0))
    fit = fit_rabi(t, measured, ch, seed=seed_derive(seed, "fit", 0))
    corrected, _ = invert_channel(ch, measured)
    noiseless = fit_rabi(t, rabi_population(replace(rc, include_spectator=False), t))
    tt = np.linspace(0.0, q.rabi_t_max, 601)
    z = zeeman_splittings(q.bias_field)
    summary = {
        "pi_time_ns": 1e3 * rc.pi_time,
        "fit": {"omega_MHz": fit.omega, "initial_contrast": fit.initial_contrast,
                "contrast_decay_per_2pi": fit.contrast_decay_per_2pi, "stderr": fit.stderr,
                "flags": list(fit.flags)},
        "noiseless_contrast_decay_per_2pi": noiseless.contrast_decay_per_2pi,
        "zeeman_p32_MHz": z["p32_MHz"], "zeeman_s12_MHz": z["s12_MHz"],
        "spectator_leakage_max": float(spectator_leakage(replace(rc, include_spectator=True), tt).max()),
        "spectator_leakage_bound": leakage_bound(rc),
        "channel": {"f_prep": ch.f_prep, "f_det": ch.f_det},
        "n_shots": q.rabi_shots,
    }
    data = {"t_us": t, "measured": measured, "corrected": corrected,
            "fitted": rabi_model((fit.omega, fit.initial_contrast, fit.contrast_decay_per_2pi), t)}
    return TargetResult({"data": data}, summary, "Rabi oscillation with measurement-error correction")


def washout(cfg: RunConfig, seed: int) -> TargetResult:
    q = cfg.qubit
    geom = cfg.geometry()
    _, plus, minus = _models(cfg)
    t = np.linspace(0.0, q.washout_t_max, 101)
    cp = two_excitation_contrast(plus, geom, t, q.washout_pairs, seed_derive(seed, "pairs", 0))
    cm = two_excitation_contrast(minus, geom, t, q.washout_pairs, seed_derive(seed, "pairs", 0))
    d0 = rms_pair_distance(geom)
    summary = {"washout_time_plus_ns": 1e3 * washout_time(plus, d0),
               "washout_time_minus_ns": 1e3 * washout_time(minus, d0),
               "n_pairs": q.washout_pairs}
    return TargetResult({"data": {"t_us": t, "contrast_plus": cp, "contrast_minus": cm}}, summary,
                        "dephasing of oscillations carried by two interacting excitations")


def ramsey(cfg: RunConfig, seed: int) -> TargetResult:
    q = cfg.qubit
    rc = cfg.ramsey_config()
    taus = np.linspace(0.0, q.ramsey_tau_max, q.ramsey_taus)
    data = ramsey_experiment(rc, taus, q.ramsey_shots, seed_derive(seed, "ramsey", 0))
    fit = fit_ramsey(taus, data.contrast, seed=seed_derive(seed, "fit", 0))
    summary = {"amplitude": fit.amplitude, "t2_star_us": fit.t2_star, "stderr": fit.stderr,
               "flags": list(fit.flags), "detuning_sigma_rad_per_us": rc.detuning_sigma,
               "shots_per_point": q.ramsey_shots, "n_phases": rc.n_phases}
    table = {"tau_us": taus, "contrast": data.contrast, "stderr": data.stderr,
             "model": ramsey_contrast(rc, taus)}
    return TargetResult({"data": table}, summary, "Ramsey fringe contrast versus delay")


TARGETS = {
    "blockade": blockade,
    "ensemble": ensemble,
    "prep_scan": prep_scan,
    "detection_histograms": detection_histograms,
    "detection_traces": detection_traces,
    "fidelity_sweep": fidelity_sweep,
    "histogram_fit": histogram_fit,
    "repeated_table": repeated_table,
    "rabi": rabi,
    "ramsey": ramsey,
}

EXTRA_TARGETS = {
    "prep_evolve": prep_evolve,
    "detection_joint": detection_joint,
    "readout_gain": readout_gain,
    "washout": washout,
}


# ---------------------------------------------------------------------------
# writing


def _json_ready(x):
    if is_dataclass(x):
        return _json_ready(asdict(x))
    if isinstance(x, dict):
        return {str(k): _json_ready(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_json_ready(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, CountPmf):
        return x.probs.tolist()
    return x


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    return str(v)


def _header_lines(cfg: RunConfig, name: str, seed: int) -> list[str]:
    return [f"# rydqubit {__version__}", f"# config_sha256 {cfg.config_hash()}", f"# target {name}",
            f"# seed {seed}"]


def write_csv(path: Path, columns: dict[str, np.ndarray], header: list[str]):
    cols = {k: np.asarray(v) for k, v in columns.items()}
    n = {c.shape[0] for c in cols.values()}
    if len(n) != 1:
        raise ValueError(f"{path.name}: columns differ in length")
    lines = list(header)
    lines.append(",".join(cols))
    for row in zip(*cols.values()):
        lines.append(",".join(_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, obj: dict):
    path.write_text(json.dumps(_json_ready(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def write_target(cfg: RunConfig, out_dir: Path, name: str, result: TargetResult, seed: int) -> Path:
    d = out_dir / name
    if d.exists():
        shutil.rmtree(d)
    d.mkdir(parents=True)
    header = _header_lines(cfg, name, seed)
    for table, columns in result.tables.items():
        write_csv(d / f"{table}.csv", columns, header)
    write_json(d / "summary.json", {"target": name, "description": result.description, "seed": seed,
                                    "tool_version": __version__, "config_sha256": cfg.config_hash(),
                                    "results": result.summary})
    (d / "seed.txt").write_text(f"{seed}\n")
    return d


def _run_one(name: str, cfg: RunConfig):
    fn = TARGETS.get(name) or EXTRA_TARGETS[name]
    seed = target_seed(cfg, name)
    try:
        return name, seed, fn(cfg, seed), None
    except Exception:
        return name, seed, None, traceback.format_exc(limit=4)


def run_targets(cfg: RunConfig, names, jobs: int = 1, out_dir: Path | None = None) -> RunReport:
    """Run ``names`` and write their files; failures are recorded, not raised."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = list(names)
    if jobs > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(names))) as pool:
            outcomes = list(pool.map(_run_one, names, [cfg] * len(names)))
    else:
        outcomes = [_run_one(n, cfg) for n in names]
    report = RunReport(out_dir)
    for name, seed, result, err in outcomes:
        if err is None:
            try:
                write_target(cfg, out_dir, name, result, seed)
            except Exception:
                err = traceback.format_exc(limit=4)
        if err is not None:
            d = out_dir / name
            d.mkdir(exist_ok=True)
            write_json(d / "error.json", {"target": name, "seed": seed, "tool_version": __version__,
                                          "config_sha256": cfg.config_hash(), "error": err})
        report.statuses.append(TargetStatus(name, err is None, err.strip().splitlines()[-1] if err else None))
    return report


def reproduce_all(cfg: RunConfig, jobs: int = 1, out_dir: Path | None = None) -> RunReport:
    """Regenerate every target plus config.yaml, provenance.json and manifest.json."""
    out_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    report = run_targets(cfg, TARGETS, jobs, out_dir)
    header = f"# rydqubit {__version__}\n# config_sha256 {cfg.config_hash()}\n"
    # the stored copy points at its own directory, so moving the artifacts keeps them byte-stable
    local = cfg.with_overrides(out=".")
    (out_dir / "config.yaml").write_text(header + emit_config(local))
    write_json(out_dir / "provenance.json", provenance(local))
    write_json(out_dir / "manifest.json", {
        "tool_version": __version__, "config_sha256": cfg.config_hash(), "master_seed": cfg.master_seed,
        "targets": [{"name": s.name, "ok": s.ok, "error": s.error, "seed": target_seed(cfg, s.name)}
                    for s in report.statuses],
    })
    return report

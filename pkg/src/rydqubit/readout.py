"""Turning photon counts into qubit outcomes.

Threshold classification and its fidelity, calibration of the blockaded
rate, maximum-likelihood fits of count histograms, repeated-measurement
tables, transistor gain and the fidelity-versus-probe-rate trade-off.

Convention: few counts means the probe was blocked, i.e. the qubit is up.
A count ``n`` is classified up when ``n <= threshold``.  Detection fidelity
is the unweighted mean of the two correct-classification probabilities,
with the up distribution evaluated at ``f_prep = 1`` so that preparation
errors are not charged to the detector.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .estimate import Objective, hessian_standard_errors, minimize, poisson_histogram_loglik
from .seeding import seed_derive, uniforms, seed_derive_array
from .telegraph import (
    CountPmf,
    TelegraphParams,
    Window,
    component_pmfs,
    count_moments,
    exact_pmf,
    two_window_joint,
    window_state_weights,
)

DEFAULT_WINDOW = Window(0.0, 6.0)
TARGET_FD = 0.92
# objective value for parameter vectors outside the model's domain
INFEASIBLE = 1e100


@dataclass(frozen=True)
class Classifier:
    threshold: int
    window: Window = DEFAULT_WINDOW

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    def is_up(self, counts) -> np.ndarray:
        return np.asarray(counts) <= self.threshold


# ---------------------------------------------------------------------------
# thresholds and calibration


def fidelity_curve(pmf_up, pmf_down) -> np.ndarray:
    """F(theta) = (P(n <= theta | up) + P(n > theta | down)) / 2 for every theta."""
    up = np.asarray(getattr(pmf_up, "probs", pmf_up), float)
    down = np.asarray(getattr(pmf_down, "probs", pmf_down), float)
    size = max(up.size, down.size)
    cu = np.cumsum(np.pad(up, (0, size - up.size)))
    cd = np.cumsum(np.pad(down, (0, size - down.size)))
    return 0.5 * (cu + 1.0 - cd)


def optimal_threshold(pmf_up, pmf_down) -> tuple[int, float]:
    """Threshold with the highest balanced fidelity; the smallest one on ties."""
    f = fidelity_curve(pmf_up, pmf_down)
    k = int(np.argmax(f))
    return k, float(f[k])


def detection_pmfs(p: TelegraphParams, w: Window = DEFAULT_WINDOW) -> tuple[CountPmf, CountPmf]:
    """Up distribution with preparation error removed, and the unprepared one."""
    return exact_pmf(replace(p, f_prep=1.0), w, True), exact_pmf(p, w, False)


def detection_operating_point(p: TelegraphParams, w: Window = DEFAULT_WINDOW) -> tuple[int, float]:
    return optimal_threshold(*detection_pmfs(p, w))


def calibrate_r_low(target_fd: float = TARGET_FD, fixed: TelegraphParams = TelegraphParams(),
                    window: Window = DEFAULT_WINDOW, xtol: float = 1e-6) -> float:
    """Blockaded rate at which the optimal detection fidelity equals ``target_fd``.

    Raises ValueError, quoting the achievable range, when the target cannot
    be met for any r_low in [0, r_high].
    """

    def fd(r_low):
        return detection_operating_point(replace(fixed, r_low=r_low), window)[1]

    best = fd(0.0)
    if target_fd <= 0.5:
        return fixed.r_high
    if target_fd > best:
        raise ValueError(f"target F_d={target_fd} unreachable; achievable range is [0.5, {best:.6f}]")
    return float(brentq(lambda r: fd(r) - target_fd, 0.0, fixed.r_high, xtol=xtol))


def transistor_gain(p: TelegraphParams, w: Window = DEFAULT_WINDOW) -> tuple[float, float]:
    """Photons removed by one stored excitation: (detected, referred to the input)."""
    down = count_moments(p, w, False)[0]
    up = count_moments(replace(p, f_prep=1.0), w, True)[0]
    gain = down - up
    return gain, gain / (p.collection_eff * p.detection_eff)


# ---------------------------------------------------------------------------
# histogram fitting


@dataclass
class TelegraphFit:
    r_high: float
    r_low: float
    gamma_loss: float
    f_prep: float
    gamma_imp: float
    log_likelihood: float
    converged: bool
    n_restarts_used: int
    stderr: dict = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def params(self, base: TelegraphParams = TelegraphParams()) -> TelegraphParams:
        return replace(base, r_high=self.r_high, r_low=self.r_low, gamma_loss=self.gamma_loss,
                       f_prep=self.f_prep, gamma_imp=self.gamma_imp)


class _HistogramLikelihood:
    """Log-likelihood of several windows, sharing component PMFs per window length."""

    def __init__(self, histograms, prepared: bool, n_nodes: int):
        self.items = [(w, np.asarray(h, float)) for w, h in histograms]
        self.prepared = prepared
        self.n_nodes = n_nodes
        self.by_len: dict[float, int] = {}
        for w, h in self.items:
            self.by_len[w.t_len] = max(self.by_len.get(w.t_len, 0), h.size - 1)

    def __call__(self, p: TelegraphParams) -> float:
        comps = {T: component_pmfs(p, T, n_max, self.n_nodes) for T, n_max in self.by_len.items()}
        total = 0.0
        for w, h in self.items:
            pmf = window_state_weights(p, w.t_start, self.prepared) @ comps[w.t_len]
            total += poisson_histogram_loglik(pmf, h)
        return total


def _low_rank(histograms) -> bool:
    return any(np.count_nonzero(np.asarray(h)) <= 1 for _, h in histograms)


def _fit(histograms, init: TelegraphParams, names, bounds, prepared, restarts, seed, n_nodes, tol):
    like = _HistogramLikelihood(histograms, prepared, n_nodes)

    def nll(x):
        trial = dict(zip(names, x))
        r_high = trial.get("r_high", init.r_high)
        r_low = trial.get("r_low", init.r_low)
        if not 0 <= r_low <= r_high or np.any(np.asarray(x) < 0):
            return INFEASIBLE
        return -like(replace(init, **trial))

    x0 = np.array([getattr(init, n) for n in names], float)
    res = minimize(Objective(nll, bounds), x0, restarts=restarts, tol=tol, seed=seed)
    with np.errstate(all="ignore"):
        se = hessian_standard_errors(nll, res.point)
    values = dict(zip(names, res.point))
    flags = []
    if _low_rank(histograms):
        flags.append("low_rank")
    if not np.all(np.isfinite(se)):
        flags.append("singular_curvature")
    fitted = replace(init, **values)
    return TelegraphFit(
        r_high=fitted.r_high, r_low=fitted.r_low, gamma_loss=fitted.gamma_loss, f_prep=fitted.f_prep,
        gamma_imp=fitted.gamma_imp, log_likelihood=-res.value, converged=res.converged,
        n_restarts_used=restarts, stderr={n: float(s) for n, s in zip(names, se)},
        flags=tuple(flags) + tuple(res.flags),
    )


def fit_histograms(histograms, init: TelegraphParams = TelegraphParams(), prepared: bool = True,
                   fit_gamma_imp: bool = False, restarts: int = 8, seed: int = 0,
                   n_nodes: int = 64, tol: float = 1e-7) -> TelegraphFit:
    """Maximum-likelihood fit of (r_high, r_low, gamma_loss, f_prep) to windowed histograms.

    ``histograms`` is a list of ``(Window, counts_histogram)``.  At least two
    distinct window start times are needed to separate the preparation
    fidelity from the loss rate.
    """
    starts = {w.t_start for w, _ in histograms}
    if len(histograms) < 2 or len(starts) < 2:
        raise ValueError("need histograms at two or more distinct window start times")
    names = ["r_high", "r_low", "gamma_loss", "f_prep"]
    bounds = [(0.0, None), (0.0, None), (0.0, None), (0.0, 1.0)]
    if fit_gamma_imp:
        names.append("gamma_imp")
        bounds.append((0.0, None))
    return _fit(histograms, init, names, bounds, prepared, restarts, seed, n_nodes, tol)


def fit_impurity(histograms, init: TelegraphParams = TelegraphParams(), restarts: int = 8,
                 seed: int = 0, n_nodes: int = 64, tol: float = 1e-7,
                 identifiability: float = 0.05) -> TelegraphFit:
    """Fit (r_high, gamma_imp) to unprepared histograms with r_low held at ``init``.

    Accepts a single ``(Window, hist)`` pair or a list of them.  The fit is
    flagged ``unidentifiable`` when the fitted transparent rate is within
    ``identifiability`` (relative) of r_low, since the switch is then invisible.
    """
    if isinstance(histograms, tuple) and isinstance(histograms[0], Window):
        histograms = [histograms]
    fit = _fit(histograms, init, ["r_high", "gamma_imp"], [(0.0, None), (0.0, None)], False,
               restarts, seed, n_nodes, tol)
    if abs(fit.r_high - fit.r_low) < identifiability * fit.r_high:
        fit.flags = fit.flags + ("unidentifiable",)
    return fit


def synthetic_histograms(p: TelegraphParams, windows, prepared: bool, n_shots: int, seed: int):
    """Independent runs per window, sampled from the exact count distribution."""
    out = []
    for k, w in enumerate(windows):
        pmf = exact_pmf(p, w, prepared)
        u = uniforms(seed_derive_array(seed, f"histogram-{k}", np.arange(n_shots)), 0)
        counts = np.searchsorted(pmf.cdf(), u, side="right")
        counts = np.minimum(counts, pmf.n_max)
        out.append((w, np.bincount(counts, minlength=pmf.n_max + 1).astype(float)))
    return out


def expected_histograms(p: TelegraphParams, windows, prepared: bool, n_shots: float):
    """Noise-free histograms: ``n_shots`` times the exact distribution."""
    return [(w, n_shots * exact_pmf(p, w, prepared).probs) for w in windows]


# ---------------------------------------------------------------------------
# repeated measurement


@dataclass
class RepeatedTable:
    """Outcome fractions indexed [ensemble, window, outcome].

    ensemble 0 is prepared and 1 unprepared; outcome 0 is "detect up".
    ``agreement`` averages P(second = first | first up) and
    P(second = first | first down) over shots pooled from both ensembles.
    """

    table: np.ndarray
    agreement: float
    agreement_given_up: float
    agreement_given_down: float
    n_shots: int
    prep_corrected: bool


def repeated_measurement_table(p: TelegraphParams, cls: Classifier, n_shots: int, seed: int,
                               prep_corrected: bool = True) -> RepeatedTable:
    """Classify two back-to-back windows for prepared and unprepared runs.

    With ``prep_corrected`` the prepared runs use ``f_prep = 1``, so the
    table reports detector behaviour alone; otherwise preparation failures
    appear in the prepared column.
    """
    w1 = cls.window
    w2 = Window(w1.t_end, w1.t_len)
    prepared_params = replace(p, f_prep=1.0) if prep_corrected else p
    joint = [
        two_window_joint(prepared_params, w1, w2, True, n_shots, seed_derive(seed, "table", 0)),
        two_window_joint(p, w1, w2, False, n_shots, seed_derive(seed, "table", 1)),
    ]
    table = np.empty((2, 2, 2))
    for e, counts in enumerate(joint):
        up = cls.is_up(counts)
        table[e, :, 0] = up.mean(axis=0)
        table[e, :, 1] = 1 - table[e, :, 0]
    up = cls.is_up(np.vstack(joint))
    first_up = up[:, 0]
    a_up = float(np.mean(up[first_up, 1])) if first_up.any() else np.nan
    a_down = float(np.mean(~up[~first_up, 1])) if (~first_up).any() else np.nan
    return RepeatedTable(table, 0.5 * (a_up + a_down), a_up, a_down, n_shots, prep_corrected)


# ---------------------------------------------------------------------------
# probe-rate trade-off


@dataclass
class RateSweep:
    r_high: np.ndarray
    fidelity: np.ndarray
    best_window: np.ndarray
    best_threshold: np.ndarray

    @property
    def interior_maximum(self) -> bool:
        k = int(np.argmax(self.fidelity))
        return 0 < k < self.fidelity.size - 1


def fidelity_vs_rate(rates, beta: float, p: TelegraphParams = TelegraphParams(),
                     window_lengths=np.linspace(3.0, 8.0, 11)) -> RateSweep:
    """Best detection fidelity per transparent rate, optimising the window length.

    The impurity rate scales with the probe as ``gamma_imp = beta * r_high``
    and the blockaded rate keeps its ratio to r_high.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    ratio = p.r_low / p.r_high
    rates = np.asarray(rates, float)
    fd = np.empty(rates.size)
    best_t = np.empty(rates.size)
    best_thr = np.empty(rates.size, dtype=int)
    for i, r in enumerate(rates):
        q = replace(p, r_high=r, r_low=ratio * r, gamma_imp=beta * r)
        results = [(detection_operating_point(q, Window(0.0, T)), T) for T in window_lengths]
        (thr, f), T = max(results, key=lambda item: item[0][1])
        fd[i], best_t[i], best_thr[i] = f, T, thr
    return RateSweep(rates, fd, best_t, best_thr)

"""Photon counting with a single random rate switch.

During detection the probe is transmitted at ``r_high`` when the medium is
transparent and at ``r_low`` when a Rydberg atom blocks it.  The state can
change at most once, at an exponentially distributed time:

* blocked -> transparent at ``gamma_loss`` (the stored atom is lost),
* transparent -> blocked at ``gamma_imp`` (a polariton decays into a
  stationary impurity).

A "prepared" shot starts blocked with probability ``f_prep`` and otherwise
behaves like an unprepared shot.  All clocks start at the end of
preparation, so a window opening at ``t_start`` sees the state distribution
that has already evolved for that long.  Rates are detected photons per us.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy
from scipy.stats import poisson

from .estimate import composite_nodes
from .seeding import seed_derive_array, uniforms

# blockaded detected rate that gives a 0.92 balanced fidelity in 6 us at the
# defaults below; regenerate with readout.calibrate_r_low()
R_LOW_CALIBRATED = 3.4190345
# photoionisation rate of r' in the control beam, per us (documentation only)
GAMMA_PHOTOIONIZATION = 340e-6
TAIL_MASS = 1e-13


@dataclass(frozen=True)
class TelegraphParams:
    r_high: float = 8.0
    r_low: float = R_LOW_CALIBRATED
    gamma_loss: float = 0.035
    gamma_imp: float = 0.015
    f_prep: float = 0.93
    collection_eff: float = 0.90
    detection_eff: float = 0.47
    # whether the (1 - f_prep) part of a prepared shot can create an impurity
    impurity_when_unprepared: bool = True

    def __post_init__(self):
        if not 0 <= self.r_low <= self.r_high:
            raise ValueError(f"need 0 <= r_low <= r_high, got r_low={self.r_low}, r_high={self.r_high}")
        if self.gamma_loss < 0 or self.gamma_imp < 0:
            raise ValueError("switching rates must be non-negative")
        if not 0 <= self.f_prep <= 1:
            raise ValueError("f_prep must lie in [0, 1]")
        for name in ("collection_eff", "detection_eff"):
            if not 0 < getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in (0, 1]")


@dataclass(frozen=True)
class Window:
    t_start: float = 0.0
    t_len: float = 6.0

    def __post_init__(self):
        if self.t_start < 0:
            raise ValueError("t_start must be >= 0")
        if not self.t_len > 0:
            raise ValueError("t_len must be > 0")

    @property
    def t_end(self) -> float:
        return self.t_start + self.t_len


@dataclass(frozen=True)
class CountPmf:
    probs: np.ndarray

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size)

    @property
    def mean(self) -> float:
        return float(self.support @ self.probs)

    @property
    def var(self) -> float:
        n = self.support
        return float((n * n) @ self.probs - self.mean**2)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def padded(self, size: int) -> np.ndarray:
        out = np.zeros(max(size, self.probs.size))
        out[: self.probs.size] = self.probs
        return out


# ---------------------------------------------------------------------------
# state bookkeeping


def window_state_weights(p: TelegraphParams, t_start: float, prepared: bool) -> np.ndarray:
    """Probabilities of the four possible states when a window opens.

    Order: blocked with a pending loss, transparent for good, transparent
    with a pending impurity, blocked for good.
    """
    f = p.f_prep if prepared else 0.0
    keep_loss = np.exp(-p.gamma_loss * t_start)
    keep_imp = np.exp(-p.gamma_imp * t_start)
    if prepared and not p.impurity_when_unprepared:
        return np.array([f * keep_loss, f * (1 - keep_loss) + (1 - f), 0.0, 0.0])
    return np.array([f * keep_loss, f * (1 - keep_loss), (1 - f) * keep_imp, (1 - f) * (1 - keep_imp)])


def blocked_probability(p: TelegraphParams, prepared: bool, t) -> np.ndarray:
    w = window_state_weights(p, 0.0, prepared)
    t = np.asarray(t, float)
    return w[0] * np.exp(-p.gamma_loss * t) + w[2] * (1 - np.exp(-p.gamma_imp * t))


def mean_rate_curve(p: TelegraphParams, prepared: bool, t_grid) -> np.ndarray:
    """Expected detected photon rate (per us) at each time since preparation."""
    t = np.asarray(t_grid, float)
    if np.any(np.diff(t) < 0):
        raise ValueError("t_grid must be sorted")
    pb = blocked_probability(p, prepared, t)
    return pb * p.r_low + (1 - pb) * p.r_high


# ---------------------------------------------------------------------------
# exact distributions


def _poisson_matrix(n: np.ndarray, lam: np.ndarray) -> np.ndarray:
    return np.exp(xlogy(n[:, None], lam[None, :]) - lam[None, :] - gammaln(n[:, None] + 1))


def _poisson(n: np.ndarray, lam: float) -> np.ndarray:
    return _poisson_matrix(n, np.array([lam]))[:, 0]


def switch_pmf(n: np.ndarray, rate_before: float, rate_after: float, gamma: float, T: float,
               n_nodes: int = 256) -> np.ndarray:
    """Counts in a window of length T whose rate may switch once at rate gamma.

    P(n) = exp(-gamma T) Pois(n; a T)
           + integral_0^T gamma exp(-gamma s) Pois(n; a s + b (T - s)) ds
    """
    if gamma == 0.0 or rate_before == rate_after:
        return _poisson(n, rate_before * T)
    s, w = composite_nodes(0.0, T, n_nodes)
    lam = rate_before * s + rate_after * (T - s)
    dens = gamma * np.exp(-gamma * s) * w
    return np.exp(-gamma * T) * _poisson(n, rate_before * T) + _poisson_matrix(n, lam) @ dens


def support_size(p: TelegraphParams, T: float) -> int:
    """Smallest n_max + 1 whose Poisson tail at the highest rate is below TAIL_MASS."""
    return int(poisson.isf(TAIL_MASS, p.r_high * T)) + 2


def component_pmfs(p: TelegraphParams, T: float, n_max: int, n_nodes: int = 256) -> np.ndarray:
    """Count PMFs for the four window-opening states, shape (4, n_max + 1)."""
    n = np.arange(n_max + 1, dtype=float)
    return np.stack([
        switch_pmf(n, p.r_low, p.r_high, p.gamma_loss, T, n_nodes),
        _poisson(n, p.r_high * T),
        switch_pmf(n, p.r_high, p.r_low, p.gamma_imp, T, n_nodes),
        _poisson(n, p.r_low * T),
    ])


def exact_pmf(p: TelegraphParams, w: Window, prepared: bool, n_nodes: int = 256,
              n_max: int | None = None) -> CountPmf:
    """Distribution of detected counts in window ``w``."""
    n_max = support_size(p, w.t_len) if n_max is None else n_max
    comps = component_pmfs(p, w.t_len, n_max, n_nodes)
    return CountPmf(window_state_weights(p, w.t_start, prepared) @ comps)


def _min_moments(gamma: float, T: float) -> tuple[float, float]:
    """E[min(tau, T)] and E[min(tau, T)^2] for tau ~ Exp(gamma)."""
    x = gamma * T
    if x < 1e-4:
        m1 = T * (1 - x / 2 + x * x / 6)
        m2 = T * T * (1 - 2 * x / 3 + x * x / 4)
        return m1, m2
    m1 = -np.expm1(-x) / gamma
    m2 = 2 * (-np.expm1(-x) - x * np.exp(-x)) / gamma**2
    return float(m1), float(m2)


def count_moments(p: TelegraphParams, w: Window, prepared: bool) -> tuple[float, float]:
    """Closed-form mean and variance of the window counts (no quadrature)."""
    T = w.t_len
    weights = window_state_weights(p, w.t_start, prepared)
    means, second = [], []
    for a, b, g in ((p.r_low, p.r_high, p.gamma_loss), (p.r_high, p.r_low, p.gamma_imp)):
        m1, m2 = _min_moments(g, T)
        mu = b * T + (a - b) * m1
        lam2 = (b * T) ** 2 + 2 * b * T * (a - b) * m1 + (a - b) ** 2 * m2
        means.append(mu)
        second.append(mu + lam2)
    for rate in (p.r_high, p.r_low):
        mu = rate * T
        means.append(mu)
        second.append(mu + mu * mu)
    order = [0, 2, 1, 3]
    means = np.array(means)[order]
    second = np.array(second)[order]
    mean = float(weights @ means)
    return mean, float(weights @ second - mean**2)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass
class ShotRecord:
    start_blocked: np.ndarray
    switch_time: np.ndarray
    counts: np.ndarray


@dataclass
class Trajectory:
    start_blocked: bool
    switch_time: float | None
    counts: int
    binned_counts: np.ndarray
    bin_edges: np.ndarray


def _simulate(seeds: np.ndarray, p: TelegraphParams, intervals, prepared: bool) -> ShotRecord:
    """Core sampler: draw 0 picks the initial state, draw 1 the switch time and
    draw 2 + j the Poisson count in interval j."""
    u0 = uniforms(seeds, 0)
    u1 = uniforms(seeds, 1)
    blocked = (u0 < p.f_prep) if prepared else np.zeros(seeds.size, bool)
    gamma = np.where(blocked, p.gamma_loss, p.gamma_imp)
    if prepared and not p.impurity_when_unprepared:
        gamma = np.where(blocked, gamma, 0.0)
    with np.errstate(divide="ignore"):
        tau = np.where(gamma > 0, -np.log(u1) / np.where(gamma > 0, gamma, 1.0), np.inf)
    before = np.where(blocked, p.r_low, p.r_high)
    after = np.where(blocked, p.r_high, p.r_low)
    counts = np.empty((seeds.size, len(intervals)), dtype=np.int64)
    for j, (t0, t1) in enumerate(intervals):
        in_first = np.clip(np.minimum(tau, t1) - t0, 0.0, t1 - t0)
        lam = before * in_first + after * (t1 - t0 - in_first)
        counts[:, j] = poisson.ppf(uniforms(seeds, 2 + j), lam).astype(np.int64)
    return ShotRecord(blocked, tau, counts)


def trajectory_seeds(seed: int, n_shots: int, first: int = 0) -> np.ndarray:
    return seed_derive_array(seed, "trajectory", np.arange(first, first + n_shots))


def simulate_shots(p: TelegraphParams, windows, prepared: bool, n_shots: int, seed: int,
                   first: int = 0) -> ShotRecord:
    """Counts in each window for ``n_shots`` independent runs.

    Shot ``i`` draws from its own stream derived from ``(seed, i)``, so any
    slice of shots can be generated separately and concatenated.
    """
    intervals = [(w.t_start, w.t_end) for w in windows]
    return _simulate(trajectory_seeds(seed, n_shots, first), p, intervals, prepared)


def _bin_edges(w: Window, bin_width: float) -> np.ndarray:
    n = int(np.ceil(w.t_len / bin_width - 1e-9))
    return np.minimum(w.t_start + bin_width * np.arange(n + 1), w.t_end)


def simulate_trace(p: TelegraphParams, w: Window, prepared: bool, n_shots: int, seed: int,
                   bin_width: float = 0.5) -> np.ndarray:
    """Binned counts, shape (n_shots, n_bins)."""
    edges = _bin_edges(w, bin_width)
    rec = _simulate(trajectory_seeds(seed, n_shots), p, list(zip(edges[:-1], edges[1:])), prepared)
    return rec.counts


def simulate_trajectory(p: TelegraphParams, w: Window, prepared: bool, rng_seed: int,
                        bin_width: float = 0.5) -> Trajectory:
    """One run: initial state, switch time and counts binned every ``bin_width`` us.

    ``rng_seed`` is the trajectory's own stream seed, so passing the i-th
    value of :func:`trajectory_seeds` reproduces shot i's initial state and
    switch time.  The window total is the sum of the bins.
    """
    edges = _bin_edges(w, bin_width)
    rec = _simulate(np.array([rng_seed], dtype=np.uint64), p, list(zip(edges[:-1], edges[1:])), prepared)
    tau = float(rec.switch_time[0])
    binned = rec.counts[0]
    return Trajectory(bool(rec.start_blocked[0]), tau if np.isfinite(tau) else None,
                      int(binned.sum()), binned, edges)


def two_window_joint(p: TelegraphParams, w1: Window, w2: Window, prepared: bool, n_shots: int,
                     seed: int) -> np.ndarray:
    """Counts in two consecutive windows of the same runs, shape (n_shots, 2)."""
    if w2.t_start < w1.t_end - 1e-12:
        raise ValueError("second window must start after the first one ends")
    return simulate_shots(p, [w1, w2], prepared, n_shots, seed).counts


def histogram(counts, n_max: int | None = None) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64).ravel()
    size = (int(counts.max()) if counts.size else 0) + 1
    if n_max is not None:
        size = max(size, n_max + 1)
    return np.bincount(counts, minlength=size).astype(float)


def total_variation(a, b) -> float:
    a = np.asarray(getattr(a, "probs", a), float)
    b = np.asarray(getattr(b, "probs", b), float)
    size = max(a.size, b.size)
    pa = np.zeros(size)
    pb = np.zeros(size)
    pa[: a.size] = a
    pb[: b.size] = b
    return 0.5 * float(np.abs(pa - pb).sum())

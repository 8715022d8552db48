"""Coherent qubit dynamics between |up> = r' and |down> = r, and the
measurement channel that sits between them and the photon counter.

Stored frequencies are ordinary MHz.  Phases are formed as 2 pi f t where
they are used, with one exception kept explicit in its name: the Ramsey
detuning spread ``detuning_sigma`` is an angular frequency in rad/us, so
that a Gaussian spread of width sqrt(2)/T2* gives exactly exp(-(tau/T2*)^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import physical_constants
from scipy.signal import lombscargle
from scipy.special import ndtri

from .ensemble import CloudGeometry, pair_angles, sample_pair_separations
from .estimate import least_squares_errors, least_squares_fit
from .interactions import PairModel, pair_potential
from .seeding import seed_derive_array, uniforms

# Bohr magneton in MHz per gauss
MU_B_MHZ_PER_G = physical_constants["Bohr magneton in Hz/T"][0] * 1e-4 * 1e-6
G_J_P32 = 4.0 / 3.0
G_J_S12 = 2.0
BIAS_FIELD_G = 9.0


def zeeman_splittings(b_gauss: float) -> dict[str, float]:
    """Splitting between neighbouring m_J sublevels, g_J mu_B B, in MHz."""
    if b_gauss < 0:
        raise ValueError("field must be >= 0")
    return {"p32_MHz": G_J_P32 * MU_B_MHZ_PER_G * b_gauss, "s12_MHz": G_J_S12 * MU_B_MHZ_PER_G * b_gauss}


@dataclass(frozen=True)
class RabiConfig:
    omega: float = 5.3
    mw_frequency: float = 4814.2
    spectator_detuning: float = G_J_P32 * MU_B_MHZ_PER_G * BIAS_FIELD_G
    spectator_suppression: float = 10.0
    include_spectator: bool = False
    n_repetitions: int = 150

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be > 0")
        if self.spectator_suppression < 1:
            raise ValueError("spectator_suppression must be >= 1")

    @property
    def pi_time(self) -> float:
        """Duration of a pi rotation in us."""
        return 0.5 / self.omega


def _three_level_hamiltonian(cfg: RabiConfig) -> np.ndarray:
    """Basis (up, down, spectator); the spectator hangs off |down>."""
    w = cfg.omega
    ws = cfg.omega / cfg.spectator_suppression
    return np.array([
        [0.0, 0.5 * w, 0.0],
        [0.5 * w, 0.0, 0.5 * ws],
        [0.0, 0.5 * ws, cfg.spectator_detuning],
    ])


def rabi_amplitudes(cfg: RabiConfig, t) -> np.ndarray:
    """Amplitudes (up, down, spectator) at times ``t`` starting from |up>, shape (3, len(t))."""
    t = np.atleast_1d(np.asarray(t, float))
    if np.any(t < 0):
        raise ValueError("t must be >= 0")
    h = _three_level_hamiltonian(cfg)
    if not cfg.include_spectator:
        h[1, 2] = h[2, 1] = 0.0
    vals, vecs = np.linalg.eigh(h)
    phases = np.exp(-2j * np.pi * np.outer(vals, t))
    return vecs @ (phases * vecs[0].conj()[:, None])


def rabi_population(cfg: RabiConfig, t):
    """Probability of |up> after driving for ``t`` us from |up>."""
    t_arr = np.asarray(t, float)
    if not cfg.include_spectator:
        if np.any(t_arr < 0):
            raise ValueError("t must be >= 0")
        out = np.cos(np.pi * cfg.omega * t_arr) ** 2
    else:
        out = np.abs(rabi_amplitudes(cfg, t_arr)[0]) ** 2
        out = out.reshape(t_arr.shape)
    return out if np.ndim(out) else float(out)


def spectator_leakage(cfg: RabiConfig, t) -> np.ndarray:
    return np.abs(rabi_amplitudes(cfg, t)[2]) ** 2


def leakage_bound(cfg: RabiConfig) -> float:
    """Two-level estimate ws^2 / (ws^2 + delta^2) of the largest spectator population."""
    ws = cfg.omega / cfg.spectator_suppression
    return ws**2 / (ws**2 + cfg.spectator_detuning**2)


# ---------------------------------------------------------------------------
# two excitations


def two_excitation_contrast(model, geom: CloudGeometry, t_grid, n_pairs: int, seed: int) -> np.ndarray:
    """Envelope |<exp(2 pi i V t)>| of oscillations carried by an interacting pair.

    ``model`` is a :class:`PairModel` or any callable ``V(R, theta)`` in MHz.
    Pair separations are drawn from the cloud; theta is measured from the
    probe, which is also the quantisation axis.
    """
    if n_pairs < 1000:
        raise ValueError("n_pairs must be >= 1000")
    R, theta = pair_angles(sample_pair_separations(geom, n_pairs, seed), geom.probe_direction)
    V = pair_potential(model, R, theta) if isinstance(model, PairModel) else np.asarray(model(R, theta), float)
    t = np.asarray(t_grid, float)
    phase = np.exp(2j * np.pi * np.outer(t, V))
    return np.abs(phase.mean(axis=1))


def two_excitation_population(contrast, omega: float, t) -> np.ndarray:
    return 0.5 * (1.0 + np.asarray(contrast) * np.cos(2 * np.pi * omega * np.asarray(t)))


def washout_time(model: PairModel, distance: float) -> float:
    """1 / |V(distance)| in us: the dephasing time scale of a pair at that distance."""
    return 1.0 / abs(pair_potential(model, distance))


# ---------------------------------------------------------------------------
# measurement channel


@dataclass(frozen=True)
class MeasurementChannel:
    f_prep: float = 0.93
    f_det: float = 0.92

    def __post_init__(self):
        for name in ("f_prep", "f_det"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def output_range(self) -> tuple[float, float]:
        return self.f_prep * (1 - self.f_det), self.f_prep * self.f_det


def apply_channel(ch: MeasurementChannel, p):
    """Measured up-probability F_p [(1 - F_d) + (2 F_d - 1) p]."""
    p = np.asarray(p, float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p must lie in [0, 1]")
    out = ch.f_prep * ((1 - ch.f_det) + (2 * ch.f_det - 1) * p)
    return out if out.ndim else float(out)


def invert_channel(ch: MeasurementChannel, p_measured):
    """Undo the channel; returns (p clamped to [0, 1], in_range flag)."""
    if not ch.f_det > 0.5:
        raise ValueError("inversion needs f_det > 0.5")
    if ch.f_prep == 0:
        raise ValueError("inversion needs f_prep > 0")
    pm = np.asarray(p_measured, float)
    p = (pm / ch.f_prep - (1 - ch.f_det)) / (2 * ch.f_det - 1)
    in_range = (p >= -1e-12) & (p <= 1 + 1e-12)
    p = np.clip(p, 0.0, 1.0)
    if p.ndim == 0:
        return float(p), bool(in_range)
    return p, in_range


def channel_from_references(p_no_drive: float, p_no_prep: float) -> MeasurementChannel:
    """Channel implied by two reference runs.

    Without the microwave drive the qubit stays up, so the run reads
    F_p F_d; without preparation there is no atom and the run reads the
    false-positive rate 1 - F_d.
    """
    f_det = 1.0 - p_no_prep
    return MeasurementChannel(f_prep=p_no_drive / f_det, f_det=f_det)


# ---------------------------------------------------------------------------
# fits


@dataclass
class RabiFit:
    omega: float
    contrast_decay_per_2pi: float
    initial_contrast: float
    stderr: dict = field(default_factory=dict)
    converged: bool = True
    flags: tuple[str, ...] = ()


def rabi_model(params, t):
    omega, c0, dc = params
    return 0.5 * (1 + c0 * (1 - dc) ** (omega * t) * np.cos(2 * np.pi * omega * t))


def _dominant_frequency(t, y) -> float:
    span = t.max() - t.min()
    dt = np.min(np.diff(np.unique(t)))
    freqs = np.linspace(0.25 / span, 0.5 / dt, 4000)
    power = lombscargle(t, y - y.mean(), 2 * np.pi * freqs)
    return float(freqs[np.argmax(power)])


def fit_rabi(t, p_measured, ch: MeasurementChannel | None = None, sigma=None, restarts: int = 4,
             seed: int = 0) -> RabiFit:
    """Fit (Omega, C0, delta C) to channel-corrected Rabi data."""
    t = np.asarray(t, float)
    y = np.asarray(p_measured, float)
    if t.size < 8:
        raise ValueError("need at least 8 points")
    flags = []
    if ch is not None:
        y, ok = invert_channel(ch, y)
        if not np.all(ok):
            flags.append("clamped_points")
    x0 = [_dominant_frequency(t, y), float(np.clip(np.ptp(y), 0.05, 0.999)), 0.01]
    bounds = [(0.0, None), (0.0, 1.0), (0.0, 1.0)]
    res = least_squares_fit(rabi_model, t, y, x0, bounds=bounds, sigma=sigma, restarts=restarts,
                            seed=seed, tol=1e-12)
    omega, c0, dc = res.point
    if omega * np.ptp(t) < 2:
        flags.append("short_span")
    if not res.converged:
        flags.append("not_converged")
    se = least_squares_errors(rabi_model, t, y, res.point, sigma)
    return RabiFit(omega, dc, c0, dict(zip(("omega", "initial_contrast", "contrast_decay_per_2pi"), se)),
                   res.converged, tuple(flags) + tuple(res.flags))


def simulate_rabi_data(cfg: RabiConfig, ch: MeasurementChannel, t, n_shots: int, seed: int,
                       contrast_decay: float = 0.0) -> np.ndarray:
    """Measured up-fractions at each time, ``n_shots`` binomial repetitions per point."""
    t = np.asarray(t, float)
    p = rabi_model((cfg.omega, 1.0, contrast_decay), t)
    if cfg.include_spectator:
        p = rabi_population(cfg, t)
    pm = apply_channel(ch, np.clip(p, 0, 1))
    u = uniforms(seed_derive_array(seed, "rabi", np.arange(t.size * n_shots)), 0).reshape(t.size, n_shots)
    return (u < pm[:, None]).mean(axis=1)


@dataclass(frozen=True)
class RamseyConfig:
    t2_star: float = 15.0
    amplitude: float = 0.88
    n_phases: int = 32

    def __post_init__(self):
        if not self.t2_star > 0:
            raise ValueError("t2_star must be > 0")
        if not 0 <= self.amplitude <= 1:
            raise ValueError("amplitude must lie in [0, 1]")
        if self.n_phases < 3:
            raise ValueError("n_phases must be >= 3")

    @property
    def detuning_sigma(self) -> float:
        """Angular detuning spread in rad/us."""
        return np.sqrt(2.0) / self.t2_star

    @property
    def phase_grid(self) -> np.ndarray:
        return np.linspace(0.0, 2 * np.pi, self.n_phases, endpoint=False)


def ramsey_contrast(cfg: RamseyConfig, tau, detuning_sigma: float | None = None):
    """Shot-averaged fringe contrast A exp(-sigma^2 tau^2 / 2)."""
    s = cfg.detuning_sigma if detuning_sigma is None else detuning_sigma
    return cfg.amplitude * np.exp(-0.5 * (s * np.asarray(tau, float)) ** 2)


def ramsey_signal(cfg: RamseyConfig, tau: float, phase: float, n_shots: int, seed: int,
                  detuning_sigma: float | None = None) -> float:
    """Fraction of up outcomes over ``n_shots`` runs, each with its own static detuning."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    s = cfg.detuning_sigma if detuning_sigma is None else detuning_sigma
    seeds = seed_derive_array(seed, "ramsey", np.arange(n_shots))
    delta = s * ndtri(uniforms(seeds, 0))
    p = 0.5 * (1 + cfg.amplitude * np.cos(delta * tau + phase))
    return float(np.mean(uniforms(seeds, 1) < p))


def fringe_contrast(phases, fractions) -> float:
    """Contrast from the first Fourier component of a fringe on a uniform phase grid."""
    phases = np.asarray(phases, float)
    fractions = np.asarray(fractions, float)
    return float(4 * np.abs(np.sum(fractions * np.exp(-1j * phases))) / phases.size)


@dataclass
class RamseyData:
    tau: np.ndarray
    contrast: np.ndarray
    stderr: np.ndarray
    fractions: np.ndarray


def ramsey_experiment(cfg: RamseyConfig, taus, n_shots: int, seed: int,
                      detuning_sigma: float | None = None) -> RamseyData:
    """Scan the second pulse phase at each delay and extract the fringe contrast.

    ``n_shots`` runs are taken at every (delay, phase) point.
    """
    taus = np.asarray(taus, float)
    phases = cfg.phase_grid
    point_seeds = seed_derive_array(seed, "ramsey-point", np.arange(taus.size * phases.size))
    fr = np.empty((taus.size, phases.size))
    for i, tau in enumerate(taus):
        for j, ph in enumerate(phases):
            fr[i, j] = ramsey_signal(cfg, tau, ph, n_shots, int(point_seeds[i * phases.size + j]),
                                     detuning_sigma)
    contrast = np.array([fringe_contrast(phases, row) for row in fr])
    # variance of the Fourier estimator under binomial noise at each phase point
    var = (16.0 / phases.size**2) * np.sum(fr * (1 - fr) / n_shots * 0.5, axis=1)
    return RamseyData(taus, contrast, np.sqrt(np.maximum(var, 1e-12)), fr)


@dataclass
class RamseyFit:
    amplitude: float
    t2_star: float
    stderr: dict = field(default_factory=dict)
    converged: bool = True
    flags: tuple[str, ...] = ()


def ramsey_model(params, tau):
    a, t2 = params
    return a * np.exp(-((tau / t2) ** 2))


def fit_ramsey(taus, contrast, sigma=None, restarts: int = 2, seed: int = 0) -> RamseyFit:
    """Least-squares fit of A exp(-(tau/T2*)^2).

    Flags ``no_decay`` when the fitted T2* exceeds ten times the longest delay.
    """
    taus = np.asarray(taus, float)
    c = np.asarray(contrast, float)
    if taus.size < 5:
        raise ValueError("need at least 5 delays")
    a0 = float(np.clip(c[np.argmin(taus)], 0.05, 0.999))
    ratio = np.clip(c / a0, 1e-3, 0.999)
    k = np.argmax(taus)
    t0 = float(taus[k] / np.sqrt(-np.log(ratio[k]))) if taus[k] > 0 else 1.0
    res = least_squares_fit(ramsey_model, taus, c, [a0, t0], bounds=[(0.0, 1.0), (0.0, None)],
                            sigma=sigma, restarts=restarts, seed=seed, tol=1e-12)
    a, t2 = res.point
    flags = list(res.flags)
    if t2 >= 10 * taus.max():
        flags.append("no_decay")
    if not res.converged:
        flags.append("not_converged")
    se = least_squares_errors(ramsey_model, taus, c, res.point, sigma)
    return RamseyFit(a, t2, {"amplitude": se[0], "t2_star": se[1]}, res.converged, tuple(flags))

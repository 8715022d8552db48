"""Four-level ladder g - e - r - r' driven by probe, control and microwave fields.

Frequencies are ordinary MHz and times are us; the integrator applies the
2 pi once, as da/dt = -2 pi i H a.  The ladder is written in the rotating
frame with diagonal (0, -delta_e, -delta_r, E_r'), where E_r' places r' on
the microwave-dressed three-photon resonance when ``three_photon_detuning``
is zero.  On that resonance the Hamiltonian has an exact zero-energy dark
state with no e component,

    a_r / a_g = -omega_p / omega_c,   a_r' / a_r = 2 delta_r / omega_mw,

so switching the control on first and handing over to the probe
(counterintuitive order) carries g adiabatically into r' with a small r
admixture that a final microwave ramp-down removes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

GAMMA_E_MHZ = 6.07
# RK4 step (us) with a safety margin for the strong-coupling preset
STRONG_DT = 5e-4
LEVELS = ("g", "e", "r", "rprime")


class RampShape(str, enum.Enum):
    CONSTANT = "constant"
    SIN_SQUARED_ON = "sin_squared_on"
    SIN_SQUARED_OFF = "sin_squared_off"
    LINEAR = "linear"


@dataclass(frozen=True)
class PulseRamp:
    """Field envelope.

    ``constant`` is ``amplitude`` inside [t_start, t_end] and zero outside.
    The ``on`` shapes rise from zero to ``amplitude`` across the interval and
    stay there; ``sin_squared_off`` holds ``amplitude`` until t_start and
    falls to zero by t_end.
    """

    shape: RampShape
    t_start: float
    t_end: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "shape", RampShape(self.shape))
        if not self.t_start < self.t_end:
            raise ValueError("ramp needs t_start < t_end")
        if self.amplitude < 0:
            raise ValueError("ramp amplitude must be >= 0")

    def __call__(self, t):
        t = np.asarray(t, float)
        s = np.clip((t - self.t_start) / (self.t_end - self.t_start), 0.0, 1.0)
        if self.shape is RampShape.CONSTANT:
            inside = (t >= self.t_start) & (t <= self.t_end)
            return self.amplitude * inside.astype(float)
        if self.shape is RampShape.LINEAR:
            return self.amplitude * s
        up = np.sin(0.5 * np.pi * s) ** 2
        return self.amplitude * (up if self.shape is RampShape.SIN_SQUARED_ON else 1.0 - up)


@dataclass(frozen=True)
class PrepConfig:
    delta_e: float = 100.0
    delta_r: float = 100.0
    omega_c_peak: float = 2.4
    omega_p_peak: float = 8.0
    omega_mw: float = 5.0
    duration: float = 3.0
    three_photon_detuning: float = 0.0
    gamma_e: float = GAMMA_E_MHZ
    include_decay: bool = True
    mw_rampdown: bool = False
    mw_rampdown_time: float = 0.5
    # +1 puts e and r below their resonances, -1 above
    detuning_sign: int = 1
    ramp_overrides: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if min(self.omega_c_peak, self.omega_p_peak, self.omega_mw) < 0:
            raise ValueError("Rabi frequencies must be >= 0")
        if self.gamma_e < 0:
            raise ValueError("gamma_e must be >= 0")
        if self.detuning_sign not in (1, -1):
            raise ValueError("detuning_sign must be +1 or -1")
        if not 0 <= self.mw_rampdown_time <= self.duration:
            raise ValueError("mw_rampdown_time must lie in [0, duration]")
        if self.delta_r == 0:
            raise ValueError("delta_r must be non-zero")
        for name, ramp in self.ramp_overrides.items():
            if name not in ("p", "c", "mw"):
                raise ValueError(f"unknown ramp '{name}'")
            if ramp.t_start < 0 or ramp.t_end > self.duration:
                raise ValueError(f"ramp '{name}' leaves the [0, duration] window")

    @classmethod
    def strong_coupling(cls, **kw) -> "PrepConfig":
        """Field strengths at which the dark-state transfer is adiabatic in 3 us.

        The control field here is far above the default; integrate these
        settings with ``STRONG_DT`` or smaller.
        """
        base = dict(omega_c_peak=100.0, omega_p_peak=20.0, omega_mw=40.0, mw_rampdown=True)
        base.update(kw)
        return cls(**base)

    def ramps(self) -> dict[str, PulseRamp]:
        D = self.duration
        out = {
            "c": PulseRamp(RampShape.SIN_SQUARED_OFF, 0.0, D, self.omega_c_peak),
            "p": PulseRamp(RampShape.SIN_SQUARED_ON, 0.0, D, self.omega_p_peak),
            "mw": PulseRamp(RampShape.CONSTANT, 0.0, D, self.omega_mw),
        }
        if self.mw_rampdown and self.mw_rampdown_time > 0:
            out["mw"] = PulseRamp(RampShape.SIN_SQUARED_OFF, D - self.mw_rampdown_time, D, self.omega_mw)
        out.update(self.ramp_overrides)
        return out

    @property
    def rprime_offset(self) -> float:
        """r' diagonal at zero three-photon detuning: the dressed resonance."""
        e_r = -self.detuning_sign * self.delta_r
        return self.omega_mw**2 / (4.0 * e_r)


def _diagonal(cfg: PrepConfig) -> np.ndarray:
    s = cfg.detuning_sign
    d = np.array([0.0, -s * cfg.delta_e, -s * cfg.delta_r, cfg.rprime_offset - cfg.three_photon_detuning],
                 dtype=complex)
    if cfg.include_decay:
        d[1] -= 0.5j * cfg.gamma_e
    return d


def _couplings(ramps, t: float) -> tuple[float, float, float]:
    return float(ramps["p"](t)), float(ramps["c"](t)), float(ramps["mw"](t))


def _ladder(diag: np.ndarray, wp: float, wc: float, wm: float) -> np.ndarray:
    h = np.diag(diag)
    h[0, 1] = h[1, 0] = 0.5 * wp
    h[1, 2] = h[2, 1] = 0.5 * wc
    h[2, 3] = h[3, 2] = 0.5 * wm
    return h


def build_hamiltonian(cfg: PrepConfig, t: float) -> np.ndarray:
    """4x4 Hamiltonian in MHz at time ``t`` (us), basis (g, e, r, r')."""
    if not 0 <= t <= cfg.duration:
        raise ValueError(f"t={t} outside [0, {cfg.duration}]")
    return _ladder(_diagonal(cfg), *_couplings(cfg.ramps(), t))


@dataclass
class LevelState:
    amplitudes: np.ndarray

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(self.populations.sum())


@dataclass
class PrepResult:
    times: np.ndarray
    populations: np.ndarray
    final: LevelState
    max_populations: np.ndarray
    flags: tuple[str, ...] = ()
    convergence_error: float | None = None

    def final_population(self, level: str) -> float:
        return float(self.final.populations[LEVELS.index(level)])


def _integrate(cfg: PrepConfig, detunings, dt: float, sample_every: int = 0):
    """RK4 for a batch of three-photon detunings that share all field envelopes."""
    n_steps = int(round(cfg.duration / dt))
    if n_steps < 1 or abs(n_steps * dt - cfg.duration) > 1e-9 * cfg.duration:
        raise ValueError("duration must be a whole number of steps")
    base = _diagonal(replace(cfg, three_photon_detuning=0.0))
    shift = -np.asarray(detunings, float)
    ramps = cfg.ramps()
    # Hamiltonians at every half step, premultiplied by -2 pi i and transposed for a @ H^T
    half = np.arange(2 * n_steps + 1) * (0.5 * dt)
    wp, wc, wm = (np.asarray(ramps[k](half), float) for k in ("p", "c", "mw"))
    gen = np.zeros((half.size, 4, 4), complex)
    gen[:, range(4), range(4)] = base
    gen[:, 0, 1] = gen[:, 1, 0] = 0.5 * wp
    gen[:, 1, 2] = gen[:, 2, 1] = 0.5 * wc
    gen[:, 2, 3] = gen[:, 3, 2] = 0.5 * wm
    gen = -2j * np.pi * np.transpose(gen, (0, 2, 1))
    kick = -2j * np.pi * shift
    amps = np.zeros((shift.size, 4), complex)
    amps[:, 0] = 1.0
    peak = np.abs(amps) ** 2
    times, samples = [0.0], [peak.copy()]

    def rhs(i, a):
        out = a @ gen[i]
        out[:, 3] += kick * a[:, 3]
        return out

    for k in range(n_steps):
        k1 = rhs(2 * k, amps)
        k2 = rhs(2 * k + 1, amps + 0.5 * dt * k1)
        k3 = rhs(2 * k + 1, amps + 0.5 * dt * k2)
        k4 = rhs(2 * k + 2, amps + dt * k3)
        amps = amps + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        pops = np.abs(amps) ** 2
        peak = np.maximum(peak, pops)
        if sample_every and (k + 1) % sample_every == 0:
            times.append((k + 1) * dt)
            samples.append(pops)
    return amps, peak, np.array(times), np.array(samples)


def evolve(cfg: PrepConfig, dt: float = 1e-3, sample_every: int = 10,
           check_convergence: bool = False, tol: float = 1e-6) -> PrepResult:
    """Integrate from g over the preparation window.

    With ``check_convergence`` the run is repeated at dt/2 and flagged
    ``step_not_converged`` when any final population moves by more than ``tol``.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        amps, peak, times, samples = _integrate(cfg, [cfg.three_photon_detuning], dt, sample_every)
    result = PrepResult(times, samples[:, 0], LevelState(amps[0]), peak[0])
    if check_convergence:
        with np.errstate(over="ignore", invalid="ignore"):
            fine, *_ = _integrate(cfg, [cfg.three_photon_detuning], dt / 2)
        err = float(np.max(np.abs(np.abs(fine[0]) ** 2 - result.final.populations)))
        result.convergence_error = err
        if not err <= tol:
            result.flags = result.flags + ("step_not_converged",)
    return result


@dataclass
class Lineshape:
    detuning: np.ndarray
    p_rprime: np.ndarray
    p_r: np.ndarray
    p_e: np.ndarray
    peak: float
    fwhm: float


def _half_max_width(x: np.ndarray, y: np.ndarray, k: int) -> float:
    half = 0.5 * y[k]
    left = np.nan
    for i in range(k, 0, -1):
        if y[i - 1] < half <= y[i]:
            left = x[i - 1] + (half - y[i - 1]) * (x[i] - x[i - 1]) / (y[i] - y[i - 1])
            break
    right = np.nan
    for i in range(k, x.size - 1):
        if y[i + 1] < half <= y[i]:
            right = x[i] + (y[i] - half) * (x[i + 1] - x[i]) / (y[i] - y[i + 1])
            break
    return float(right - left)


def scan_three_photon(cfg: PrepConfig, detuning_grid, dt: float = 1e-3) -> Lineshape:
    """Final populations against three-photon detuning, with peak and FWHM.

    The FWHM comes from linear interpolation of the half-maximum crossings
    on each side of the highest point; it is NaN if either side never drops
    below half.
    """
    grid = np.asarray(detuning_grid, float)
    if grid.size == 0:
        raise ValueError("detuning grid is empty")
    order = np.argsort(grid)
    grid = grid[order]
    amps, *_ = _integrate(cfg, grid, dt)
    pops = np.abs(amps) ** 2
    k = int(np.argmax(pops[:, 3]))
    return Lineshape(grid, pops[:, 3], pops[:, 2], pops[:, 1], float(grid[k]),
                     _half_max_width(grid, pops[:, 3], k))


def mw_rampdown_comparison(cfg: PrepConfig, dt: float = 1e-3) -> dict[str, float]:
    """Residual r and r' populations with and without the final microwave ramp-down."""
    out = {}
    for label, flag in (("with", True), ("without", False)):
        res = evolve(replace(cfg, mw_rampdown=flag), dt, sample_every=0)
        out[f"p_r_{label}"] = res.final_population("r")
        out[f"p_rprime_{label}"] = res.final_population("rprime")
    return out


def perturbative_coupling(cfg: PrepConfig) -> float:
    """Effective g - r' Rabi frequency omega_p omega_c omega_mw / (4 delta_e delta_r)."""
    return cfg.omega_p_peak * cfg.omega_c_peak * cfg.omega_mw / (4.0 * cfg.delta_e * cfg.delta_r)


def _g_rprime_gap(cfg: PrepConfig, detuning: float) -> float:
    c = replace(cfg, include_decay=False, three_photon_detuning=detuning)
    h = _ladder(_diagonal(c), cfg.omega_p_peak, cfg.omega_c_peak, cfg.omega_mw)
    vals, vecs = np.linalg.eigh(h)
    weight = np.abs(vecs[0]) ** 2 + np.abs(vecs[3]) ** 2
    pair = np.sort(np.argsort(weight)[-2:])
    return float(abs(vals[pair[1]] - vals[pair[0]]))


def effective_coupling(cfg: PrepConfig, search: float = 5.0, n_scan: int = 2001) -> tuple[float, float]:
    """Smallest splitting of the two g/r'-like eigenstates under constant peak fields.

    Returns (splitting, detuning at which it occurs); the splitting is the
    generalised Rabi frequency on the light-shifted three-photon resonance.
    """
    grid = np.linspace(-search, search, n_scan)
    gaps = np.array([_g_rprime_gap(cfg, d) for d in grid])
    k = int(np.argmin(gaps))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_scan - 1)]
    res = minimize_scalar(lambda d: _g_rprime_gap(cfg, d), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.fun), float(res.x)

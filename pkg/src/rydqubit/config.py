"""Run configuration: YAML ingestion, validation, defaults and provenance.

The file is a two-level mapping, ``section: {key: value}``.  Every key has a
default, so an empty file is a complete configuration.  Unknown keys and
out-of-range values are rejected with the offending line and field.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .ensemble import CloudGeometry
from .interactions import C3_R_RPRIME, C6_R_RPRIME, C6_RPRIME, GAMMA3_MHZ, R_BLOCKADE_PLUS_UM
from .prep import GAMMA_E_MHZ, PrepConfig
from .qubit import BIAS_FIELD_G, MeasurementChannel, RabiConfig, RamseyConfig, zeeman_splittings
from .readout import TARGET_FD
from .telegraph import R_LOW_CALIBRATED, TelegraphParams, Window

# origin tags recorded in provenance.json
REPORTED = "reported"
DERIVED = "derived"
CALIBRATED = "calibrated"
DECISION = "decision"
PLUMBING = "plumbing"


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot, such as ``1e-3``."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


class ConfigError(ValueError):
    """Invalid configuration, carrying the field path and source line when known."""

    def __init__(self, message: str, field_path: str | None = None, line: int | None = None):
        self.field_path = field_path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_path:
            where.append(field_path)
        super().__init__(f"{': '.join(where)}: {message}" if where else message)


def _opt(default, origin, note, lo=None, hi=None, *, choices=None, lo_open=False):
    return field(default=default, metadata={"origin": origin, "note": note, "lo": lo, "hi": hi,
                                            "choices": choices, "lo_open": lo_open})


@dataclass(frozen=True)
class RunSection:
    master_seed: int = _opt(20240915, PLUMBING, "master seed for every random stream", 0, 2**64 - 1)
    output_dir: str = _opt("results", PLUMBING, "artifact directory")


@dataclass(frozen=True)
class InteractionsSection:
    c6_rprime: float = _opt(C6_RPRIME, REPORTED, "r'r' C6 along the axis, MHz um^6", 0, lo_open=True)
    aspect_ratio: float = _opt(1.6, REPORTED, "r'r' blockade ellipsoid axis ratio", 1)
    c6_r_rprime: float = _opt(C6_R_RPRIME, REPORTED, "rr' van der Waals coefficient, MHz um^6", 0, lo_open=True)
    c3_r_rprime: float = _opt(C3_R_RPRIME, REPORTED, "rr' exchange coefficient, MHz um^3", 0, lo_open=True)
    gamma3: float = _opt(GAMMA3_MHZ, REPORTED, "three-photon linewidth used as r'r' threshold, MHz", 0,
                         lo_open=True)
    r_blockade_plus: float = _opt(R_BLOCKADE_PLUS_UM, REPORTED, "rr' plus-branch radius that pins the "
                                  "detection threshold, um", 0, lo_open=True)
    n_angles: int = _opt(37, DECISION, "angles in the radius table over [0, 90] deg", 2, 10_000)


@dataclass(frozen=True)
class EnsembleSection:
    sigma_x: float = _opt(2.4, REPORTED, "cloud rms size, um", 0, lo_open=True)
    sigma_y: float = _opt(4.6, REPORTED, "cloud rms size along the dipole trap, um", 0, lo_open=True)
    sigma_z: float = _opt(2.9, REPORTED, "cloud rms size, um", 0, lo_open=True)
    n_atoms: int = _opt(440, REPORTED, "atom number", 1)
    probe_angle_deg: float = _opt(16.0, REPORTED, "probe angle to the dipole trap in the xy plane", 0, 90)
    cross_section_reduction: float = _opt(0.5, DECISION, "Clebsch-Gordan and linewidth reduction of the "
                                          "two-level cross section", 0, 1, lo_open=True)
    n_pairs: int = _opt(100_000, DECISION, "Monte Carlo pairs for distance statistics", 1000)


@dataclass(frozen=True)
class PrepSection:
    delta_e: float = _opt(100.0, REPORTED, "intermediate-state detuning, MHz")
    delta_r: float = _opt(100.0, REPORTED, "second intermediate detuning, MHz")
    omega_p_peak: float = _opt(8.0, DECISION, "probe Rabi frequency, MHz", 0)
    omega_c_peak: float = _opt(2.4, REPORTED, "control Rabi frequency, MHz", 0)
    omega_mw: float = _opt(5.0, DECISION, "microwave Rabi frequency, MHz", 0)
    duration: float = _opt(3.0, REPORTED, "preparation pulse duration, us", 0, lo_open=True)
    gamma_e: float = _opt(GAMMA_E_MHZ, REPORTED, "intermediate-state decay rate, MHz", 0)
    mw_rampdown: bool = _opt(False, DECISION, "ramp the microwave down at the end")
    mw_rampdown_time: float = _opt(0.5, DECISION, "microwave ramp-down duration, us", 0)
    detuning_sign: int = _opt(1, DECISION, "+1 puts e and r below resonance", choices=(1, -1))
    dt: float = _opt(1e-3, DECISION, "RK4 step, us", 0, 0.1, lo_open=True)
    scan_span: float = _opt(3.0, DECISION, "three-photon scan half width, MHz", 0, lo_open=True)
    scan_points: int = _opt(61, DECISION, "detunings in the scan", 3, 10_000)
    strong_dt: float = _opt(5e-4, DECISION, "RK4 step for the strong-coupling demonstration, us", 0, 0.1,
                            lo_open=True)


@dataclass(frozen=True)
class TelegraphSection:
    r_high: float = _opt(8.0, REPORTED, "transparent detected photon rate, 1/us", 0, lo_open=True)
    r_low: float = _opt(R_LOW_CALIBRATED, CALIBRATED, "blockaded rate giving the target detection "
                        "fidelity, 1/us", 0)
    gamma_loss: float = _opt(0.035, REPORTED, "loss rate of the gate atom, 1/us", 0)
    gamma_imp: float = _opt(0.015, REPORTED, "impurity creation rate, 1/us", 0)
    f_prep: float = _opt(0.93, REPORTED, "preparation fidelity", 0, 1)
    collection_eff: float = _opt(0.90, REPORTED, "fibre coupling efficiency", 0, 1, lo_open=True)
    detection_eff: float = _opt(0.47, REPORTED, "detector chain efficiency", 0, 1, lo_open=True)
    impurity_when_unprepared: bool = _opt(True, DECISION, "failed preparations can still create impurities")
    window: float = _opt(6.0, REPORTED, "detection window, us", 0, lo_open=True)
    n_shots: int = _opt(100_000, DECISION, "Monte Carlo shots per histogram", 1)
    trace_shots: int = _opt(20_000, DECISION, "Monte Carlo runs averaged in the time traces", 1)
    trace_bin: float = _opt(0.5, REPORTED, "time-trace bin width, us", 0, lo_open=True)
    trace_length: float = _opt(24.0, DECISION, "time-trace length, us", 0, lo_open=True)


@dataclass(frozen=True)
class ReadoutSection:
    target_fd: float = _opt(TARGET_FD, REPORTED, "detection fidelity used to calibrate r_low", 0.5, 1)
    fit_starts: tuple = _opt((0.0, 6.0, 12.0, 18.0), DECISION, "window start times of the fitted "
                             "histograms, us")
    fit_shots: int = _opt(2000, DECISION, "shots per fitted histogram", 1)
    fit_restarts: int = _opt(8, DECISION, "Nelder-Mead restarts", 0, 1000)
    table_shots: int = _opt(100_000, DECISION, "shots per ensemble in the repeated-measurement table", 1)
    prep_corrected: bool = _opt(True, DECISION, "prepared column of the table assumes perfect preparation")
    sweep_rates: tuple = _opt((0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0), DECISION,
                              "transparent rates of the fidelity sweep, 1/us")
    sweep_beta: float = _opt(0.015 / 8.0, DERIVED, "impurity rate per unit photon rate", 0)
    sweep_window_min: float = _opt(3.0, DECISION, "shortest window tried in the sweep, us", 0, lo_open=True)
    sweep_window_max: float = _opt(8.0, DECISION, "longest window tried in the sweep, us", 0, lo_open=True)
    sweep_window_points: int = _opt(11, DECISION, "windows tried per rate", 1, 1000)


@dataclass(frozen=True)
class QubitSection:
    omega: float = _opt(5.3, REPORTED, "microwave Rabi frequency, MHz", 0, lo_open=True)
    bias_field: float = _opt(BIAS_FIELD_G, REPORTED, "bias field, G", 0)
    spectator_suppression: float = _opt(10.0, REPORTED, "antenna suppression of the spectator amplitude", 1)
    include_spectator: bool = _opt(True, DECISION, "simulate Rabi data with the spectator level")
    f_prep: float = _opt(0.93, REPORTED, "preparation fidelity of the measurement channel", 0, 1)
    f_det: float = _opt(0.92, REPORTED, "detection fidelity of the measurement channel", 0.5, 1, lo_open=True)
    rabi_t_max: float = _opt(0.6, DECISION, "longest Rabi pulse, us", 0, lo_open=True)
    rabi_points: int = _opt(41, DECISION, "Rabi pulse lengths", 8, 100_000)
    rabi_shots: int = _opt(150, REPORTED, "repetitions per Rabi point", 1)
    t2_star: float = _opt(15.0, REPORTED, "Gaussian dephasing time, us", 0, lo_open=True)
    ramsey_amplitude: float = _opt(0.88, REPORTED, "Ramsey contrast at zero delay", 0, 1)
    n_phases: int = _opt(32, DECISION, "second-pulse phases per delay", 3, 10_000)
    ramsey_taus: int = _opt(8, DECISION, "Ramsey delays", 5, 10_000)
    ramsey_tau_max: float = _opt(21.0, DECISION, "longest Ramsey delay, us", 0, lo_open=True)
    ramsey_shots: int = _opt(150, DECISION, "repetitions per (delay, phase) point", 1)
    washout_pairs: int = _opt(20_000, DECISION, "pairs in the two-excitation dephasing average", 1000)
    washout_t_max: float = _opt(0.2, DECISION, "longest time of the dephasing curve, us", 0, lo_open=True)


SECTIONS = {
    "run": RunSection,
    "interactions": InteractionsSection,
    "ensemble": EnsembleSection,
    "prep": PrepSection,
    "telegraph": TelegraphSection,
    "readout": ReadoutSection,
    "qubit": QubitSection,
}


@dataclass(frozen=True)
class RunConfig:
    run: RunSection = RunSection()
    interactions: InteractionsSection = InteractionsSection()
    ensemble: EnsembleSection = EnsembleSection()
    prep: PrepSection = PrepSection()
    telegraph: TelegraphSection = TelegraphSection()
    readout: ReadoutSection = ReadoutSection()
    qubit: QubitSection = QubitSection()

    def __post_init__(self):
        _validate_domain(self)

    @property
    def master_seed(self) -> int:
        return self.run.master_seed

    @property
    def output_dir(self) -> Path:
        return Path(self.run.output_dir)

    def with_overrides(self, seed: int | None = None, out: str | None = None) -> "RunConfig":
        run = self.run
        if seed is not None:
            run = replace(run, master_seed=_check_value("run.master_seed", _field(RunSection, "master_seed"),
                                                        seed, None))
        if out is not None:
            run = replace(run, output_dir=str(out))
        return replace(self, run=run)

    def as_dict(self) -> dict:
        return {name: {f.name: _plain(getattr(getattr(self, name), f.name)) for f in fields(cls)}
                for name, cls in SECTIONS.items()}

    def config_hash(self) -> str:
        """SHA-256 over every setting that can change results (the output path cannot)."""
        d = self.as_dict()
        d["run"].pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # builders for the domain objects

    def telegraph_params(self) -> TelegraphParams:
        t = self.telegraph
        return TelegraphParams(t.r_high, t.r_low, t.gamma_loss, t.gamma_imp, t.f_prep, t.collection_eff,
                               t.detection_eff, t.impurity_when_unprepared)

    def window(self) -> Window:
        return Window(0.0, self.telegraph.window)

    def geometry(self) -> CloudGeometry:
        e = self.ensemble
        return CloudGeometry(e.sigma_x, e.sigma_y, e.sigma_z, e.n_atoms, float(np.deg2rad(e.probe_angle_deg)),
                             e.cross_section_reduction)

    def prep_config(self) -> PrepConfig:
        p = self.prep
        return PrepConfig(delta_e=p.delta_e, delta_r=p.delta_r, omega_c_peak=p.omega_c_peak,
                          omega_p_peak=p.omega_p_peak, omega_mw=p.omega_mw, duration=p.duration,
                          gamma_e=p.gamma_e, mw_rampdown=p.mw_rampdown, mw_rampdown_time=p.mw_rampdown_time,
                          detuning_sign=p.detuning_sign)

    def rabi_config(self) -> RabiConfig:
        q = self.qubit
        return RabiConfig(omega=q.omega, spectator_detuning=zeeman_splittings(q.bias_field)["p32_MHz"],
                          spectator_suppression=q.spectator_suppression, include_spectator=q.include_spectator,
                          n_repetitions=q.rabi_shots)

    def ramsey_config(self) -> RamseyConfig:
        q = self.qubit
        return RamseyConfig(q.t2_star, q.ramsey_amplitude, q.n_phases)

    def channel(self) -> MeasurementChannel:
        return MeasurementChannel(self.qubit.f_prep, self.qubit.f_det)


def _field(cls, name):
    return next(f for f in fields(cls) if f.name == name)


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _check_value(path: str, f, value, line: int | None):
    """Type-check and range-check one value against its field declaration."""
    default = f.default
    m = f.metadata
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", path, line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path, line)
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", path, line)
        value = float(value)
        if not np.isfinite(value):
            raise ConfigError("value must be finite", path, line)
    elif isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path, line)
        return value
    elif isinstance(default, tuple):
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError("expected a non-empty list of numbers", path, line)
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v) or v < 0:
                raise ConfigError(f"list entries must be non-negative numbers, got {v!r}", path, line)
            out.append(float(v))
        return tuple(out)
    if m.get("choices") is not None and value not in m["choices"]:
        raise ConfigError(f"must be one of {list(m['choices'])}, got {value!r}", path, line)
    lo, hi = m.get("lo"), m.get("hi")
    if lo is not None and (value < lo or (m.get("lo_open") and value == lo)):
        bound = f"> {lo}" if m.get("lo_open") else f">= {lo}"
        raise ConfigError(f"out of range: must be {bound}, got {value!r}", path, line)
    if hi is not None and value > hi:
        raise ConfigError(f"out of range: must be <= {hi}, got {value!r}", path, line)
    return value


def _validate_domain(cfg: RunConfig):
    """Cross-field checks, delegated to the domain constructors."""
    checks = [
        ("telegraph", cfg.telegraph_params),
        ("telegraph.window", cfg.window),
        ("ensemble", cfg.geometry),
        ("prep", cfg.prep_config),
        ("qubit", cfg.rabi_config),
        ("qubit", cfg.ramsey_config),
        ("qubit", cfg.channel),
    ]
    for path, build in checks:
        try:
            build()
        except ValueError as exc:
            raise ConfigError(str(exc), path) from None
    r = cfg.readout
    if len(set(r.fit_starts)) < 2:
        raise ConfigError("need at least two distinct start times", "readout.fit_starts")
    if r.sweep_window_min > r.sweep_window_max:
        raise ConfigError("sweep_window_min exceeds sweep_window_max", "readout.sweep_window_min")
    if any(v == 0 for v in r.sweep_rates):
        raise ConfigError("rates must be positive", "readout.sweep_rates")


def _key_lines(text: str) -> dict[str, int]:
    """1-based line of every 'section' and 'section.key' in the document."""
    root = yaml.compose(text, Loader=_Loader)
    out = {}
    if not isinstance(root, yaml.MappingNode):
        return out
    for k, v in root.value:
        section = str(k.value)
        out[section] = k.start_mark.line + 1
        if isinstance(v, yaml.MappingNode):
            for kk, _ in v.value:
                out[f"{section}.{kk.value}"] = kk.start_mark.line + 1
    return out


def config_from_text(text: str) -> RunConfig:
    try:
        data = yaml.load(text, Loader=_Loader)
        lines = _key_lines(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"malformed file: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("top level must be a mapping of sections", line=1)
    sections = {}
    for name, body in data.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section (known: {', '.join(SECTIONS)})", str(name), lines.get(str(name)))
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError("section must be a mapping", name, lines.get(name))
        cls = SECTIONS[name]
        known = {f.name: f for f in fields(cls)}
        values = {}
        for key, value in body.items():
            path = f"{name}.{key}"
            if key not in known:
                raise ConfigError("unknown key", path, lines.get(path))
            values[key] = _check_value(path, known[key], value, lines.get(path))
        sections[name] = cls(**values)
    try:
        return RunConfig(**sections)
    except ConfigError as exc:
        if exc.line is None and exc.field_path in lines:
            raise ConfigError(str(exc).split(": ", 1)[1], exc.field_path, lines[exc.field_path]) from None
        raise


def parse_config(path: str | Path | None) -> RunConfig:
    """Read and validate a YAML config; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such file: {path}")
    return config_from_text(path.read_text())


def emit_config(cfg: RunConfig = RunConfig()) -> str:
    """YAML text that parses back to ``cfg``."""
    return yaml.safe_dump(cfg.as_dict(), sort_keys=False, default_flow_style=False)


def provenance(cfg: RunConfig) -> dict:
    """Origin and meaning of every setting, with whether it differs from the default."""
    out = {"tool_version": __version__, "config_sha256": cfg.config_hash(), "settings": {}}
    default = RunConfig()
    for name, cls in SECTIONS.items():
        for f in fields(cls):
            value = getattr(getattr(cfg, name), f.name)
            out["settings"][f"{name}.{f.name}"] = {
                "value": _plain(value),
                "origin": f.metadata["origin"],
                "note": f.metadata["note"],
                "overridden": value != getattr(getattr(default, name), f.name),
            }
    return out

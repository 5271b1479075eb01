"""Experiment configuration: plain-text INI files (sections in brackets,
key = value per line) mapped onto the dataclass specs of each pipeline stage.

The mode-to-controls mapping is fixed: FR runs a single unassimilated member;
IDA corrects friction and inflow from gauge levels; IWDA adds WSR
observations; IHDA additionally activates the zonal water-level correction.
"""

from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, fields

import numpy as np

from .catchment import CatchmentSpec, ControlVector, Hydrograph
from .enkf import ActiveControls, CycleConfig, PriorSpec
from .errors import ConfigError
from .observations import NoiseSpec
from .solver import SolverConfig

MODES = ("fr", "ida", "iwda", "ihda")


@dataclass
class EventSpec:
    """Double-peak flood event: two scaled log-normal pulses on a base flow,
    discretized into a piecewise-linear hydrograph."""

    duration_h: float = 336.0          # ~14 simulated days
    spinup_h: float = 24.0             # steady base-flow run before t = 0
    base_flow: float = 400.0
    peak1_flow: float = 2000.0         # added above base flow
    peak1_time_h: float = 96.0
    peak1_width: float = 0.25          # log-time width of the pulse
    peak2_flow: float = 1500.0
    peak2_time_h: float = 192.0
    peak2_width: float = 0.30
    knot_spacing_s: float = 900.0

    def __post_init__(self):
        if self.duration_h <= 0 or self.spinup_h < 0:
            raise ConfigError("event duration must be positive, spinup non-negative")
        if min(self.base_flow, self.peak1_flow, self.peak2_flow) < 0:
            raise ConfigError("event discharges must be non-negative")
        if self.peak1_width <= 0 or self.peak2_width <= 0:
            raise ConfigError("pulse widths must be positive")

    @property
    def duration_s(self) -> float:
        return self.duration_h * 3600.0

    def discharge_at(self, t_s) -> np.ndarray:
        """Event discharge (m^3/s) at time t seconds."""
        t = np.asarray(t_s, dtype=np.float64)
        q = np.full(t.shape, self.base_flow)
        for peak, tp_h, width in ((self.peak1_flow, self.peak1_time_h, self.peak1_width),
                                  (self.peak2_flow, self.peak2_time_h, self.peak2_width)):
            tp = tp_h * 3600.0
            with np.errstate(divide="ignore"):
                logr = np.where(t > 0, np.log(np.maximum(t, 1e-300) / tp), -np.inf)
            q = q + peak * np.exp(-0.5 * (logr / width) ** 2)
        return q

    def build_hydrograph(self) -> Hydrograph:
        times = np.arange(0.0, self.duration_s + 0.5 * self.knot_spacing_s,
                          self.knot_spacing_s)
        if times[-1] < self.duration_s:
            times = np.append(times, self.duration_s)
        return Hydrograph(times=times, discharge=self.discharge_at(times))


@dataclass
class TruthSpec:
    """Designated truth controls for the twin experiment: inflow scaled by
    mu_true, two friction segments offset, and an optional floodplain leakage
    sink (structural error absent from the ensemble's model)."""

    mu_true: float = 1.1
    ks_perturb_segments: tuple[int, ...] = (2, 5)
    ks_perturb_sigma: float = 2.0
    leak_rate: float = 2.5e-6          # m/s removed from leakage zones
    leak_zones: tuple[int, ...] = (1, 2, 3, 4, 5)

    def __post_init__(self):
        if any(not 1 <= s <= 6 for s in self.ks_perturb_segments):
            raise ConfigError("ks_perturb_segments must be river segments in 1..6")
        if any(not 1 <= z <= 5 for z in self.leak_zones):
            raise ConfigError("leak_zones must be zone ids in 1..5")
        if self.leak_rate < 0:
            raise ConfigError("leak_rate must be >= 0")

    def truth_control(self, prior: PriorSpec) -> ControlVector:
        ks = prior.ks_mean.copy()
        for s in self.ks_perturb_segments:
            ks[s] += self.ks_perturb_sigma * prior.ks_std[s]
        return ControlVector(ks=ks, mu=self.mu_true, dh=np.zeros(5))


@dataclass
class ObservationSpec:
    sigma_wl: float = 0.05
    sigma_wsr: float = 0.05
    gauge_period_s: float = 900.0
    overpass_times_h: tuple[float, ...] = ()   # empty -> evenly spread defaults

    def noise(self) -> NoiseSpec:
        return NoiseSpec(sigma_wl=self.sigma_wl, sigma_wsr=self.sigma_wsr)

    def overpass_times(self, event: EventSpec) -> list[float]:
        """Overpass-analogue snapshot times in seconds; defaults to eleven
        times spread across the event."""
        if self.overpass_times_h:
            hours = self.overpass_times_h
        else:
            hours = tuple(np.round(np.linspace(0.15 * event.duration_h,
                                               0.85 * event.duration_h, 11), 2))
        times = [h * 3600.0 for h in hours]
        if any(t < 0 or t > event.duration_s for t in times):
            raise ConfigError("overpass times must lie within the event")
        return times


@dataclass
class CycleSpec:
    window_h: float = 18.0
    slide_h: float = 12.0
    inflation: float = 1.0
    gauge_stride: int = 1

    def cycle_config(self, mode: str) -> CycleConfig:
        active, use_wsr = mode_controls(mode)
        return CycleConfig(window_length=self.window_h * 3600.0,
                           window_slide=self.slide_h * 3600.0,
                           active=active, inflation=self.inflation,
                           use_gauge_obs=True, use_wsr_obs=use_wsr,
                           gauge_stride=self.gauge_stride)


@dataclass
class RunSpec:
    mode: str = "ida"
    members: int = 75
    seed: int = 0
    obs_seed: int = 1000
    workers: int = 0                   # 0 -> one per CPU
    outdir: str = "out"
    write_checkpoint: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.members < 1:
            raise ConfigError("members must be >= 1")


def mode_controls(mode: str) -> tuple[ActiveControls, bool]:
    """Fixed experiment matrix: mode -> (active controls, use WSR obs)."""
    if mode == "fr":
        return ActiveControls(ks=False, mu=False, dh=False), False
    if mode == "ida":
        return ActiveControls(ks=True, mu=True, dh=False), False
    if mode == "iwda":
        return ActiveControls(ks=True, mu=True, dh=False), True
    if mode == "ihda":
        return ActiveControls(ks=True, mu=True, dh=True), True
    raise ConfigError(f"unknown mode {mode!r}")


@dataclass
class ExperimentConfig:
    catchment: CatchmentSpec = field(default_factory=CatchmentSpec)
    event: EventSpec = field(default_factory=EventSpec)
    truth: TruthSpec = field(default_factory=TruthSpec)
    prior: PriorSpec = field(default_factory=PriorSpec)
    observation: ObservationSpec = field(default_factory=ObservationSpec)
    cycle: CycleSpec = field(default_factory=CycleSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    run: RunSpec = field(default_factory=RunSpec)


_SECTIONS = {
    "catchment": ("catchment", CatchmentSpec),
    "event": ("event", EventSpec),
    "truth": ("truth", TruthSpec),
    "prior": ("prior", PriorSpec),
    "observation": ("observation", ObservationSpec),
    "cycle": ("cycle", CycleSpec),
    "solver": ("solver", SolverConfig),
    "run": ("run", RunSpec),
}


def _coerce(raw: str, default) -> object:
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        items = [s for s in raw.replace(",", " ").split() if s]
        elem = default[0] if default else 0.0
        return tuple(type(elem)(s) for s in items)
    if isinstance(default, np.ndarray):
        items = [s for s in raw.replace(",", " ").split() if s]
        return np.array([float(s) for s in items])
    return raw


def load_config(path: str | os.PathLike | None = None,
                overrides: dict[str, dict[str, str]] | None = None) -> ExperimentConfig:
    """Build a config from defaults, then an INI file, then overrides
    ({section: {key: raw value}})."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if overrides:
        for section, values in overrides.items():
            if not parser.has_section(section):
                parser.add_section(section)
            for key, val in values.items():
                parser.set(section, key, val)

    kwargs = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
    for section, (attr, cls) in _SECTIONS.items():
        defaults = cls()
        values = {}
        if parser.has_section(section):
            known = {f.name for f in fields(cls)}
            for key, raw in parser.items(section):
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in section [{section}]")
                try:
                    values[key] = _coerce(raw, getattr(defaults, key))
                except (ValueError, TypeError) as exc:
                    raise ConfigError(
                        f"bad value for [{section}] {key} = {raw!r}: {exc}") from exc
        try:
            kwargs[attr] = cls(**values) if values else defaults
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"invalid [{section}] settings: {exc}") from exc
    return ExperimentConfig(**kwargs)


def dump_config(config: ExperimentConfig) -> str:
    """Render a config as INI text (the print-config output; reloadable)."""
    out = io.StringIO()
    for section, (attr, _) in _SECTIONS.items():
        spec = getattr(config, attr)
        out.write(f"[{section}]\n")
        for f in fields(spec):
            if f.name.startswith("_"):
                continue
            value = getattr(spec, f.name)
            if isinstance(value, np.ndarray):
                rendered = " ".join(repr(float(v)) for v in value)
            elif isinstance(value, tuple):
                rendered = " ".join(str(v) for v in value)
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            out.write(f"{f.name} = {rendered}\n")
        out.write("\n")
    return out.getvalue()


def config_as_dict(config: ExperimentConfig) -> dict:
    """JSON-friendly view of the config (for run manifests)."""
    def convert(obj):
        if isinstance(obj, np.ndarray):
            return [float(v) for v in obj]
        if isinstance(obj, tuple):
            return list(obj)
        return obj
    out = {}
    for section, (attr, _) in _SECTIONS.items():
        spec = getattr(config, attr)
        out[section] = {f.name: convert(getattr(spec, f.name))
                        for f in fields(spec) if not f.name.startswith("_")}
    return out

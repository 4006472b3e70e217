"""
Lab configuration: flat ``section.key = value`` text, one assignment per line.

The grammar is the dotted-key subset of TOML, so files are parsed with a TOML reader and
written back by :func:`dump_config`. Values are floats, integers, quoted strings or
flat lists of numbers. Unknown keys are rejected with the line they appear on.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
import re
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from satim.dynamics import MotorParams
from satim.injection import InjectionSpec
from satim.magnetics import EnergyModel, LinearEnergy, SaturatedEnergy

RATED_VOLTAGE_PEAK = 400.0
RATED_ELECTRICAL_SPEED = 2.0 * math.pi * 50.0


class ConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class MagneticsConfig:
    kind: str = "saturated"
    Lm: float = 0.42
    Ll: float = 0.12
    eps_m: float = 0.1
    eps_l: float = 1.0

    def model(self) -> EnergyModel:
        if self.kind == "linear":
            return LinearEnergy(Lm=self.Lm, Ll=self.Ll)
        return SaturatedEnergy(Lm=self.Lm, Ll=self.Ll, eps_m=self.eps_m, eps_l=self.eps_l)


@dataclasses.dataclass(frozen=True)
class InjectionConfig:
    waveform: str = "square"
    omega_hz: float = 500.0
    amplitude: float = 20.0
    angle: float = 0.0  # rad, direction of u_tilde

    def spec(self, omega_hz: float | None = None) -> InjectionSpec:
        u = self.amplitude * np.array([math.cos(self.angle), math.sin(self.angle)])
        return InjectionSpec(self.waveform, self.omega_hz if omega_hz is None else omega_hz, u)


@dataclasses.dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-5  # simulate command
    duration: float = 0.05  # simulate command, unless the scenario sets one
    samples_per_period: int = 200  # injection experiments
    periods: int = 6


@dataclasses.dataclass(frozen=True)
class SweepConfig:
    characterize_flux_pct: tuple[float, ...] = (5.0, 75.0, 100.0, 125.0, 150.0)
    omega_s_max: float = 2.0 * math.pi * 10.0
    omega_s_count: int = 25
    orientations: int = 16
    observability_flux_pct: tuple[float, ...] = (50.0, 100.0, 150.0)
    torque_min: float = -5.0
    torque_max: float = 5.0
    torque_step: float = 0.1
    convergence_hz: tuple[float, ...] = (250.0, 500.0, 1000.0, 2000.0)
    convergence_flux_pct: float = 100.0

    def omega_s_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.omega_s_max, self.omega_s_count)

    def torque_grid(self) -> np.ndarray:
        n = int(round((self.torque_max - self.torque_min) / self.torque_step)) + 1
        # rounding keeps grid values like 0.3 free of accumulated step error
        return np.round(self.torque_min + self.torque_step * np.arange(n), 12)


@dataclasses.dataclass(frozen=True)
class LabConfig:
    motor: MotorParams = MotorParams()
    magnetics: MagneticsConfig = MagneticsConfig()
    injection: InjectionConfig = InjectionConfig()
    sim: SimConfig = SimConfig()
    sweep: SweepConfig = SweepConfig()
    nominal_flux: float = RATED_VOLTAGE_PEAK / RATED_ELECTRICAL_SPEED

    def model(self) -> EnergyModel:
        return self.magnetics.model()

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()


_SECTIONS = ("motor", "magnetics", "injection", "sim", "sweep")


def _check_value(key: str, value: Any, default: Any) -> Any:
    if isinstance(default, tuple):
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{key}: expected a non-empty list of numbers")
        return tuple(float(_check_value(key, v, 0.0)) for v in value)
    if isinstance(default, bool) or isinstance(value, bool):
        raise ConfigError(f"{key}: booleans are not accepted here")
    if isinstance(default, int):
        if not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{key}: expected a finite number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    return value


def _line_of(text: str, key: str, section: bool = False) -> int | None:
    tail = r"\s*\." if section else r"\s*="
    pat = re.compile(r"^\s*" + re.escape(key).replace(r"\.", r"\s*\.\s*") + tail)
    for i, line in enumerate(text.splitlines(), 1):
        if pat.match(line):
            return i
    return None


def _build(cls: type, data: dict[str, Any], prefix: str, text: str) -> Any:
    fields = {f.name: f for f in dataclasses.fields(cls)}
    defaults = cls()
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}{name}"
        if name not in fields:
            line = _line_of(text, key)
            where = f"line {line}: " if line else ""
            raise ConfigError(f"{where}unknown key {key!r}")
        try:
            kwargs[name] = _check_value(key, value, getattr(defaults, name))
        except ConfigError as exc:
            line = _line_of(text, key)
            raise ConfigError(f"line {line}: {exc}" if line else str(exc)) from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from None


def parse_config(text: str) -> LabConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from None
    sections = {}
    top = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key!r} must be a section of dotted keys")
            sections[key] = value
        elif key == "nominal_flux":
            top[key] = _check_value(key, value, 1.0)
        else:
            line = _line_of(text, key) or _line_of(text, key, section=True)
            raise ConfigError(f"line {line}: unknown key {key!r}" if line else f"unknown key {key!r}")
    types = {
        "motor": MotorParams,
        "magnetics": MagneticsConfig,
        "injection": InjectionConfig,
        "sim": SimConfig,
        "sweep": SweepConfig,
    }
    parts = {name: _build(types[name], sections[name], name + ".", text) for name in sections}
    cfg = LabConfig(**parts, **top)
    validate(cfg)
    return cfg


def load_config(path: str | Path | None) -> LabConfig:
    if path is None:
        return LabConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def validate(cfg: LabConfig) -> None:
    """Range checks that the module constructors do not already perform."""
    mag = cfg.magnetics
    if mag.kind not in ("linear", "saturated"):
        raise ConfigError(f"magnetics.kind must be 'linear' or 'saturated', got {mag.kind!r}")
    try:
        cfg.model()
        cfg.injection.spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not cfg.injection.amplitude > 0:
        raise ConfigError("injection.amplitude must be positive")
    if not cfg.nominal_flux > 0:
        raise ConfigError("nominal_flux must be positive")
    sim, sw = cfg.sim, cfg.sweep
    if not (sim.dt > 0 and sim.duration > 0):
        raise ConfigError("sim.dt and sim.duration must be positive")
    if sim.samples_per_period < 100 or sim.samples_per_period % 2:
        raise ConfigError("sim.samples_per_period must be even and at least 100")
    if sim.periods < 3:
        raise ConfigError("sim.periods must be at least 3")
    if sw.omega_s_count < 1:
        raise ConfigError("sweep.omega_s_count must be >= 1")
    # equispaced over a full turn, so an even count repeats each direction modulo pi
    if (sw.orientations if sw.orientations % 2 else sw.orientations // 2) < 3:
        raise ConfigError("sweep.orientations must give at least 3 directions modulo pi (3, 5, 6, ...)")
    if not sw.torque_step > 0 or sw.torque_max < sw.torque_min:
        raise ConfigError("sweep torque grid is empty")
    if any(p < 0 for p in sw.characterize_flux_pct + sw.observability_flux_pct):
        raise ConfigError("flux percentages must be non-negative")
    if any(f <= 0 for f in sw.convergence_hz):
        raise ConfigError("sweep.convergence_hz entries must be positive")


def _fmt(value: Any) -> str:
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    if isinstance(value, float):
        return repr(value)  # shortest round-tripping form
    return str(value)


def dump_config(cfg: LabConfig) -> str:
    lines = []
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            lines.append(f"{section}.{f.name} = {_fmt(getattr(obj, f.name))}")
    lines.append(f"nominal_flux = {_fmt(cfg.nominal_flux)}")
    return "\n".join(lines) + "\n"

"""
Scenario files for the ``simulate`` command.

Line-based text. ``#`` starts a comment. Header lines are ``key = value``:

    duration = 0.05            # s, optional (defaults to sim.duration)
    locked_rotor = true        # true | false, default false
    phis0 = 1.2857, 0.0        # Wb, default (0, 0)
    phir0 = 1.0, 0.0           # Wb, default (0, 0)
    omega0 = 0.0               # rad/s, default 0

Every other non-blank line is a segment row with six whitespace-separated fields:

    t_start  us_d  us_q  omega_s  Tl  inject

Each segment holds its inputs from t_start until the next segment starts. ``inject`` is
``on`` or ``off`` and adds the configured pulsating injection inside the segment. The first
segment must start at 0 and start times must increase.
"""

from __future__ import annotations

import dataclasses
import math
from pathlib import Path

import numpy as np

from satim.dynamics import ImInputs, ImState
from satim.injection import WaveKind, waveform_s
from satim.magnetics import Array


class ScenarioError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class Segment:
    t_start: float
    us: tuple[float, float]
    omega_s: float
    Tl: float
    inject: bool


@dataclasses.dataclass(frozen=True)
class Scenario:
    segments: tuple[Segment, ...]
    duration: float | None = None
    locked_rotor: bool = False
    phis0: tuple[float, float] = (0.0, 0.0)
    phir0: tuple[float, float] = (0.0, 0.0)
    omega0: float = 0.0

    def initial_state(self) -> ImState:
        return ImState(np.array(self.phis0), np.array(self.phir0), self.omega0)

    @property
    def has_injection(self) -> bool:
        return any(seg.inject for seg in self.segments)


def _floats(text: str, n: int, where: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.replace(",", " ").split()]
    if len(parts) != n:
        raise ScenarioError(f"{where}: expected {n} number(s), got {len(parts)}")
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        raise ScenarioError(f"{where}: not a number in {text.strip()!r}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ScenarioError(f"{where}: values must be finite")
    return vals


def _bool(text: str, where: str) -> bool:
    word = text.strip().lower()
    if word in ("true", "on", "1", "yes"):
        return True
    if word in ("false", "off", "0", "no"):
        return False
    raise ScenarioError(f"{where}: expected on/off or true/false, got {text.strip()!r}")


def parse_scenario(text: str, name: str = "<scenario>") -> Scenario:
    header: dict[str, object] = {}
    segments: list[Segment] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{name}:{lineno}"
        if "=" in line:
            key, value = (p.strip() for p in line.split("=", 1))
            if key in header:
                raise ScenarioError(f"{where}: duplicate key {key!r}")
            if key == "duration":
                (header[key],) = _floats(value, 1, where)
                if not header[key] > 0:
                    raise ScenarioError(f"{where}: duration must be positive")
            elif key == "locked_rotor":
                header[key] = _bool(value, where)
            elif key in ("phis0", "phir0"):
                header[key] = _floats(value, 2, where)
            elif key == "omega0":
                (header[key],) = _floats(value, 1, where)
            else:
                raise ScenarioError(f"{where}: unknown key {key!r}")
            continue
        fields = line.split()
        if len(fields) != 6:
            raise ScenarioError(
                f"{where}: segment rows need 6 fields (t_start us_d us_q omega_s Tl inject), "
                f"got {len(fields)}"
            )
        t0, ud, uq, ws, tl = _floats(" ".join(fields[:5]), 5, where)
        seg = Segment(t0, (ud, uq), ws, tl, _bool(fields[5], where))
        if not segments and t0 != 0.0:
            raise ScenarioError(f"{where}: the first segment must start at t = 0")
        if segments and t0 <= segments[-1].t_start:
            raise ScenarioError(f"{where}: segment start times must increase")
        segments.append(seg)
    if not segments:
        raise ScenarioError(f"{name}: no segment rows")
    return Scenario(tuple(segments), **header)


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return parse_scenario(text, str(path))


@dataclasses.dataclass(frozen=True)
class ScenarioInputs:
    """Piecewise-constant inputs with injection windows; right-continuous at segment starts."""

    scenario: Scenario
    waveform: WaveKind
    omega_hz: float
    u_tilde: Array
    snap: float = 1e-12

    def _segment(self, t: float, left: bool) -> Segment:
        starts = [seg.t_start for seg in self.scenario.segments]
        # grid times carry round-off; treat starts within snap as exact
        shift = -self.snap if left else self.snap
        idx = int(np.searchsorted(starts, t + shift, side="right")) - 1
        return self.scenario.segments[max(idx, 0)]

    def _at(self, t: float, left: bool) -> ImInputs:
        seg = self._segment(t, left)
        us = np.array(seg.us, dtype=float)
        if seg.inject:
            us = us + np.asarray(self.u_tilde, float) * waveform_s(
                self.waveform, self.omega_hz * t, left=left
            )
        return ImInputs(us, seg.omega_s, seg.Tl)

    def __call__(self, t: float) -> ImInputs:
        return self._at(t, False)

    def left_limit(self, t: float) -> ImInputs:
        return self._at(t, True)

    def injection_mask(self, t: Array) -> Array:
        return np.array([self._segment(float(tk), False).inject for tk in t])

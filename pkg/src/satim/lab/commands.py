"""
The lab experiments. Each ``cmd_*`` returns a :class:`Table`; writing is left to the caller.

Operating points are independent, so sweeps fan out over flux levels when ``parallel > 1``.
Results are gathered in grid order, which keeps the output independent of scheduling.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

from satim.dynamics import (
    Equilibrium,
    EquilibriumError,
    SimulationDivergedError,
    equilibrium_locked_rotor,
    simulate,
)
from satim.injection import (
    demodulate,
    measure_saliency,
    ripple_amplitudes,
    run_injection,
    samples_per_period,
    sliding_mean_state,
)
from satim.lab.config import LabConfig
from satim.lab.scenario import Scenario, ScenarioError, ScenarioInputs
from satim.magnetics import DegenerateEnergyError, saliency_params
from satim.observability import PerUnitBase, condition_sweep

NUMERIC_ERRORS = (EquilibriumError, DegenerateEnergyError, np.linalg.LinAlgError)

CHARACTERIZE_COLUMNS = (
    "flux_wb", "omega_s", "i_sq",
    "a_direct", "b_direct", "sigma_direct",
    "a_sim", "b_sim", "sigma_sim",
    "err_a", "err_b", "err_sigma",
)
OBSERVABILITY_COLUMNS = ("flux_pct", "torque_nm", "cond_os", "cond_os_prime", "rank_o", "feasible")
CONVERGENCE_COLUMNS = ("omega_hz", "hf_rel_err", "mean_state_err", "ripple_peak_a")
TRAJECTORY_COLUMNS = (
    "t_s", "phis_d", "phis_q", "phir_d", "phir_q", "omega",
    "is_d", "is_q", "islf_d", "islf_q", "ishf_d", "ishf_q",
)


class NumericFailure(RuntimeError):
    """A command could not produce any meaningful output."""


@dataclasses.dataclass(frozen=True)
class Table:
    name: str
    columns: tuple[str, ...]
    rows: list[tuple[Any, ...]]
    notes: tuple[str, ...] = ()


def _fan_out(fn: Callable[..., list], args: Sequence[tuple], parallel: int) -> list:
    if parallel > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=min(parallel, len(args))) as pool:
            parts = list(pool.map(fn, *zip(*args)))
    else:
        parts = [fn(*a) for a in args]
    return [row for part in parts for row in part]


def _wrap(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(angle, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


def _rel(sim: float, ref: float) -> float:
    return (sim - ref) / abs(ref) if ref != 0.0 else math.nan


def characterize_level(cfg: LabConfig, flux_pct: float) -> list[tuple]:
    """All omega_s rows at one flux level; one batched simulation covers every orientation."""
    model, params = cfg.model(), cfg.motor
    flux = cfg.nominal_flux * flux_pct / 100.0
    eqs: list[Equilibrium | None] = []
    for ws in cfg.sweep.omega_s_grid():
        try:
            eqs.append(equilibrium_locked_rotor(np.array([flux, 0.0]), float(ws), model, params))
        except NUMERIC_ERRORS:
            eqs.append(None)
    good = [e for e in eqs if e is not None]
    fits: list = []
    if good:
        try:
            fits, _, _ = measure_saliency(
                good, cfg.injection.spec(), model, params,
                n_orientations=cfg.sweep.orientations,
                periods=cfg.sim.periods, samples=cfg.sim.samples_per_period,
            )
        except (SimulationDivergedError, *NUMERIC_ERRORS):
            fits = [None] * len(good)
    it = iter(fits)
    rows = []
    for ws, eq in zip(cfg.sweep.omega_s_grid(), eqs):
        if eq is None:
            rows.append((flux, float(ws)) + (math.nan,) * 10)
            continue
        d = saliency_params(eq.Hss)
        s = next(it)
        if s is None:
            rows.append((flux, float(ws), float(eq.is_[1]), d.a, d.b, d.sigma) + (math.nan,) * 6)
            continue
        rows.append((
            flux, float(ws), float(eq.is_[1]),
            d.a, d.b, d.sigma, s.a, s.b, s.sigma,
            _rel(s.a, d.a), _rel(s.b, d.b), _wrap(s.sigma - d.sigma),
        ))
    return rows


def cmd_characterize(cfg: LabConfig, parallel: int = 1) -> Table:
    """
    Locked-rotor saliency characterization over flux levels and stator speeds.

    err_a and err_b are relative to the direct values (NaN when the direct b is 0); err_sigma is
    the wrapped difference in rad.
    """
    args = [(cfg, p) for p in cfg.sweep.characterize_flux_pct]
    rows = _fan_out(characterize_level, args, parallel)
    if all(math.isnan(r[6]) for r in rows):
        raise NumericFailure("no operating point of the characterization could be evaluated")
    return Table("characterize", CHARACTERIZE_COLUMNS, rows)


def observability_level(cfg: LabConfig, flux_pct: float, per_unit: bool) -> list[tuple]:
    flux = cfg.nominal_flux * flux_pct / 100.0
    sweep = condition_sweep(
        [flux], list(cfg.sweep.torque_grid()), cfg.injection.spec().u_tilde,
        cfg.model(), cfg.motor, PerUnitBase() if per_unit else None,
    )
    return [
        (flux_pct, float(r.Tl), r.cond_Os, r.cond_Os_prime, r.rank_O, r.feasible) for r in sweep
    ]


def cmd_observability(cfg: LabConfig, parallel: int = 1, per_unit: bool = False) -> Table:
    """Condition numbers of Os and Os' along omega_s = 0; infeasible points keep a row with feasible = 0."""
    args = [(cfg, p, per_unit) for p in cfg.sweep.observability_flux_pct]
    rows = _fan_out(observability_level, args, parallel)
    if not any(r[5] for r in rows):
        raise NumericFailure("no feasible equilibrium on the torque grid")
    return Table("observability", OBSERVABILITY_COLUMNS, rows)


def convergence_point(cfg: LabConfig, omega_hz: float, eq: Equilibrium, duration: float) -> tuple:
    model, params = cfg.model(), cfg.motor
    spec = cfg.injection.spec(omega_hz)
    periods = int(round(duration * omega_hz))
    run = run_injection(eq, spec, model, params, periods, cfg.sim.samples_per_period)
    pred = eq.Hss @ spec.u_tilde
    hf_err = np.linalg.norm(run.is_hf[run.settled] - pred, axis=-1) / np.linalg.norm(pred)
    x_lf = sliding_mean_state(run)[run.settled]
    state_err = np.linalg.norm(x_lf[:, :4] - eq.state.to_array()[:4], axis=-1)
    ripple_is, _, _ = ripple_amplitudes(run)
    return (float(omega_hz), float(hf_err.max()), float(state_err.max()), float(ripple_is))


def cmd_convergence(cfg: LabConfig, parallel: int = 1) -> Table:
    """
    Averaging error against injection frequency at one locked-rotor equilibrium (omega_s = 0).

    Every frequency integrates the same physical time, ``sim.periods`` periods of the lowest
    frequency, so slow drifts of the mean state are compared like for like.
    """
    flux = cfg.nominal_flux * cfg.sweep.convergence_flux_pct / 100.0
    try:
        eq = equilibrium_locked_rotor(np.array([flux, 0.0]), 0.0, cfg.model(), cfg.motor)
    except NUMERIC_ERRORS as exc:
        raise NumericFailure(f"convergence equilibrium: {exc}") from exc
    freqs = sorted(cfg.sweep.convergence_hz)
    duration = cfg.sim.periods / freqs[0]
    args = [(cfg, f, eq, duration) for f in freqs]
    try:
        rows = _fan_out(_convergence_rows, args, parallel)
    except (SimulationDivergedError, ValueError) as exc:
        raise NumericFailure(f"convergence run: {exc}") from exc
    notes = tuple(
        f"ratio {a[0]:g}->{b[0]:g} Hz: hf_rel_err {a[1] / b[1]:.4g}, "
        f"mean_state_err {a[2] / b[2]:.4g}"
        for a, b in zip(rows, rows[1:])
    )
    return Table("convergence", CONVERGENCE_COLUMNS, rows, notes)


def _convergence_rows(cfg: LabConfig, omega_hz: float, eq: Equilibrium, duration: float) -> list:
    return [convergence_point(cfg, omega_hz, eq, duration)]


def cmd_simulate(cfg: LabConfig, scenario: Scenario) -> Table:
    """Integrate a scenario and split the stator current into its lf and hf parts."""
    spec = cfg.injection.spec()
    dt = cfg.sim.dt
    duration = scenario.duration if scenario.duration is not None else cfg.sim.duration
    if scenario.has_injection:
        try:
            n = samples_per_period(dt, spec.omega_hz)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        if n < 100 or n % 2:
            raise ScenarioError(
                f"sim.dt gives {n} samples per injection period; need an even count >= 100"
            )
    signal = ScenarioInputs(scenario, spec.waveform, spec.omega_hz, spec.u_tilde)
    try:
        traj = simulate(
            scenario.initial_state(), signal, duration, dt, cfg.model(), cfg.motor,
            scenario.locked_rotor,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    except SimulationDivergedError as exc:
        raise NumericFailure(str(exc)) from exc
    if scenario.has_injection:
        try:
            is_lf, is_hf = demodulate(traj, spec)
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
    else:
        is_lf, is_hf = traj.is_, np.zeros_like(traj.is_)
    data = np.column_stack([traj.t, traj.x, traj.is_, is_lf, is_hf])
    return Table("trajectory", TRAJECTORY_COLUMNS, [tuple(r) for r in data.tolist()])

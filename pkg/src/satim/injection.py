"""
Pulsating high-frequency voltage injection and extraction of the virtual current measurement.

With us = us_lf + u_tilde s(Omega t), the stator current is

    is = is_lf + (1/Omega) Hss(phis_lf, phir_lf) u_tilde S(Omega t) + O(1/Omega^2)

where S is the zero-mean primitive of the 1-periodic waveform s. :func:`demodulate` recovers
is_lf and is_hf = Hss u_tilde from a sampled trajectory; :func:`fit_saliency` turns is_hf
measured for several injection orientations into the (a, b, sigma) saliency parameters.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Callable, Literal, Sequence

import numpy as np

from satim.dynamics import (
    Equilibrium,
    ImInputs,
    ImState,
    MotorParams,
    Trajectory,
    simulate,
)
from satim.magnetics import Array, EnergyModel, SaliencyParams

WaveKind = Literal["square", "sine"]

# Phases closer than this to a switching instant of the square wave count as on it.
_PHASE_SNAP = 1e-9


class IllPosedFitError(ValueError):
    pass


def _frac(sigma: Array) -> Array:
    f = np.mod(sigma, 1.0)
    return np.where(f > 1.0 - _PHASE_SNAP, 0.0, f)


def waveform_s(kind: WaveKind, sigma: Array, left: bool = False) -> Array:
    """
    The 1-periodic zero-mean injection waveform.

    The square wave is +1 on [0, 1/2) and -1 on [1/2, 1), right-continuous unless ``left``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if kind == "sine":
        return np.sin(2.0 * np.pi * sigma)
    if kind == "square":
        f = np.mod(sigma, 1.0)
        near_half = np.abs(f - 0.5) < _PHASE_SNAP
        near_zero = (f < _PHASE_SNAP) | (f > 1.0 - _PHASE_SNAP)
        out = np.where(f < 0.5, 1.0, -1.0)
        if left:
            out = np.where(near_half, 1.0, np.where(near_zero, -1.0, out))
        else:
            out = np.where(near_half, -1.0, np.where(near_zero, 1.0, out))
        return out
    raise ValueError(f"unsupported waveform {kind!r}")


def waveform_S(kind: WaveKind, sigma: Array) -> Array:
    """Zero-mean primitive of :func:`waveform_s`."""
    sigma = np.asarray(sigma, dtype=float)
    if kind == "sine":
        return -np.cos(2.0 * np.pi * sigma) / (2.0 * np.pi)
    if kind == "square":
        f = _frac(sigma)
        return np.where(f <= 0.5, f - 0.25, 0.75 - f)
    raise ValueError(f"unsupported waveform {kind!r}")


@dataclasses.dataclass(frozen=True)
class Waveform:
    """Tabulated waveform: s, its zero-mean primitive S and the mean of S^2 over a period."""

    s: Callable[[Array], Array]
    S: Callable[[Array], Array]
    S_rms2: float

    @classmethod
    def builtin(cls, kind: WaveKind) -> Waveform:
        rms2 = {"square": 1.0 / 48.0, "sine": 1.0 / (8.0 * np.pi**2)}
        if kind not in rms2:
            raise ValueError(f"unsupported waveform {kind!r}")
        return cls(
            lambda x: waveform_s(kind, x), lambda x: waveform_S(kind, x), rms2[kind]
        )

    @classmethod
    def custom(cls, s: Callable[[Array], Array], n_grid: int = 4096) -> Waveform:
        """Build S by periodic trapezoidal integration of ``s``; ``s`` must have zero mean."""
        grid = np.arange(n_grid) / n_grid
        vals = np.asarray(s(grid), dtype=float)
        mean = vals.mean()
        if abs(mean) > 1e-9 * max(1.0, np.abs(vals).max()):
            raise ValueError(f"waveform has nonzero mean {mean:.3e}")
        closed = np.r_[vals, vals[0]]
        prim = np.r_[0.0, np.cumsum(0.5 * (closed[1:] + closed[:-1]))] / n_grid
        prim -= prim[:-1].mean()
        xs = np.r_[grid, 1.0]

        def S(x: Array) -> Array:
            return np.interp(np.mod(x, 1.0), xs, prim)

        return cls(s, S, float(np.mean(prim[:-1] ** 2)))


@dataclasses.dataclass(frozen=True)
class InjectionSpec:
    waveform: WaveKind = "square"
    omega_hz: float = 500.0
    u_tilde: Array = dataclasses.field(default_factory=lambda: np.array([20.0, 0.0]))

    def __post_init__(self) -> None:
        if not self.omega_hz > 0:
            raise ValueError(f"injection frequency must be positive, got {self.omega_hz}")
        if self.waveform not in ("square", "sine"):
            raise ValueError(f"unsupported waveform {self.waveform!r}")

    @property
    def period(self) -> float:
        return 1.0 / self.omega_hz

    def with_direction(self, theta: float) -> InjectionSpec:
        mag = float(np.linalg.norm(self.u_tilde))
        return dataclasses.replace(
            self, u_tilde=mag * np.array([np.cos(theta), np.sin(theta)])
        )


@dataclasses.dataclass(frozen=True)
class InjectedInputs:
    """Constant low-frequency inputs plus pulsating injection; ``u_tilde`` may be batched."""

    base: ImInputs
    waveform: WaveKind
    omega_hz: float
    u_tilde: Array

    def _at(self, t: float, left: bool) -> ImInputs:
        s = waveform_s(self.waveform, self.omega_hz * t, left=left)
        us = np.asarray(self.base.us, float) + np.asarray(self.u_tilde, float) * s
        return ImInputs(us, self.base.omega_s, self.base.Tl)

    def __call__(self, t: float) -> ImInputs:
        return self._at(t, False)

    def left_limit(self, t: float) -> ImInputs:
        return self._at(t, True)


def check_bandwidth(spec: InjectionSpec, model: EnergyModel, params: MotorParams) -> None:
    """Warn when the injection is not well above the unsaturated electrical dynamics."""
    hss, hsr, hrr = model.origin_blocks()
    a = np.block(
        [[-params.Rs * hss, -params.Rs * hsr], [-params.Rr * hsr.T, -params.Rr * hrr]]
    )
    fastest = float(np.max(np.abs(np.linalg.eigvals(a))))
    if 2.0 * np.pi * spec.omega_hz < 10.0 * fastest:
        warnings.warn(
            f"injection at {spec.omega_hz} Hz is below 10x the fastest electrical mode "
            f"({fastest:.1f} rad/s); averaging may be inaccurate",
            stacklevel=2,
        )


def predicted_virtual_current(
    model: EnergyModel, phis_lf: Array, phir_lf: Array, u_tilde: Array
) -> Array:
    """is_hf = Hss(phis_lf, phir_lf) u_tilde, in A/s."""
    hss, _, _ = model.hessian_blocks(phis_lf, phir_lf, check=False)
    return np.einsum("...ij,...j->...i", hss, np.asarray(u_tilde, float))


def samples_per_period(dt: float, omega_hz: float) -> int:
    ratio = 1.0 / (omega_hz * dt)
    n = int(round(ratio))
    if abs(ratio - n) > 1e-6 * ratio:
        raise ValueError(
            f"dt={dt} does not divide the injection period 1/{omega_hz} s"
        )
    return n


def _window_trapz(y: Array, n: int, dt: float, start: int = 0) -> Array:
    """
    Trapezoidal integral over the last n intervals at every sample.

    Samples before ``start`` are invalid; outputs whose window reaches them are NaN.
    """
    v = y[start:]
    c = np.zeros_like(v)
    c[1:] = np.cumsum(0.5 * (v[1:] + v[:-1]) * dt, axis=0)
    out = np.full_like(y, np.nan)
    out[start + n :] = c[n:] - c[:-n]
    return out


def demodulate(
    traj: Trajectory, spec: InjectionSpec, signal: Array | None = None
) -> tuple[Array, Array]:
    """
    Split the stator current into its low-frequency part and the virtual measurement.

    is_lf(t) is the one-period sliding mean. is_hf(t) is Omega times the sliding correlation of
    is(tau - T/2) - is_lf(tau) with S(Omega (tau - T/2)), divided by the sliding integral of S^2;
    the reference S is delayed with the current so both stay in phase. The first two periods
    are NaN. ``signal`` overrides ``traj.is_`` (same time axis).
    """
    y = traj.is_ if signal is None else np.asarray(signal, float)
    dt = traj.dt
    n = samples_per_period(dt, spec.omega_hz)
    if n < 100:
        raise ValueError(f"need at least 100 samples per injection period, got {n}")
    if n % 2:
        raise ValueError(f"samples per period must be even for the half-period shift, got {n}")
    if len(traj.t) - 1 < 3 * n:
        raise ValueError("trajectory shorter than three injection periods")
    h = n // 2
    omega = spec.omega_hz
    is_lf = _window_trapz(y, n, dt) * omega

    shape = (len(traj.t),) + (1,) * (y.ndim - 1)
    s_ref = np.full(shape, np.nan)
    s_ref[h:] = waveform_S(spec.waveform, omega * traj.t[:-h]).reshape((-1,) + shape[1:])
    delayed = np.full_like(y, np.nan)
    delayed[h:] = y[:-h]
    num = _window_trapz((delayed - is_lf) * s_ref, n, dt, start=n)
    den = _window_trapz(s_ref**2, n, dt, start=n)
    is_hf = omega * num / den
    return is_lf, is_hf


def fit_saliency(thetas: Array, i_hf: Array, u_mag: float) -> SaliencyParams:
    """
    Least-squares (a, b, sigma) from virtual currents measured at injection orientations.

    Model: i_hf = a u + b |u| (cos(sigma - theta), sin(sigma - theta)), solved linearly in
    (a, b cos sigma, b sin sigma).
    """
    thetas = np.asarray(thetas, dtype=float).ravel()
    i_hf = np.asarray(i_hf, dtype=float).reshape(-1, 2)
    if len(thetas) != len(i_hf):
        raise ValueError("thetas and i_hf lengths differ")
    folded = np.mod(thetas, np.pi)
    folded = np.where(folded > np.pi - 1e-9, 0.0, folded)
    distinct = np.unique(np.round(folded, 9))
    if len(distinct) < 3:
        raise IllPosedFitError(
            f"need at least 3 distinct orientations modulo pi, got {len(distinct)}"
        )
    c, s = np.cos(thetas), np.sin(thetas)
    rows = np.empty((2 * len(thetas), 3))
    rows[0::2] = np.stack([c, c, s], axis=1)
    rows[1::2] = np.stack([s, -s, c], axis=1)
    rows *= u_mag
    if np.linalg.cond(rows.T @ rows) > 1e12:
        raise IllPosedFitError("orientation set gives a singular normal matrix")
    (a, p, q), *_ = np.linalg.lstsq(rows, i_hf.ravel(), rcond=None)
    b = float(np.hypot(p, q))
    sigma = float(np.arctan2(q, p)) if b > 0 else 0.0
    if sigma <= -np.pi:
        sigma = np.pi
    return SaliencyParams(float(a), b, sigma)


def virtual_current_samples(params: SaliencyParams, thetas: Array, u_mag: float) -> Array:
    """Noise-free i_hf for each orientation, shape (n, 2)."""
    thetas = np.asarray(thetas, dtype=float)
    u = u_mag * np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    return u @ params.matrix().T


@dataclasses.dataclass(frozen=True)
class InjectionRun:
    traj: Trajectory
    is_lf: Array
    is_hf: Array
    settled: slice
    """Samples after the two-period filter transient."""


def _stacked(eqs: Sequence[Equilibrium]) -> tuple[Array, Array, Array, ImInputs]:
    phis = np.stack([e.state.phis for e in eqs])[:, None, :]
    phir = np.stack([e.state.phir for e in eqs])[:, None, :]
    omega = np.array([float(e.state.omega) for e in eqs])[:, None]
    inputs = ImInputs(
        np.stack([np.asarray(e.inputs.us, float) for e in eqs])[:, None, :],
        np.array([float(e.inputs.omega_s) for e in eqs])[:, None],
        np.array([float(e.inputs.Tl) for e in eqs])[:, None],
    )
    return phis, phir, omega, inputs


def run_injection(
    eq: Equilibrium | Sequence[Equilibrium],
    spec: InjectionSpec,
    model: EnergyModel,
    params: MotorParams,
    periods: int = 6,
    samples: int = 200,
    u_tilde: Array | None = None,
    locked_rotor: bool = True,
) -> InjectionRun:
    """
    Simulate injection around an equilibrium and demodulate the stator current.

    The stator flux starts on the first-order ripple, phis(0) = phis_eq + u_tilde S(0) / Omega,
    which removes the slowly decaying O(1/Omega) flux offset a cold start would leave.
    ``u_tilde`` may carry a leading batch axis (one run per direction). Given a sequence of
    equilibria, the batch axes become (equilibrium, direction).
    """
    ut = np.asarray(spec.u_tilde if u_tilde is None else u_tilde, dtype=float)
    if isinstance(eq, Equilibrium):
        phis, phir, omega, base = eq.state.phis, eq.state.phir, eq.state.omega, eq.inputs
    else:
        phis, phir, omega, base = _stacked(eq)
    dt = spec.period / samples
    s0 = float(waveform_S(spec.waveform, 0.0))
    phis0 = phis + ut * s0 / spec.omega_hz
    phir0 = np.broadcast_to(phir, phis0.shape)
    state0 = ImState(phis0, phir0, np.broadcast_to(omega, phis0.shape[:-1]))
    signal = InjectedInputs(base, spec.waveform, spec.omega_hz, ut)
    traj = simulate(state0, signal, periods * spec.period, dt, model, params, locked_rotor)
    is_lf, is_hf = demodulate(traj, spec)
    return InjectionRun(traj, is_lf, is_hf, slice(2 * samples, None))


def extracted_virtual_current(run: InjectionRun) -> Array:
    """Mean of is_hf over the settled samples."""
    return np.mean(run.is_hf[run.settled], axis=0)


def orientations(n: int) -> Array:
    return 2.0 * np.pi * np.arange(n) / n


def measure_saliency(
    eq: Equilibrium | Sequence[Equilibrium],
    spec: InjectionSpec,
    model: EnergyModel,
    params: MotorParams,
    n_orientations: int = 16,
    periods: int = 6,
    samples: int = 200,
) -> tuple[SaliencyParams | list[SaliencyParams], Array, Array]:
    """
    Simulated locked-rotor characterization: inject along ``n_orientations`` equispaced
    directions, extract is_hf for each and fit (a, b, sigma).

    Returns (fit, thetas, i_hf); with a sequence of equilibria, ``fit`` is a list and ``i_hf``
    has shape (n_equilibria, n_orientations, 2).
    """
    thetas = orientations(n_orientations)
    mag = float(np.linalg.norm(spec.u_tilde))
    ut = mag * np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    run = run_injection(eq, spec, model, params, periods, samples, u_tilde=ut)
    i_hf = extracted_virtual_current(run)
    if isinstance(eq, Equilibrium):
        return fit_saliency(thetas, i_hf, mag), thetas, i_hf
    return [fit_saliency(thetas, row, mag) for row in i_hf], thetas, i_hf


def sliding_mean_state(run: InjectionRun) -> Array:
    """One-period sliding mean of the state (x_lf), NaN during the first period."""
    n = run.settled.start // 2
    return _window_trapz(run.traj.x, n, run.traj.dt) / (n * run.traj.dt)


def ripple_amplitudes(run: InjectionRun) -> tuple[Array, Array, Array]:
    """
    Peak deviation from the one-period sliding mean over the settled samples.

    Returns (stator current in A, stator flux in Wb, rotor flux in Wb).
    """
    traj = run.traj
    n = run.settled.start // 2
    x_lf = sliding_mean_state(run)
    # the window mean ending at sample k is centered half a period earlier
    h = n // 2
    lagged = slice(run.settled.start - h, traj.x.shape[0] - h)
    settled = run.settled

    def peak(y: Array, y_lf: Array) -> Array:
        return np.linalg.norm(y[lagged] - y_lf[settled], axis=-1).max(axis=0)

    return (
        peak(traj.is_, run.is_lf),
        peak(traj.phis, x_lf[..., 0:2]),
        peak(traj.phir, x_lf[..., 2:4]),
    )

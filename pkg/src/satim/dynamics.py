"""
dq-frame dynamics of the saturated induction motor, fixed-step simulation and steady states.

State vectors are packed as x = (phis_d, phis_q, phir_d, phir_q, omega) along the last axis,
so a batch of independent motors is simply an array of shape (..., 5).
"""

from __future__ import annotations

import dataclasses
from typing import Callable, Protocol

import numpy as np

from satim.magnetics import J, Array, EnergyModel, torque_stator


@dataclasses.dataclass(frozen=True)
class MotorParams:
    Rs: float = 13.0
    Rr: float = 10.0
    n_pole_pairs: int = 2
    Jl: float = 5e-3

    def __post_init__(self) -> None:
        for name in ("Rs", "Rr", "n_pole_pairs", "Jl"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


TABLE_I = MotorParams()


@dataclasses.dataclass(frozen=True)
class ImState:
    phis: Array
    phir: Array
    omega: Array | float

    def to_array(self) -> Array:
        phis, phir = np.broadcast_arrays(
            np.asarray(self.phis, float), np.asarray(self.phir, float)
        )
        omega = np.broadcast_to(np.asarray(self.omega, float), phis.shape[:-1])
        return np.concatenate([phis, phir, omega[..., None]], axis=-1)

    @classmethod
    def from_array(cls, x: Array) -> ImState:
        x = np.asarray(x, dtype=float)
        return cls(x[..., 0:2], x[..., 2:4], x[..., 4])


@dataclasses.dataclass(frozen=True)
class ImInputs:
    us: Array
    omega_s: Array | float = 0.0
    Tl: Array | float = 0.0


@dataclasses.dataclass(frozen=True)
class Equilibrium:
    state: ImState
    inputs: ImInputs
    is_: Array
    ir: Array
    Hss: Array
    Hsr: Array
    Hrr: Array
    omega_g: float
    residual: float


class InputSignal(Protocol):
    """
    Time function of the inputs.

    Signals with discontinuities may also define ``left_limit(t)``; the integrator uses it for
    the last stage of a step so that a jump located exactly on the grid is not seen early.
    """

    def __call__(self, t: float) -> ImInputs: ...


class SimulationDivergedError(ArithmeticError):
    pass


class EquilibriumError(RuntimeError):
    def __init__(self, message: str, residual: float) -> None:
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


def rhs(
    x: Array,
    us: Array,
    omega_s: Array | float,
    Tl: Array | float,
    model: EnergyModel,
    params: MotorParams,
    locked_rotor: bool = False,
) -> tuple[Array, Array]:
    """Packed right-hand side; returns (dx/dt, is)."""
    phis, phir, omega = x[..., 0:2], x[..., 2:4], x[..., 4]
    is_, ir = model.currents(phis, phir)
    omega_s = np.asarray(omega_s, dtype=float)
    ws = omega_s[..., None]
    wg = (omega_s - omega)[..., None]
    dx = np.empty(np.broadcast_shapes(x.shape, np.shape(us)[:-1] + (5,)))
    # J @ phi = (-phi_q, phi_d)
    dx[..., 0] = us[..., 0] - params.Rs * is_[..., 0] + ws[..., 0] * phis[..., 1]
    dx[..., 1] = us[..., 1] - params.Rs * is_[..., 1] - ws[..., 0] * phis[..., 0]
    dx[..., 2] = -params.Rr * ir[..., 0] + wg[..., 0] * phir[..., 1]
    dx[..., 3] = -params.Rr * ir[..., 1] - wg[..., 0] * phir[..., 0]
    if locked_rotor:
        dx[..., 4] = 0.0
    else:
        te = torque_stator(phis, is_, params.n_pole_pairs)
        dx[..., 4] = params.n_pole_pairs / params.Jl * (te - Tl)
    return dx, is_


def state_derivative(
    state: ImState,
    inputs: ImInputs,
    model: EnergyModel,
    params: MotorParams,
    locked_rotor: bool = False,
) -> ImState:
    dx, _ = rhs(
        state.to_array(),
        np.asarray(inputs.us, float),
        inputs.omega_s,
        inputs.Tl,
        model,
        params,
        locked_rotor,
    )
    return ImState.from_array(dx)


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Samples on t = 0, dt, ..., n dt. Arrays carry the time axis first."""

    t: Array
    x: Array
    is_: Array
    us: Array
    omega_s: Array
    Tl: Array
    dt: float

    @property
    def phis(self) -> Array:
        return self.x[..., 0:2]

    @property
    def phir(self) -> Array:
        return self.x[..., 2:4]

    @property
    def omega(self) -> Array:
        return self.x[..., 4]


def _as_arrays(inputs: ImInputs, shape: tuple[int, ...]) -> tuple[Array, Array, Array]:
    us = np.broadcast_to(np.asarray(inputs.us, float), shape + (2,))
    ws = np.broadcast_to(np.asarray(inputs.omega_s, float), shape)
    tl = np.broadcast_to(np.asarray(inputs.Tl, float), shape)
    return us, ws, tl


def constant_input(inputs: ImInputs) -> Callable[[float], ImInputs]:
    return lambda t: inputs


def simulate(
    state0: ImState,
    input_signal: InputSignal,
    t_end: float,
    dt: float,
    model: EnergyModel,
    params: MotorParams,
    locked_rotor: bool = False,
) -> Trajectory:
    """
    Classical fixed-step RK4 integration on a uniform grid.

    ``state0`` may be batched; every leading axis is simulated independently.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(t_end, dt):
        raise ValueError(f"t_end={t_end} is not a whole number of steps of dt={dt}")
    left = getattr(input_signal, "left_limit", input_signal)

    x = state0.to_array()
    batch = x.shape[:-1]
    t = np.arange(n + 1) * dt
    xs = np.empty((n + 1,) + x.shape)
    iss = np.empty((n + 1,) + batch + (2,))
    uss = np.empty((n + 1,) + batch + (2,))
    wss = np.empty((n + 1,) + batch)
    tls = np.empty((n + 1,) + batch)

    def f(xk: Array, inputs: ImInputs) -> tuple[Array, Array]:
        us, ws, tl = _as_arrays(inputs, batch)
        return rhs(xk, us, ws, tl, model, params, locked_rotor)

    # overflow is reported as divergence below
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n + 1):
            tk = t[k]
            inp = input_signal(tk)
            k1, is_k = f(x, inp)
            xs[k] = x
            iss[k] = is_k
            uss[k], wss[k], tls[k] = _as_arrays(inp, batch)
            if k == n:
                break
            mid = input_signal(tk + 0.5 * dt)
            k2, _ = f(x + 0.5 * dt * k1, mid)
            k3, _ = f(x + 0.5 * dt * k2, mid)
            k4, _ = f(x + dt * k3, left(t[k + 1]))
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(x)):
                raise SimulationDivergedError(f"non-finite state at t={t[k + 1]:.6g} s")
    return Trajectory(t, xs, iss, uss, wss, tls, dt)


def _newton(
    residual: Callable[[Array], tuple[Array, Array]],
    z0: Array,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> tuple[Array, float, int]:
    """Damped Newton: halve the step while the residual norm grows."""
    z = np.asarray(z0, dtype=float)
    r, jac = residual(z)
    norm = float(np.linalg.norm(r))
    for it in range(1, max_iter + 1):
        if norm < tol:
            return z, norm, it - 1
        step = np.linalg.solve(jac, -r)
        lam = 1.0
        while True:
            z_new = z + lam * step
            r_new, jac_new = residual(z_new)
            norm_new = float(np.linalg.norm(r_new))
            if norm_new < norm or lam < 1e-6:
                break
            lam *= 0.5
        z, r, jac, norm = z_new, r_new, jac_new, norm_new
    if norm < tol:
        return z, norm, max_iter
    raise EquilibriumError(f"Newton did not converge in {max_iter} iterations", norm)


def _steady_residual(
    phis: Array, phir: Array, omega: float, inputs: ImInputs, model: EnergyModel, params: MotorParams
) -> float:
    dx, _ = rhs(
        np.r_[phis, phir, omega], np.asarray(inputs.us, float), inputs.omega_s, inputs.Tl, model, params
    )
    dx[4] *= params.Jl / params.n_pole_pairs  # torque balance in N m
    return float(np.max(np.abs(dx)))


def _finish(
    phis: Array, phir: Array, omega: float, omega_s: float, Tl: float | None, model: EnergyModel, params: MotorParams
) -> Equilibrium:
    is_, ir = model.currents(phis, phir)
    hss, hsr, hrr = model.hessian_blocks(phis, phir)
    us = params.Rs * is_ + omega_s * (J @ phis)
    if Tl is None:
        Tl = float(torque_stator(phis, is_, params.n_pole_pairs))
    inputs = ImInputs(us, float(omega_s), float(Tl))
    res = _steady_residual(phis, phir, omega, inputs, model, params)
    return Equilibrium(
        ImState(phis, phir, float(omega)), inputs, is_, ir, hss, hsr, hrr, float(omega_s - omega), res
    )


def _linear_guess(model: EnergyModel, rhs_rotor: Array, phir: Array) -> Array:
    # Solve Hrs phis = rhs - Hrr phir with the origin (unsaturated) blocks.
    _, hsr0, hrr0 = model.origin_blocks()
    return np.linalg.solve(hsr0.T, rhs_rotor - hrr0 @ phir)


def equilibrium_locked_rotor(
    phir_target: Array,
    omega_s: float,
    model: EnergyModel,
    params: MotorParams,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> Equilibrium:
    """
    Steady state with omega = 0 and the rotor flux held at ``phir_target``.

    The stator flux solves Rr ir(phis, phir) = -J omega_s phir; the voltage then follows from the
    stator equation and the load torque is set equal to the electromagnetic torque.
    """
    phir = np.asarray(phir_target, dtype=float)
    target = -omega_s * (J @ phir) / params.Rr

    def residual(phis: Array) -> tuple[Array, Array]:
        _, ir = model.currents(phis, phir)
        _, hsr, _ = model.hessian_blocks(phis, phir, check=False)
        return params.Rr * (ir - target), params.Rr * hsr.T

    phis, _, _ = _newton(residual, _linear_guess(model, target, phir), tol, max_iter)
    return _finish(phis, phir, 0.0, omega_s, None, model, params)


def equilibrium_with_load(
    phir_mag: float,
    omega_s: float,
    Tl: float,
    model: EnergyModel,
    params: MotorParams,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> Equilibrium:
    """
    Steady state with the rotor flux (phir_mag, 0), frame speed ``omega_s`` and load ``Tl``.

    Unknowns are phis and omega: rotor equation -Rr ir - J (omega_s - omega) phir = 0 and torque
    balance -np phis^T J is = Tl.
    """
    phir = np.array([float(phir_mag), 0.0])
    npp = params.n_pole_pairs
    jphir = J @ phir

    def residual(z: Array) -> tuple[Array, Array]:
        phis, omega = z[:2], z[2]
        is_, ir = model.currents(phis, phir)
        hss, hsr, _ = model.hessian_blocks(phis, phir, check=False)
        r = np.empty(3)
        r[:2] = -params.Rr * ir - (omega_s - omega) * jphir
        r[2] = -npp * phis @ J @ is_ - Tl
        jac = np.zeros((3, 3))
        jac[:2, :2] = -params.Rr * hsr.T
        jac[:2, 2] = jphir
        jac[2, :2] = -npp * (J @ is_ - hss @ J @ phis)
        return r, jac

    # Te = np phir^T J ir holds for every energy of invariant form, which fixes the slip.
    omega0 = omega_s - params.Rr * Tl / (npp * phir_mag**2) if phir_mag > 0 else omega_s
    target = -(omega_s - omega0) * jphir / params.Rr
    z0 = np.r_[_linear_guess(model, target, phir), omega0]
    z, _, _ = _newton(residual, z0, tol, max_iter)
    return _finish(z[:2], phir, z[2], omega_s, Tl, model, params)


def equilibrium_zero_stator_speed(
    phir_mag: float,
    Tl: float,
    model: EnergyModel,
    params: MotorParams,
    tol: float = 1e-9,
    max_iter: int = 50,
) -> Equilibrium:
    """Equilibrium on the line omega_s = 0 carrying load torque ``Tl``."""
    return equilibrium_with_load(phir_mag, 0.0, Tl, model, params, tol, max_iter)

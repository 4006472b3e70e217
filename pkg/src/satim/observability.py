"""
First-order observability of the linearized saturated IM, with and without HF injection.

Column orders: (dphis, dphir, domega, dTl) for the no-injection matrix O, and
(dphis, dphir, domega) for the injection matrices Os and Os'.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from satim.dynamics import Equilibrium, MotorParams, equilibrium_zero_stator_speed, EquilibriumError
from satim.magnetics import J, Array, DegenerateEnergyError, EnergyModel

RANK_TOL = 1e-8
DEFAULT_U_TILDE = np.array([20.0, 0.0])


class SingularMatrixError(np.linalg.LinAlgError):
    pass


@dataclasses.dataclass(frozen=True)
class MMatrices:
    M: Array
    Omega_r: Array
    X_r: Array
    v: Array


@dataclasses.dataclass(frozen=True)
class LinearizedModel:
    A: Array  # 5x5
    C: Array  # 2x5, physical measurement
    Cv: Array  # 2x5, virtual measurement


@dataclasses.dataclass(frozen=True)
class ObservabilityReport:
    O: Array
    Os: Array
    Os_prime: Array
    rank_O: int
    rank_Os: int
    cond_Os: float
    cond_Os_prime: float
    M: Array
    Omega_r: Array
    X_r: Array
    v: Array


def numerical_rank(m: Array, tol_rel: float = RANK_TOL) -> int:
    s = np.linalg.svd(np.asarray(m, float), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol_rel * s[0]))


def condition_number(m: Array) -> float:
    """sigma_max / sigma_min over the min(m, n) singular values; inf when sigma_min is 0."""
    s = np.linalg.svd(np.asarray(m, float), compute_uv=False)
    if s[-1] == 0.0:
        return math.inf
    return float(s[0] / s[-1])


def _inv(m: Array, name: str) -> Array:
    if np.linalg.cond(m) > 1e12:
        raise SingularMatrixError(f"{name} is singular")
    return np.linalg.inv(m)


def build_M(eq: Equilibrium, params: MotorParams) -> MMatrices:
    hss, hsr, hrr = eq.Hss, eq.Hsr, eq.Hrr
    hsr_inv = _inv(hsr, "Hsr")
    omega_r = params.Rr * hsr.T - params.Rr * hrr @ hsr_inv @ hss
    x_r = hsr @ J @ hsr_inv
    ws = eq.inputs.omega_s
    m = hsr @ omega_r + hss @ J * ws - x_r @ hss * eq.omega_g
    v = hsr @ J @ eq.state.phir
    return MMatrices(m, omega_r, x_r, v)


def build_O(eq: Equilibrium, params: MotorParams, mm: MMatrices | None = None) -> Array:
    """
    Rows: the current, its first and second derivatives with dphir eliminated; 6x6.

        [ Hss                        Hsr  0                0           ]
        [ -M                         0    v                0           ]
        [ (np^2/Jl) v is^T J         0    M J M^-1 v ws    (np/Jl) v   ]
    """
    mm = build_M(eq, params) if mm is None else mm
    npp, jl = params.n_pole_pairs, params.Jl
    ws = eq.inputs.omega_s
    o = np.zeros((6, 6))
    o[0:2, 0:2] = eq.Hss
    o[0:2, 2:4] = eq.Hsr
    o[2:4, 0:2] = -mm.M
    o[2:4, 4] = mm.v
    o[4:6, 0:2] = npp**2 / jl * np.outer(mm.v, eq.is_ @ J)
    o[4:6, 4] = mm.M @ J @ _inv(mm.M, "M") @ mm.v * ws
    o[4:6, 5] = npp / jl * mm.v
    return o


def build_O_extended(eq: Equilibrium, params: MotorParams, mm: MMatrices | None = None) -> Array:
    """
    O with the third-derivative block appended (8x6).

    The new block follows the recursion d^3 is = (np^2/Jl) v is^T J d(dphis)/dt + LC, with
    d(dphis)/dt = -J ws dphis + LC; it is only complete on the line ws = 0.
    """
    mm = build_M(eq, params) if mm is None else mm
    o = build_O(eq, params, mm)
    npp, jl = params.n_pole_pairs, params.Jl
    ws = eq.inputs.omega_s
    row = np.zeros((2, 6))
    row[:, 0:2] = npp**2 / jl * np.outer(mm.v, eq.is_ @ J) @ (-J * ws)
    return np.vstack([o, row])


def augmented_system(eq: Equilibrium, params: MotorParams) -> tuple[Array, Array]:
    """
    Full 6-state linearization (dphis, dphir, domega, dTl) with the measured current as output.

    Unlike the 5x5 ``A`` used for Os, the speed row keeps the linearized torque balance.
    """
    npp, jl = params.n_pole_pairs, params.Jl
    ws, wg = eq.inputs.omega_s, eq.omega_g
    a = np.zeros((6, 6))
    a[0:2, 0:2] = -params.Rs * eq.Hss - J * ws
    a[0:2, 2:4] = -params.Rs * eq.Hsr
    a[2:4, 0:2] = -params.Rr * eq.Hsr.T
    a[2:4, 2:4] = -params.Rr * eq.Hrr - J * wg
    a[2:4, 4] = J @ eq.state.phir
    phis_j = eq.state.phis @ J
    a[4, 0:2] = npp / jl * (npp * eq.is_ @ J - npp * phis_j @ eq.Hss)
    a[4, 2:4] = -npp**2 / jl * phis_j @ eq.Hsr
    a[4, 5] = -npp / jl
    c = np.zeros((2, 6))
    c[:, 0:2] = eq.Hss
    c[:, 2:4] = eq.Hsr
    return a, c


def equilibrate(m: Array, sweeps: int = 5) -> Array:
    """Alternately normalize rows and columns to unit 2-norm; preserves rank. Zero lines stay zero."""
    m = np.asarray(m, dtype=float)
    for _ in range(sweeps):
        r = np.linalg.norm(m, axis=1, keepdims=True)
        m = m / np.where(r > 0.0, r, 1.0)
        c = np.linalg.norm(m, axis=0, keepdims=True)
        m = m / np.where(c > 0.0, c, 1.0)
    return m


def kalman_observability(
    eq: Equilibrium, params: MotorParams, n_blocks: int = 3, balanced: bool = True
) -> Array:
    """
    Stack C, CA, ..., CA^(n_blocks-1) of the augmented linearization.

    In SI units the blocks grow like |A|^k, so by default the result is equilibrated.
    """
    a, c = augmented_system(eq, params)
    rows, blk = [], c
    for _ in range(n_blocks):
        rows.append(blk)
        blk = blk @ a
    k = np.vstack(rows)
    return equilibrate(k) if balanced else k


def build_linearized(
    eq: Equilibrium, u_tilde: Array, params: MotorParams, model: EnergyModel
) -> LinearizedModel:
    ws, wg = eq.inputs.omega_s, eq.omega_g
    a = np.zeros((5, 5))
    a[0:2, 0:2] = -params.Rs * eq.Hss - J * ws
    a[0:2, 2:4] = -params.Rs * eq.Hsr
    a[2:4, 0:2] = -params.Rr * eq.Hsr.T
    a[2:4, 2:4] = -params.Rr * eq.Hrr - J * wg
    a[2:4, 4] = J @ eq.state.phir
    c = np.zeros((2, 5))
    c[:, 0:2] = eq.Hss
    c[:, 2:4] = eq.Hsr
    dss, dsr = model.third_contractions(eq.state.phis, eq.state.phir, u_tilde)
    cv = np.zeros((2, 5))
    cv[:, 0:2] = dss
    cv[:, 2:4] = dsr
    return LinearizedModel(a, c, cv)


def build_Os(lin: LinearizedModel) -> Array:
    return np.vstack([lin.C, lin.Cv, lin.C @ lin.A, lin.Cv @ lin.A])


def build_Os_prime(lin: LinearizedModel) -> Array:
    """C, Cv and the q-axis row of CA (algebraic flux inversion with d-aligned rotor flux)."""
    return np.vstack([lin.C, lin.Cv, (lin.C @ lin.A)[1:2]])


def build_Os_extended(
    eq: Equilibrium,
    u_tilde: Array,
    params: MotorParams,
    model: EnergyModel,
    balanced: bool = True,
) -> Array:
    """
    Os over the six states (dphis, dphir, domega, dTl), plus the next derivative of the current.

    Uses the augmented linearization, whose speed row keeps the torque balance, so the load
    torque enters the current through one more differentiation: rows C, Cv, CA, CvA, CA^2.
    The CA^2 block is larger than C by |A|^2 in SI units, so the result is equilibrated unless
    ``balanced`` is False.
    """
    a, c = augmented_system(eq, params)
    dss, dsr = model.third_contractions(eq.state.phis, eq.state.phir, u_tilde)
    cv = np.zeros((2, 6))
    cv[:, 0:2] = dss
    cv[:, 2:4] = dsr
    m = np.vstack([c, cv, c @ a, cv @ a, c @ a @ a])
    return equilibrate(m) if balanced else m


@dataclasses.dataclass(frozen=True)
class PerUnitBase:
    """Bases for row/column scaling: peak rated voltage, current and electrical speed."""

    voltage: float = 400.0
    current: float = 2.0 * math.sqrt(2.0)
    speed: float = 2.0 * math.pi * 50.0

    @property
    def flux(self) -> float:
        return self.voltage / self.speed


def per_unit_Os(os: Array, base: PerUnitBase, prime: bool = False) -> Array:
    """Scale Os (or Os') to per-unit: rows are i, i_hf, di/dt, di_hf/dt; columns 4 fluxes + speed."""
    col = np.array([base.flux] * 4 + [base.speed])
    i_b, w_b = base.current, base.speed
    if prime:
        row = np.array([i_b, i_b, i_b * w_b, i_b * w_b, i_b * w_b])
    else:
        row = np.array([i_b] * 2 + [i_b * w_b] * 4 + [i_b * w_b**2] * 2)
    return os * col[None, :] / row[:, None]


def analyze(
    eq: Equilibrium,
    model: EnergyModel,
    params: MotorParams,
    u_tilde: Array = DEFAULT_U_TILDE,
    per_unit: PerUnitBase | None = None,
    tol_rel: float = RANK_TOL,
) -> ObservabilityReport:
    mm = build_M(eq, params)
    o = build_O(eq, params, mm)
    lin = build_linearized(eq, u_tilde, params, model)
    os_, osp = build_Os(lin), build_Os_prime(lin)
    if per_unit is not None:
        os_, osp = per_unit_Os(os_, per_unit), per_unit_Os(osp, per_unit, prime=True)
    rank_os = numerical_rank(os_, tol_rel)
    # A rank-deficient Os has an infinite condition number, not a round-off sized sigma_min.
    cond_os = condition_number(os_) if rank_os == min(os_.shape) else math.inf
    rank_osp = numerical_rank(osp, tol_rel)
    cond_osp = condition_number(osp) if rank_osp == min(osp.shape) else math.inf
    return ObservabilityReport(
        o, os_, osp, numerical_rank(o, tol_rel), rank_os, cond_os, cond_osp,
        mm.M, mm.Omega_r, mm.X_r, mm.v,
    )


@dataclasses.dataclass(frozen=True)
class SweepRow:
    flux: float
    Tl: float
    cond_Os: float
    cond_Os_prime: float
    rank_O: int
    rank_Os: int
    feasible: bool


def condition_sweep(
    flux_levels: list[float],
    torque_grid: list[float],
    u_tilde: Array,
    model: EnergyModel,
    params: MotorParams,
    per_unit: PerUnitBase | None = None,
    tol_rel: float = RANK_TOL,
) -> list[SweepRow]:
    """One row per (flux, Tl) on the line omega_s = 0; infeasible points are flagged."""
    rows = []
    for flux in flux_levels:
        for tl in torque_grid:
            try:
                eq = equilibrium_zero_stator_speed(flux, tl, model, params)
                rep = analyze(eq, model, params, u_tilde, per_unit, tol_rel)
            except (EquilibriumError, DegenerateEnergyError, np.linalg.LinAlgError):
                rows.append(SweepRow(flux, tl, math.nan, math.nan, -1, -1, False))
                continue
            rows.append(
                SweepRow(flux, tl, rep.cond_Os, rep.cond_Os_prime, rep.rank_O, rep.rank_Os, True)
            )
    return rows

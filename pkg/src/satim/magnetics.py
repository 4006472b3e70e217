"""
Magnetic energy functions of the induction motor in the dq frame.

Every energy handled here depends on the fluxes only through the three invariants

    u1 = |phis|^2 / 2,   u2 = phis . phir,   u3 = |phir|^2 / 2

so currents, Hessian blocks and third-derivative contractions are all assembled from the
partial derivatives of a scalar function h(u1, u2, u3). All functions accept batched fluxes
of shape (..., 2) and broadcast over the leading axes.
"""

from __future__ import annotations

import abc
import dataclasses
import math
from typing import Callable

import numpy as np
import numpy.typing as npt

Array = npt.NDArray[np.float64]

J = np.array([[0.0, -1.0], [1.0, 0.0]])
"""Rotation by +pi/2."""

SIGMA_REFLECTION = np.array([[1.0, 0.0], [0.0, -1.0]])

DEGENERACY_COND = 1e12

# Constant Hessians of the invariants with respect to z = (phis, phir).
_Q = np.zeros((3, 4, 4))
_Q[0, :2, :2] = np.eye(2)
_Q[1, :2, 2:] = np.eye(2)
_Q[1, 2:, :2] = np.eye(2)
_Q[2, 2:, 2:] = np.eye(2)


class DegenerateEnergyError(ValueError):
    """A Hessian block of the energy is singular at the queried point."""


def rotation(eta: float) -> Array:
    c, s = np.cos(eta), np.sin(eta)
    return np.array([[c, -s], [s, c]])


def invariants(phis: Array, phir: Array) -> Array:
    phis = np.asarray(phis, dtype=float)
    phir = np.asarray(phir, dtype=float)
    return np.stack(
        [
            0.5 * np.sum(phis * phis, axis=-1),
            np.sum(phis * phir, axis=-1),
            0.5 * np.sum(phir * phir, axis=-1),
        ],
        axis=-1,
    )


def _invariant_gradients(z: Array) -> Array:
    """Rows are the gradients of (u1, u2, u3) with respect to z; shape (..., 3, 4)."""
    return np.einsum("kij,...j->...ki", _Q, z)


@dataclasses.dataclass(frozen=True)
class SaliencyParams:
    """Parametrization [[a + b cos s, b sin s], [b sin s, a - b cos s]] of a symmetric 2x2 matrix."""

    a: float
    b: float
    sigma: float

    def matrix(self) -> Array:
        c, s = np.cos(self.sigma), np.sin(self.sigma)
        return np.array(
            [[self.a + self.b * c, self.b * s], [self.b * s, self.a - self.b * c]]
        )


class EnergyModel(abc.ABC):
    """
    Magnetic energy H(phis, phir) = h(u1, u2, u3).

    Subclasses implement :meth:`invariant_derivatives`; everything else follows from the chain rule.
    """

    @abc.abstractmethod
    def invariant_derivatives(self, u: Array, order: int) -> list[Array]:
        """
        Return [h, dh, d2h, d3h][: order + 1] at invariants ``u`` of shape (..., 3).

        Shapes are (...), (..., 3), (..., 3, 3) and (..., 3, 3, 3).
        """

    def energy(self, phis: Array, phir: Array) -> Array:
        return self.invariant_derivatives(invariants(phis, phir), 0)[0]

    def currents(self, phis: Array, phir: Array) -> tuple[Array, Array]:
        phis = np.asarray(phis, dtype=float)
        phir = np.asarray(phir, dtype=float)
        dh = self.invariant_derivatives(invariants(phis, phir), 1)[1]
        h1, h2, h3 = dh[..., 0:1], dh[..., 1:2], dh[..., 2:3]
        return h1 * phis + h2 * phir, h2 * phis + h3 * phir

    def hessian(self, phis: Array, phir: Array) -> Array:
        """Full 4x4 Hessian with respect to z = (phis, phir)."""
        z = np.concatenate(np.broadcast_arrays(phis, phir), axis=-1).astype(float)
        _, dh, d2h = self.invariant_derivatives(invariants(z[..., :2], z[..., 2:]), 2)
        g = _invariant_gradients(z)
        return np.einsum("...k,kij->...ij", dh, _Q) + np.einsum(
            "...ki,...kl,...lj->...ij", g, d2h, g
        )

    def hessian_blocks(
        self, phis: Array, phir: Array, check: bool = True
    ) -> tuple[Array, Array, Array]:
        """
        Return (Hss, Hsr, Hrr).

        Hsr is d(is)/d(phir); the reciprocal block Hrs = d(ir)/d(phis) is its transpose.
        Raises DegenerateEnergyError when ``check`` and any block has condition number > 1e12.
        """
        h = self.hessian(phis, phir)
        blocks = h[..., :2, :2], h[..., :2, 2:], h[..., 2:, 2:]
        if check:
            for name, blk in zip(("Hss", "Hsr", "Hrr"), blocks):
                cond = np.linalg.cond(blk)
                if not np.all(np.isfinite(cond) & (cond <= DEGENERACY_COND)):
                    raise DegenerateEnergyError(
                        f"{name} is singular (cond = {np.max(cond):.3g})"
                    )
        return blocks

    def hessian_derivative(self, phis: Array, phir: Array, w: Array) -> Array:
        """Directional derivative of the 4x4 Hessian along the 4-vector ``w``."""
        z = np.concatenate(np.broadcast_arrays(phis, phir), axis=-1).astype(float)
        w = np.broadcast_to(np.asarray(w, dtype=float), z.shape)
        _, dh, d2h, d3h = self.invariant_derivatives(
            invariants(z[..., :2], z[..., 2:]), 3
        )
        gz = _invariant_gradients(z)
        gw = _invariant_gradients(w)
        du = np.einsum("...ki,...i->...k", gz, w)
        d2h_dot = np.einsum("...klm,...m->...kl", d3h, du)
        return (
            np.einsum("...k,kij->...ij", np.einsum("...kl,...l->...k", d2h, du), _Q)
            + np.einsum("...ki,...kl,...lj->...ij", gw, d2h, gz)
            + np.einsum("...ki,...kl,...lj->...ij", gz, d2h, gw)
            + np.einsum("...ki,...kl,...lj->...ij", gz, d2h_dot, gz)
        )

    def third_contractions(
        self, phis: Array, phir: Array, u: Array
    ) -> tuple[Array, Array]:
        """Return (d(Hss u)/d phis, d(Hss u)/d phir) for a stator voltage direction ``u``."""
        u = np.asarray(u, dtype=float)
        w = np.concatenate([u, np.zeros_like(u)], axis=-1)
        d = self.hessian_derivative(phis, phir, w)
        return d[..., :2, :2], d[..., :2, 2:]

    def origin_blocks(self) -> tuple[Array, Array, Array]:
        """Hessian blocks at zero flux, i.e. the unsaturated approximation of the model."""
        return self.hessian_blocks(np.zeros(2), np.zeros(2))


class SumDifferenceEnergy(EnergyModel):
    """
    Energies written in X = |phis + phir|^2 and Y = |phis - phir|^2.

    Subclasses provide ``g(X, Y)`` and its partial derivatives up to order three.
    """

    # dX/du and dY/du: X = 2(u1 + u2 + u3), Y = 2(u1 - u2 + u3)
    _G = np.array([[2.0, 2.0], [2.0, -2.0], [2.0, 2.0]])

    @abc.abstractmethod
    def xy_derivatives(self, x: Array, y: Array, order: int) -> list[Array]:
        """[g, (gX, gY), 2x2, 2x2x2] up to ``order``."""

    def invariant_derivatives(self, u: Array, order: int) -> list[Array]:
        u = np.asarray(u, dtype=float)
        x = 2.0 * (u[..., 0] + u[..., 1] + u[..., 2])
        y = 2.0 * (u[..., 0] - u[..., 1] + u[..., 2])
        d = self.xy_derivatives(x, y, order)
        G = self._G
        out = [d[0]]
        if order >= 1:
            out.append(np.einsum("ka,...a->...k", G, d[1]))
        if order >= 2:
            out.append(np.einsum("ka,...ab,lb->...kl", G, d[2], G))
        if order >= 3:
            out.append(np.einsum("ka,lb,mc,...abc->...klm", G, G, G, d[3]))
        return out

    def energy(self, phis: Array, phir: Array) -> Array:
        phis = np.asarray(phis, dtype=float)
        phir = np.asarray(phir, dtype=float)
        x = np.sum((phis + phir) ** 2, axis=-1)
        y = np.sum((phis - phir) ** 2, axis=-1)
        return self.xy_derivatives(x, y, 0)[0]


@dataclasses.dataclass(frozen=True)
class SaturatedEnergy(SumDifferenceEnergy):
    """
    Fictitious saturated energy

        H = (1 + eps_m X) X / (4 (2 Lm + Ll)) + (1 + eps_l X) Y / (4 Ll)

    Inductances in H, saturation factors in Wb^-2. ``eps_m = eps_l = 0`` is the linear model.
    """

    Lm: float = 0.42
    Ll: float = 0.12
    eps_m: float = 0.1
    eps_l: float = 1.0

    def __post_init__(self) -> None:
        if not (0 < self.Lm < math.inf and 0 < self.Ll < math.inf):
            raise ValueError(f"inductances must be positive: Lm={self.Lm}, Ll={self.Ll}")
        if not (0 <= self.eps_m < math.inf and 0 <= self.eps_l < math.inf):
            raise ValueError(
                f"saturation factors must be non-negative: {self.eps_m}, {self.eps_l}"
            )

    @property
    def _c(self) -> tuple[float, float]:
        return 1.0 / (4.0 * (2.0 * self.Lm + self.Ll)), 1.0 / (4.0 * self.Ll)

    def xy_derivatives(self, x: Array, y: Array, order: int) -> list[Array]:
        c1, c2 = self._c
        em, el = self.eps_m, self.eps_l
        out = [c1 * (1.0 + em * x) * x + c2 * (1.0 + el * x) * y]
        if order >= 1:
            gx = c1 * (1.0 + 2.0 * em * x) + c2 * el * y
            gy = c2 * (1.0 + el * x)
            out.append(np.stack(np.broadcast_arrays(gx, gy), axis=-1))
        if order >= 2:
            hess = np.array([[2.0 * c1 * em, c2 * el], [c2 * el, 0.0]])
            out.append(np.broadcast_to(hess, np.shape(x) + (2, 2)))
        if order >= 3:
            out.append(np.zeros(np.shape(x) + (2, 2, 2)))
        return out


@dataclasses.dataclass(frozen=True)
class LinearEnergy(SaturatedEnergy):
    """Quadratic energy of the unsaturated motor (linear current-flux relations)."""

    eps_m: float = dataclasses.field(default=0.0, init=False)
    eps_l: float = dataclasses.field(default=0.0, init=False)


TABLE_II_LINEAR = LinearEnergy(Lm=0.42, Ll=0.12)
TABLE_II_SATURATED = SaturatedEnergy(Lm=0.42, Ll=0.12, eps_m=0.1, eps_l=1.0)


class GenericInvariantEnergy(EnergyModel):
    """
    User-defined energy h(u1, u2, u3) given with its gradient.

    Second and third derivatives of h are obtained by central differences of ``dh`` in the
    invariant space. Steps are ``max(1e-6, 1e-5 |u|)`` for the second derivatives and
    ``max(1e-4, 1e-3 |u|)`` for the third (second difference of ``dh``).
    """

    def __init__(
        self,
        h: Callable[[Array, Array, Array], Array],
        dh: Callable[[Array, Array, Array], tuple[Array, Array, Array]],
    ) -> None:
        self._h = h
        self._dh = dh

    def _grad(self, u: Array) -> Array:
        g = self._dh(u[..., 0], u[..., 1], u[..., 2])
        return np.stack(np.broadcast_arrays(*g), axis=-1).astype(float)

    def invariant_derivatives(self, u: Array, order: int) -> list[Array]:
        u = np.asarray(u, dtype=float)
        out = [np.asarray(self._h(u[..., 0], u[..., 1], u[..., 2]), dtype=float)]
        if order >= 1:
            out.append(self._grad(u))
        scale = np.linalg.norm(u, axis=-1)[..., None]
        eye = np.eye(3)
        if order >= 2:
            step = np.maximum(1e-6, 1e-5 * scale)
            cols = []
            for k in range(3):
                du = step * eye[k]
                cols.append((self._grad(u + du) - self._grad(u - du)) / (2.0 * step))
            d2 = np.stack(cols, axis=-1)
            out.append(0.5 * (d2 + np.swapaxes(d2, -1, -2)))
        if order >= 3:
            step = np.maximum(1e-4, 1e-3 * scale)
            d3 = np.empty(u.shape[:-1] + (3, 3, 3))
            for j in range(3):
                for k in range(3):
                    ej = step * eye[j]
                    ek = step * eye[k]
                    d3[..., :, j, k] = (
                        self._grad(u + ej + ek)
                        - self._grad(u + ej - ek)
                        - self._grad(u - ej + ek)
                        + self._grad(u - ej - ek)
                    ) / (4.0 * step * step)
            out.append(d3)
        return out


def torque_rotor(phir: Array, ir: Array, n_pole_pairs: int) -> Array:
    """Te = np phir^T J ir."""
    return n_pole_pairs * np.einsum("...i,ij,...j->...", phir, J, ir)


def torque_stator(phis: Array, is_: Array, n_pole_pairs: int) -> Array:
    """Te = -np phis^T J is."""
    return -n_pole_pairs * np.einsum("...i,ij,...j->...", phis, J, is_)


def saliency_params(hss: Array, atol: float = 1e-10) -> SaliencyParams:
    """
    Decompose a symmetric 2x2 matrix into (a, b, sigma) with b >= 0 and sigma in (-pi, pi].

    sigma is set to 0 when b == 0.
    """
    hss = np.asarray(hss, dtype=float)
    if hss.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {hss.shape}")
    if abs(hss[0, 1] - hss[1, 0]) > atol * max(1.0, np.abs(hss).max()):
        raise ValueError(f"matrix is not symmetric: {hss.tolist()}")
    a = 0.5 * (hss[0, 0] + hss[1, 1])
    p = 0.5 * (hss[0, 0] - hss[1, 1])
    q = 0.5 * (hss[0, 1] + hss[1, 0])
    b = float(np.hypot(p, q))
    if b == 0.0:
        return SaliencyParams(float(a), 0.0, 0.0)
    sigma = float(np.arctan2(q, p))
    if sigma <= -np.pi:
        sigma = np.pi
    return SaliencyParams(float(a), b, sigma)

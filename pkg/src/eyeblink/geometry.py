"""Blinking eye geometry: lid motion, the square -> strip -> eye maps and the
complex-variable gradient/divergence on the mapped grid.

Coordinates follow three planes.  ``(xh, yh)`` lives on the fixed square
[-1, 1]^2, ``(xs, ys)`` on the strip ``-1 < ys < lam(t)`` and ``(x, y)`` on the
eye-shaped physical domain, reached through ``z = tanh(zs / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import ChebGrid1D


class DegenerateDomainError(ValueError):
    """Raised when the lid closes the strip completely (lam <= -1)."""


@dataclass(frozen=True)
class LidMotion:
    """Periodic upper-lid motion ``lam(t) = 1 - c + c*tanh(4 cos(2 pi nu t))``."""

    c: float = 0.8
    nu: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.c <= 1.0:
            raise ValueError(f"lid closure fraction c must lie in (0, 1], got {self.c}")
        if not self.nu > 0.0:
            raise ValueError(f"blink frequency nu must be positive, got {self.nu}")


@dataclass(frozen=True)
class StripMap:
    """Square-to-strip stretching ``xs = gamma*xh / (alpha^2 - xh^2)``."""

    alpha: float = 1.3
    gamma: float = 2.2

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    @property
    def xs_max(self) -> float:
        return self.gamma / (self.alpha**2 - 1.0)


def lid_lambda(m: LidMotion, t):
    return 1.0 - m.c + m.c * np.tanh(4.0 * np.cos(2.0 * np.pi * m.nu * t))


def lid_lambda_dot(m: LidMotion, t):
    """Exact time derivative of :func:`lid_lambda`."""
    w = 2.0 * np.pi * m.nu
    return -4.0 * w * m.c * np.sin(w * t) / np.cosh(4.0 * np.cos(w * t)) ** 2


def comp_to_strip(sm: StripMap, lm: LidMotion, xh, yh, t):
    lam = lid_lambda(lm, t)
    xs = sm.gamma * xh / (sm.alpha**2 - xh**2)
    ys = 0.5 * (yh + 1.0) * (lam + 1.0) - 1.0
    return xs, ys


def strip_to_eye(xs, ys):
    denom = np.cos(ys) + np.cosh(xs)
    if np.any(denom <= 0.0):
        raise DegenerateDomainError("strip point outside |ys| < pi maps to infinity")
    return np.sinh(xs) / denom, np.sin(ys) / denom


def fprime(xs, ys):
    """Derivative of the strip-to-eye map, ``0.5 sech^2(zs/2)``."""
    return 0.5 / np.cosh(0.5 * (xs + 1j * ys)) ** 2


def einv(xs, ys):
    """Derivative of the inverse map evaluated at the strip point, ``2 cosh^2(zs/2)``."""
    return 2.0 * np.cosh(0.5 * (xs + 1j * ys)) ** 2


def jacobian_strip(xs, ys):
    """Area factor of the strip-to-eye map, ``|f'|^2 = (cosh xs + cos ys)^-2``."""
    return (np.cosh(xs) + np.cos(ys)) ** -2


def dxs_dxh(sm: StripMap, xh):
    a2 = sm.alpha**2
    return sm.gamma * (a2 + xh**2) / (a2 - xh**2) ** 2


def jacobian_comp(sm: StripMap, lm: LidMotion, xh, t):
    """Area factor of the square-to-strip map, ``(dxs/dxh) * (dys/dyh)``."""
    return dxs_dxh(sm, xh) * 0.5 * (lid_lambda(lm, t) + 1.0)


@dataclass(frozen=True)
class MappedGrid:
    """Geometric state of the tensor grid at one instant.

    Arrays are indexed ``[i, j]`` with ``i`` along x and ``j`` along y.
    """

    t: float
    lam: float
    lam_dot: float
    xs: np.ndarray
    ys: np.ndarray
    F: np.ndarray
    E: np.ndarray
    JR: np.ndarray
    JC: np.ndarray
    x: np.ndarray
    y: np.ndarray
    Dx_tilde: np.ndarray
    Dy_tilde: np.ndarray


def build_mapped_grid(gx: ChebGrid1D, gy: ChebGrid1D, sm: StripMap, lm: LidMotion, t: float) -> MappedGrid:
    lam = float(lid_lambda(lm, t))
    if lam <= -1.0:
        raise DegenerateDomainError(f"lid position {lam} closes the strip at t={t}")
    xh = gx.nodes[:, None]
    yh = gy.nodes[None, :]
    xs, ys = comp_to_strip(sm, lm, xh, yh, t)
    xs, ys = np.broadcast_arrays(xs, ys)
    xs, ys = xs.copy(), ys.copy()
    x, y = strip_to_eye(xs, ys)
    F = fprime(xs, ys)
    E = einv(xs, ys)
    JR = jacobian_strip(xs, ys)
    JC = np.broadcast_to(jacobian_comp(sm, lm, xh, t), xs.shape).copy()
    Dx_tilde = gx.diff / dxs_dxh(sm, gx.nodes)[:, None]
    Dy_tilde = (2.0 / (lam + 1.0)) * gy.diff
    return MappedGrid(
        t=float(t), lam=lam, lam_dot=float(lid_lambda_dot(lm, t)),
        xs=xs, ys=ys, F=F, E=E, JR=JR, JC=JC, x=x, y=y,
        Dx_tilde=Dx_tilde, Dy_tilde=Dy_tilde,
    )


def complex_gradient(H: np.ndarray, mg: MappedGrid) -> np.ndarray:
    """Strip-plane gradient packed as ``h_xs + i h_ys``."""
    return mg.Dx_tilde @ H + 1j * (H @ mg.Dy_tilde.T)


def physical_gradient(Gs: np.ndarray, mg: MappedGrid) -> np.ndarray:
    """Eye-plane gradient ``h_x + i h_y`` from the strip-plane one."""
    return np.conj(mg.E) * Gs


def physical_divergence(Q: np.ndarray, mg: MappedGrid) -> np.ndarray:
    """Eye-plane divergence of the complexified field ``Q = q1 + i q2``."""
    return np.real(mg.E * (mg.Dx_tilde @ Q - 1j * (Q @ mg.Dy_tilde.T)))

"""Semi-discrete diffusion on the blinking domain.

The unknown is an ``Nx x Ny`` matrix ``H`` of nodal values on the computational
square.  Interior nodes carry the evolution equation ``dH/dt = Phi(H)``;
boundary nodes carry algebraic boundary-condition residuals.  Every function
accepts extra leading batch dimensions on ``H`` so finite-difference Jacobians
can be assembled with a handful of vectorised calls.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import (
    LidMotion,
    MappedGrid,
    StripMap,
    build_mapped_grid,
    complex_gradient,
    physical_divergence,
    physical_gradient,
)
from .spectral import ChebGrid1D


class NonpositiveThicknessError(ArithmeticError):
    """Film thickness reached zero or below where ``psi`` has a pole."""


class NumericalBreakdownError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FluxModel:
    """Diffusivity ``psi(h)`` in ``q = -psi(h) grad h``.

    ``kind`` is one of ``"heat"`` (psi = kappa), ``"porous"``
    (psi = (1 - kappa) h + kappa) or ``"film"`` (psi = A - B h^-3).
    """

    kind: str
    kappa: float = 1.0
    A: float = 1.0
    B: float = 0.0

    KINDS = ("heat", "porous", "film")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown flux model {self.kind!r}")
        if self.kind == "heat" and not self.kappa > 0:
            raise ValueError("heat diffusivity kappa must be positive")
        if self.kind == "porous" and not 0 < self.kappa <= 1:
            raise ValueError("porous interpolation weight kappa must lie in (0, 1]")
        if self.kind == "film" and not (self.A > 0 and self.B >= 0):
            raise ValueError("film coefficients need A > 0 and B >= 0")

    @classmethod
    def linear_heat(cls, kappa=1.0):
        return cls("heat", kappa=kappa)

    @classmethod
    def porous(cls, kappa):
        return cls("porous", kappa=kappa)

    @classmethod
    def thin_film(cls, A=1.0, B=1e-9):
        return cls("film", A=A, B=B)

    @property
    def equilibrium_thickness(self) -> float:
        if self.kind != "film":
            raise AttributeError("only the film model has an equilibrium thickness")
        return (self.B / self.A) ** (1.0 / 3.0)


def psi_eval(fm: FluxModel, h):
    if fm.kind == "heat":
        return np.full_like(np.asarray(h, dtype=float), fm.kappa)
    if fm.kind == "porous":
        return (1.0 - fm.kappa) * h + fm.kappa
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0.0):
        raise NonpositiveThicknessError(f"film thickness reached {h.min():.3e}")
    return fm.A - fm.B / h**3


def heat_kernel(t, x, y, kappa=1.0):
    """Free-space heat kernel for ``h_t = kappa * Laplacian(h)``."""
    if np.any(np.asarray(t) <= 0):
        raise ValueError("heat kernel needs t > 0")
    return np.exp(-(x**2 + y**2) / (4.0 * kappa * t)) / (4.0 * np.pi * kappa * t)


@dataclass(frozen=True)
class DirichletHeatKernel:
    """Boundary values from a point source at ``(x0, y0)`` released at time ``-t0``."""

    t0: float = 0.01
    x0: float = 0.1
    y0: float = 0.2
    kappa: float = 1.0

    def __post_init__(self):
        if not self.t0 > 0:
            raise ValueError("kernel time offset t0 must be positive")

    def exact(self, t, x, y):
        return heat_kernel(t + self.t0, x - self.x0, y - self.y0, self.kappa)


@dataclass(frozen=True)
class NoFlux:
    """Mass-conserving flux condition on the moving boundary."""


BoundaryCondition = Union[DirichletHeatKernel, NoFlux]


def boundary_masks(nx: int, ny: int):
    """0/1 indicators ``(B, Bprime)`` of boundary and interior nodes."""
    B = np.ones((nx, ny))
    B[1:-1, 1:-1] = 0.0
    return B, 1.0 - B


def _yh_plus_one(mg: MappedGrid):
    # 1 + yh recovered from the strip coordinate
    return 2.0 * (mg.ys + 1.0) / (mg.lam + 1.0)


def rhs_phi(H, t, mg: MappedGrid, fm: FluxModel, lm: LidMotion = None, Gs=None):
    """Evolution rate of the nodal values on the fixed square.

    ``-div(q)`` in the eye plane plus the advection term that compensates for
    the moving grid.  ``lm`` is accepted for interface symmetry; the lid state
    is already baked into ``mg``.
    """
    if Gs is None:
        Gs = complex_gradient(H, mg)
    Q = -psi_eval(fm, H) * physical_gradient(Gs, mg)
    # 1/(lam+1) * (1+yh) * H Dy_hat^T, with H Dy_hat^T = (lam+1)/2 * Im(Gs)
    advection = 0.5 * mg.lam_dot * _yh_plus_one(mg) * Gs.imag
    out = -physical_divergence(Q, mg) + advection
    if not np.all(np.isfinite(out)):
        raise NumericalBreakdownError(f"non-finite evolution rate at t={t}")
    return out


def dirichlet_residual(H, t, mg: MappedGrid, bc: DirichletHeatKernel):
    return H - bc.exact(t, mg.x, mg.y)


def noflux_residual(H, Gs, t, mg: MappedGrid, fm: FluxModel, lm: LidMotion = None):
    """No-flux residual on the four edges; interior entries are zero.

    Left/right truncation edges (first/last rows) take ``h_xs = 0`` and own
    the corner nodes.  The bottom edge takes ``h_ys = 0``.  The moving top
    edge takes the strip form of ``n.q - (v.n) h = 0`` multiplied by
    ``|f'| > 0``.
    """
    R = np.zeros(np.shape(H))
    R[..., :, 0] = Gs.imag[..., :, 0]
    Ht = H[..., :, -1]
    top_flux = -np.abs(mg.E[:, -1]) * psi_eval(fm, Ht) * Gs.imag[..., :, -1]
    R[..., :, -1] = top_flux - mg.lam_dot * np.abs(mg.F[:, -1]) * Ht
    R[..., 0, :] = Gs.real[..., 0, :]
    R[..., -1, :] = Gs.real[..., -1, :]
    return R


@dataclass(frozen=True)
class BlinkModel:
    """Everything needed to evaluate the DAE residual of one experiment."""

    gx: ChebGrid1D
    gy: ChebGrid1D
    strip: StripMap
    lid: LidMotion
    flux: FluxModel
    bc: BoundaryCondition

    @property
    def shape(self):
        return (self.gx.n, self.gy.n)

    def mapped_grid(self, t) -> MappedGrid:
        return build_mapped_grid(self.gx, self.gy, self.strip, self.lid, t)

    def masks(self):
        return boundary_masks(*self.shape)

    def boundary_residual(self, H, t, mg=None, Gs=None):
        mg = self.mapped_grid(t) if mg is None else mg
        if isinstance(self.bc, DirichletHeatKernel):
            return dirichlet_residual(H, t, mg, self.bc)
        if Gs is None:
            Gs = complex_gradient(H, mg)
        return noflux_residual(H, Gs, t, mg, self.flux, self.lid)

    def rhs(self, H, t, mg=None):
        mg = self.mapped_grid(t) if mg is None else mg
        return rhs_phi(H, t, mg, self.flux, self.lid)


def dae_residual(H, Hdot, t, model: BlinkModel):
    """``Bprime*(Hdot - Phi(H)) + B*R``; boundary rows ignore ``Hdot``."""
    mg = model.mapped_grid(t)
    B, Bp = model.masks()
    Gs = complex_gradient(H, mg)
    phi = rhs_phi(H, t, mg, model.flux, model.lid, Gs=Gs)
    R = model.boundary_residual(H, t, mg, Gs)
    return Bp * (Hdot - phi) + B * R

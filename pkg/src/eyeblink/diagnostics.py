"""Mass, exact-solution error and lid probes on the mapped grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import MappedGrid
from .spectral import ChebGrid1D


def mass(H, mg: MappedGrid, gx: ChebGrid1D, gy: ChebGrid1D) -> float:
    """Integral of ``h`` over the eye domain by tensor Clenshaw-Curtis quadrature."""
    S = mg.JR * mg.JC
    return float(gx.quad_weights @ (S * H) @ gy.quad_weights)


def l2_relative_error(H, exact, mg: MappedGrid, gx: ChebGrid1D, gy: ChebGrid1D) -> float:
    """Relative L2 error over the physical domain.

    ``exact`` is either an array of nodal values or a callable ``exact(x, y)``.
    """
    W = exact(mg.x, mg.y) if callable(exact) else np.asarray(exact)
    ref = mass(W**2, mg, gx, gy)
    if ref <= 0.0:
        raise ZeroDivisionError("exact solution has zero norm")
    return float(np.sqrt(mass((H - W) ** 2, mg, gx, gy) / ref))


def lid_center_values(H, gx: ChebGrid1D, gy: ChebGrid1D):
    """Values at the centres of the upper and lower lids, ``(upper, lower)``."""
    if gx.n % 2 == 0:
        raise ValueError("lid centre probe needs an odd number of x nodes")
    mid = gx.n // 2
    return float(H[mid, -1]), float(H[mid, 0])


@dataclass
class MassSeries:
    times: list = field(default_factory=list)
    mass: list = field(default_factory=list)

    def append(self, t, m):
        self.times.append(float(t))
        self.mass.append(float(m))

    @property
    def relative_change(self):
        m = np.asarray(self.mass)
        if m.size == 0:
            return m
        return (m - m[0]) / m[0]

    def max_abs_relative_change(self):
        rc = self.relative_change
        return float(np.max(np.abs(rc))) if rc.size else 0.0

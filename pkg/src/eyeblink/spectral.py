"""One-dimensional Chebyshev collocation primitives.

Nodes are the Chebyshev extreme points ordered from -1 to +1; every other
module in the package relies on this ascending ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GridSizeError(ValueError):
    """Raised when a grid is requested with fewer than two nodes."""


def _check_size(n: int) -> int:
    n = int(n)
    if n < 2:
        raise GridSizeError(f"Chebyshev grid needs at least 2 nodes, got {n}")
    return n


def cheb_points(n: int) -> np.ndarray:
    """Chebyshev points of the second kind, ``-cos(k*pi/(n-1))`` for k = 0..n-1."""
    n = _check_size(n)
    k = np.arange(n)
    x = -np.cos(np.pi * k / (n - 1))
    # exact symmetry: cos() leaves ~1e-17 residue at the middle node
    x = 0.5 * (x - x[::-1])
    return x


def cheb_diffmat(n: int) -> np.ndarray:
    """Dense n-by-n Chebyshev differentiation matrix on :func:`cheb_points`.

    Off-diagonal entries use the closed form ``c_i / c_j * (-1)^(i+j) / (x_i - x_j)``;
    diagonal entries are the negative row sums so that constants are
    differentiated to exactly zero.
    """
    n = _check_size(n)
    x = cheb_points(n)
    c = np.ones(n)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n))
    D -= np.diag(D.sum(axis=1))
    return D


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on ``cheb_points(n)``.

    Explicit cosine-sum formula (Trefethen, Spectral Methods in MATLAB,
    ``clencurt``).  The rule integrates every polynomial of degree < n exactly.
    """
    n = _check_size(n)
    N = n - 1
    theta = np.pi * np.arange(n) / N
    w = np.zeros(n)
    inner = slice(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[inner]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2.0 * v / N
    # the formula is symmetric; the reversal just matches ascending nodes
    return w[::-1].copy()


@dataclass(frozen=True)
class ChebGrid1D:
    """Nodes, differentiation matrix and quadrature weights for one coordinate."""

    n: int
    nodes: np.ndarray = field(init=False, repr=False)
    diff: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = _check_size(self.n)
        object.__setattr__(self, "n", n)
        for name, value in (
            ("nodes", cheb_points(n)),
            ("diff", cheb_diffmat(n)),
            ("quad_weights", clenshaw_curtis_weights(n)),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)


def apply_dx(D: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Derivative along the first grid index: ``D @ H``.

    ``H`` may carry leading batch dimensions.
    """
    if D.shape != (H.shape[-2], H.shape[-2]):
        raise ValueError(f"apply_dx: operator {D.shape} does not conform to field {H.shape}")
    return D @ H


def apply_dy(H: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Derivative along the second grid index: ``H @ D.T``."""
    if D.shape != (H.shape[-1], H.shape[-1]):
        raise ValueError(f"apply_dy: operator {D.shape} does not conform to field {H.shape}")
    return H @ D.T

"""Finite-difference stencils on uniform Dirichlet grids.

Gradients live on cell midpoints; every discrete operator is the exact
gradient (or Hessian) of the corresponding discrete energy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import sparse

from src.exceptions import ContractViolation


def _difference_1d(nodes: int, h: float) -> sparse.csr_matrix:
    """(nodes-1) x (nodes-2) forward differences with zero boundary values"""
    n = nodes - 2
    rows = nodes - 1
    main = sparse.eye(rows, n, k=0, format="csr")
    lower = sparse.eye(rows, n, k=-1, format="csr")
    return ((main - lower) / h).tocsr()


def _averaging_1d(nodes: int) -> sparse.csr_matrix:
    """(nodes-1) x nodes averaging of consecutive node values onto cells"""
    return (0.5 * (sparse.eye(nodes - 1, nodes, k=0) + sparse.eye(nodes - 1, nodes, k=1))).tocsr()


@dataclass(frozen=True)
class GradientStencil:
    """Edge differences E, edge-to-cell aggregation P and cell quadrature weights.

    The squared gradient on cell c is q_c = (P (E u)^2)_c.
    """

    E: sparse.csr_matrix
    P: sparse.csr_matrix
    cell_weights: np.ndarray

    @property
    def edge_weights(self) -> np.ndarray:
        return self.P.T @ self.cell_weights

    def squared_gradient(self, u: np.ndarray) -> np.ndarray:
        z = self.E @ u
        return self.P @ (z * z)

    def p_energy(self, u: np.ndarray, p: float) -> float:
        q = self.squared_gradient(u)
        return float(self.cell_weights @ (q ** (0.5 * p)) / p)

    def p_gradient(self, u: np.ndarray, p: float) -> np.ndarray:
        z = self.E @ u
        q = self.P @ (z * z)
        a = self.P.T @ (self.cell_weights * _safe_power(q, 0.5 * (p - 2.0)))
        return self.E.T @ (a * z)

    def p_hessian(self, u: np.ndarray, p: float) -> np.ndarray:
        z = self.E @ u
        q = self.P @ (z * z)
        a = self.P.T @ (self.cell_weights * _safe_power(q, 0.5 * (p - 2.0)))
        hess = self.E.T @ sparse.diags(a) @ self.E
        if p != 2.0:
            b = self.cell_weights * (p - 2.0) * _safe_power(q, 0.5 * (p - 4.0))
            Z = sparse.diags(z) @ self.E
            hess = hess + Z.T @ self.P.T @ sparse.diags(b) @ self.P @ Z
        return np.asarray(hess.todense())

    def stiffness(self) -> np.ndarray:
        """Gram matrix of the discrete Dirichlet form, the gradient of (1/2)sum w q"""
        return np.asarray((self.E.T @ sparse.diags(self.edge_weights) @ self.E).todense())


def _safe_power(q: np.ndarray, exponent: float) -> np.ndarray:
    if exponent >= 0.0:
        return q ** exponent
    out = np.zeros_like(q)
    mask = q > 0.0
    out[mask] = q[mask] ** exponent
    return out


def gradient_stencil(nodes: Sequence[int], h: Sequence[float]) -> GradientStencil:
    """Build the cell-midpoint gradient stencil for a 1D or 2D interior grid"""
    if len(nodes) == 1:
        E = _difference_1d(nodes[0], h[0])
        P = sparse.identity(nodes[0] - 1, format="csr")
        return GradientStencil(E, P, np.full(nodes[0] - 1, h[0]))
    if len(nodes) != 2:
        raise ContractViolation(f"grids of dimension {len(nodes)} are not supported")

    nx, ny = nodes
    hx, hy = h
    # interior unknowns ordered with the y index fastest
    restrict_x = sparse.eye(nx, nx - 2, k=-1, format="csr")
    restrict_y = sparse.eye(ny, ny - 2, k=-1, format="csr")
    Dx = sparse.kron(_difference_1d(nx, hx), restrict_y)
    Dy = sparse.kron(restrict_x, _difference_1d(ny, hy))
    E = sparse.vstack([Dx, Dy]).tocsr()

    # each cell averages the squares of its two x-edges and its two y-edges
    Px = sparse.kron(sparse.identity(nx - 1), _averaging_1d(ny))
    Py = sparse.kron(_averaging_1d(nx), sparse.identity(ny - 1))
    P = sparse.hstack([Px, Py]).tocsr()
    weights = np.full((nx - 1) * (ny - 1), hx * hy)
    return GradientStencil(E, P, weights)


def clamped_second_difference(nodes: int, h: float) -> Tuple[sparse.csr_matrix, np.ndarray]:
    """Second differences at every node for u = u' = 0 at both ends.

    Returns (S, weights): S maps the nodes-2 interior values to nodes values,
    boundary rows use the reflected ghost u_{-1} = u_1, and the weights are the
    trapezoidal ones (h/2 at the ends).
    """
    if nodes < 7:
        raise ContractViolation(f"the clamped biharmonic stencil needs at least 7 nodes, got {nodes}")
    n = nodes - 2
    full = sparse.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(nodes, nodes), format="lil")
    full[0, 1] = 2.0
    full[nodes - 1, nodes - 2] = 2.0
    restrict = sparse.eye(nodes, n, k=-1, format="csr")
    S = (full.tocsr() @ restrict / h ** 2).tocsr()
    weights = np.full(nodes, h)
    weights[[0, -1]] = 0.5 * h
    return S, weights


def lumped_mass(interior: int, h: Sequence[float], density: float = 1.0) -> np.ndarray:
    return density * float(np.prod(h)) * np.eye(interior)

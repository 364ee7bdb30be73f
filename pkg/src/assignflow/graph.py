"""Grid graphs with square neighborhoods and the weighted averaging operator.

A weight matrix ``Omega`` has shape ``(m, N)``: column ``k`` of row ``i`` weighs
the ``k``-th neighbor of pixel ``i`` in row-major window order.  The averaging
matrix ``A_Omega`` (``m x m``) is never formed; it is applied as a gather over
``neighbors`` and its transposes as scatters.
"""
from dataclasses import dataclass

import numpy as np

from assignflow.manifold import project_tangent


@dataclass(frozen=True)
class NeighborhoodGraph:
    height: int
    width: int
    window: int
    neighbors: np.ndarray  # (m, N) pixel indices, replicate-padded at borders

    @property
    def m(self):
        return self.height * self.width

    @property
    def size(self):
        """Neighborhood size N (window**2 for grid graphs)."""
        return self.neighbors.shape[1]


def window_offsets(window):
    r = window // 2
    dy, dx = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1), indexing="ij")
    return dy.ravel(), dx.ravel()


def build_grid_graph(height, width, window):
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")
    if height < 1 or width < 1:
        raise ValueError("image must be non-empty")
    dy, dx = window_offsets(window)
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    rr = np.clip(rows.reshape(-1, 1) + dy, 0, height - 1)
    cc = np.clip(cols.reshape(-1, 1) + dx, 0, width - 1)
    neighbors = (rr * width + cc).astype(np.intp)
    neighbors.setflags(write=False)
    return NeighborhoodGraph(height, width, window, neighbors)


def uniform_weights(g):
    return np.full((g.m, g.size), 1.0 / g.size)


def _check(Omega, M, g):
    if Omega.shape != (g.m, g.size) or M.shape[0] != g.m:
        raise ValueError(
            f"shape mismatch: Omega {Omega.shape}, M {M.shape}, graph ({g.m}, {g.size})")


def average_apply(Omega, M, g):
    """``A_Omega M``: row i is ``sum_k Omega[i, k] * M[neighbors[i, k]]``."""
    _check(Omega, M, g)
    return np.einsum("ik,ikj->ij", Omega, M[g.neighbors])


def average_adjoint(U, V, g):
    """Adjoint of ``Omega -> A_Omega V`` evaluated at ``U``.

    Entry ``(i, k)`` is ``<U_i, V_{neighbors[i, k]}>``, i.e. the entries of
    ``U V^T`` restricted to the neighborhood pattern.
    """
    if U.shape != V.shape or U.shape[0] != g.m:
        raise ValueError(f"shape mismatch: U {U.shape}, V {V.shape}")
    return np.einsum("ij,ikj->ik", U, V[g.neighbors])


def average_transpose_apply(Omega, X, g):
    """``A_Omega^T X`` as a scatter-add over the neighbor pattern."""
    _check(Omega, X, g)
    flat = g.neighbors.ravel()
    out = np.empty_like(X, dtype=float)
    for j in range(X.shape[1]):
        contrib = (Omega * X[:, j:j + 1]).ravel()
        out[:, j] = np.bincount(flat, weights=contrib, minlength=g.m)
    return out


def project_param_tangent(M):
    return project_tangent(M)

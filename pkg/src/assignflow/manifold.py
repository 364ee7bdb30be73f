"""Maps on the probability simplex and the assignment manifold.

All functions act row-wise on ``(m, n)`` arrays, so a single simplex point is
just a ``(1, n)`` row (1-D input is accepted as well).  Points are strictly
positive row-stochastic matrices; tangent vectors have zero row sums.
"""
from dataclasses import dataclass

import numpy as np

# entries are clamped here after every map back onto the manifold
FLOOR = 1e-10


def barycenter(m, n):
    """Uniform assignment, every row equal to ``1/n``."""
    return np.full((m, n), 1.0 / n)


def _renormalize(P):
    P = np.maximum(P, FLOOR)
    return P / P.sum(axis=-1, keepdims=True)


def project_tangent(Z):
    """Orthogonal projection of each row onto the zero-sum subspace."""
    Z = np.asarray(Z, dtype=float)
    return Z - Z.mean(axis=-1, keepdims=True)


def replicator(W, Z):
    """Apply ``Diag(W_i) - W_i W_i^T`` to every row ``Z_i``."""
    WZ = W * Z
    return WZ - W * WZ.sum(axis=-1, keepdims=True)


def simplex_exp(W, Z):
    """``W e^Z / <W, e^Z>`` row-wise; constant row shifts of Z are ignored."""
    Z = np.asarray(Z, dtype=float)
    E = W * np.exp(Z - Z.max(axis=-1, keepdims=True))
    return _renormalize(E / E.sum(axis=-1, keepdims=True))


def simplex_exp_inv(W, Q):
    return project_tangent(np.log(Q) - np.log(W))


def lifted_exp(W, V):
    """Exponential map of the e-connection, ``Exp_W(V)``."""
    return simplex_exp(W, V / W)


def lifted_exp_inv(W, Q):
    return replicator(W, np.log(Q) - np.log(W))


def fisher_rao(p, u, v):
    return float(np.sum(np.asarray(u) * np.asarray(v) / np.asarray(p)))


def entropy(W):
    """Row entropies in nats."""
    W = np.asarray(W, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(W > 0, W * np.log(W), 0.0)
    return -terms.sum(axis=-1)


def is_assignment(W, tol=1e-12):
    W = np.asarray(W)
    return bool(np.all(W > 0) and np.all(np.abs(W.sum(axis=-1) - 1.0) <= tol))


def is_tangent(V, tol=1e-12):
    V = np.asarray(V)
    scale = np.maximum(np.abs(V).max(axis=-1), 1.0)
    return bool(np.all(np.abs(V.sum(axis=-1)) <= tol * scale))


@dataclass(frozen=True)
class LabelImage:
    labels: np.ndarray    # (m,) ints in [0, n)
    integral: np.ndarray  # (m,) bool, row entropy below threshold

    def reshape(self, height, width):
        return self.labels.reshape(height, width)


def round_assignment(W, entropy_threshold=0.1):
    """Argmax labels (ties go to the smallest index) plus a near-integrality flag."""
    if not entropy_threshold > 0:
        raise ValueError("entropy threshold must be positive")
    W = np.atleast_2d(W)
    labels = np.argmax(W, axis=1)
    return LabelImage(labels=labels, integral=entropy(W) < entropy_threshold)

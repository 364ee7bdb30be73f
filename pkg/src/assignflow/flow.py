"""Vector fields of the assignment flow and the modified linear assignment flow.

Distances ``D`` (``m x n``) are stored unscaled; ``rho`` enters only through
``D / rho`` when the likelihood is formed.
"""
from dataclasses import dataclass

import numpy as np

from assignflow.graph import (NeighborhoodGraph, average_adjoint, average_apply,
                              average_transpose_apply, uniform_weights)
from assignflow.manifold import (barycenter, lifted_exp, lifted_exp_inv, project_tangent,
                                 replicator, simplex_exp, simplex_exp_inv)


def likelihood(W, D, rho):
    return simplex_exp(W, -np.asarray(D) / rho)


def similarity(W, Omega, D, rho, g):
    """Weighted geometric averaging of likelihoods over each neighborhood.

    Uses the barycentric form ``exp_1(sum_k w_ik (exp_1^{-1}(W_k) - D_k/rho))``.
    """
    n = W.shape[1]
    Z = simplex_exp_inv(barycenter(*W.shape), W) - np.asarray(D) / rho
    return simplex_exp(barycenter(g.m, n), average_apply(Omega, Z, g))


def similarity_direct(W, Omega, D, rho, g):
    """Reference form ``Exp_{W_i}(sum_k w_ik Exp_{W_i}^{-1}(L_k))``.

    O(m N n) memory; used to cross-check :func:`similarity`.
    """
    L = likelihood(W, D, rho)
    Wi = W[:, None, :]
    Lk = L[g.neighbors]
    logs = np.log(Lk) - np.log(Wi)
    tang = Wi * logs - Wi * (Wi * logs).sum(axis=-1, keepdims=True)
    avg = np.einsum("ik,ikj->ij", Omega, tang)
    return lifted_exp(W, avg)


def assignment_flow_field(W, Omega, D, rho, g):
    """Right-hand side ``R_W S(W)`` of the nonlinear assignment flow."""
    return replicator(W, similarity(W, Omega, D, rho, g))


@dataclass(frozen=True)
class FlowContext:
    """Quantities frozen at ``W0 = barycenter`` for the linearized flows."""
    L0: np.ndarray
    PiL0: np.ndarray
    S0: np.ndarray
    graph: NeighborhoodGraph
    drift: np.ndarray  # constant term of the field: PiL0, or Pi[S0] for the plain LAF

    @property
    def shape(self):
        return self.L0.shape


def make_context(D, g, rho, omega0=None, variant="modified"):
    """Freeze ``L(W0)``, ``Pi[L(W0)]`` and ``S(W0)``.

    ``omega0`` selects the weights used to build ``S(W0)`` (uniform by default).
    ``variant="linear"`` gives the unmodified linear assignment flow whose
    constant term is ``Pi[S(W0)]``; it exists for equivalence checks only.
    """
    D = np.asarray(D, dtype=float)
    if D.shape[0] != g.m:
        raise ValueError(f"distance rows {D.shape[0]} != graph size {g.m}")
    W0 = barycenter(*D.shape)
    L0 = likelihood(W0, D, rho)
    PiL0 = project_tangent(L0)
    S0 = similarity(W0, uniform_weights(g) if omega0 is None else omega0, D, rho, g)
    if variant == "modified":
        drift = PiL0
    elif variant == "linear":
        drift = project_tangent(S0)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return FlowContext(L0=L0, PiL0=PiL0, S0=S0, graph=g, drift=drift)


def modified_laf_field(V, Omega, ctx):
    """``F(V, Omega) = Pi[L(W0)] + R_{S(W0)}[A_Omega V]``."""
    return ctx.drift + replicator(ctx.S0, average_apply(Omega, V, ctx.graph))


def dV_F(X, Omega, ctx):
    return replicator(ctx.S0, average_apply(Omega, X, ctx.graph))


def dV_F_adjoint(X, Omega, ctx):
    return average_transpose_apply(Omega, replicator(ctx.S0, X), ctx.graph)


def dOmega_F(Psi, V, ctx):
    """Directional derivative in the weights, ``R_{S(W0)}[A_Psi V]``."""
    return replicator(ctx.S0, average_apply(Psi, V, ctx.graph))


def dOmega_F_adjoint(X, V, ctx):
    """``Pi_P[A^T_{(R_{S0}[X]) V^T}]`` without forming the m x m product."""
    return project_tangent(average_adjoint(replicator(ctx.S0, X), V, ctx.graph))


def assignment_from_tangent(V):
    """``W = exp_{barycenter}(V)``."""
    return simplex_exp(barycenter(*V.shape), V)


def laf_reference_field(W, Omega, ctx):
    """Unreparametrized linear assignment flow on W (plain variant, for tests).

    ``R_W[S(W0) + R_{S0}[A_Omega (Exp_{W0}^{-1}(W) / W0)]]``.
    """
    W0 = barycenter(*W.shape)
    V = lifted_exp_inv(W0, W)
    return replicator(W, ctx.S0 + replicator(ctx.S0, average_apply(Omega, V / W0, ctx.graph)))

"""Learning regularization weights of the modified linear assignment flow.

The objective is ``Phi(Omega) = C(V_N)`` where ``V_N`` is the discrete end
state of the flow started at ``V = 0`` and ``C`` is the summed KL divergence to
a one-hot ground truth.  ``phi_and_gradient`` returns the exact gradient of
the discretized ``Phi`` (adjoint of the Euler or Heun scheme), and ``train``
runs geometric Euler descent on the weight manifold.
"""
import logging
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import logsumexp, softmax

from assignflow.flow import (dOmega_F_adjoint, dV_F_adjoint, make_context,
                             modified_laf_field)
from assignflow.graph import uniform_weights
from assignflow.manifold import is_assignment, replicator, round_assignment, simplex_exp

log = logging.getLogger(__name__)


@dataclass
class Backtracking:
    factor: float = 0.5
    max_halvings: int = 20


@dataclass
class TrainConfig:
    rho: float = 1.0
    window: int = 9
    h: float = 0.5
    T: float = 6.0
    h_prime: float = 0.0125
    max_outer: int = 100
    rel_change_tol: float = 1e-3
    integrator: str = "euler"
    backtracking: Backtracking = field(default_factory=Backtracking)
    step_rule: str = "geometric"

    def __post_init__(self):
        if isinstance(self.backtracking, dict):
            self.backtracking = Backtracking(**self.backtracking)
        for name in ("rho", "h", "T", "h_prime", "rel_change_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be a positive odd integer")
        if self.integrator not in ("euler", "heun"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        self.steps  # validates T/h

    @property
    def steps(self):
        steps = int(round(self.T / self.h))
        if steps < 1 or abs(steps * self.h - self.T) > 1e-9 * max(1.0, self.T):
            raise ValueError(f"T={self.T} is not an integer multiple of h={self.h}")
        return steps

    @classmethod
    def letters(cls, **kw):
        """Binary-letter setting: 7x7 windows, rho 0.5, h 0.1, T 6."""
        base = dict(rho=0.5, window=7, h=0.1, T=6.0, h_prime=0.005, max_outer=50,
                    rel_change_tol=0.01)
        base.update(kw)
        return cls(**base)

    @classmethod
    def curvilinear(cls, **kw):
        """Voronoi line-structure setting: 9x9 windows, rho 1, h 0.5, T 6."""
        base = dict(rho=1.0, window=9, h=0.5, T=6.0, h_prime=0.0125, max_outer=100,
                    rel_change_tol=1e-3)
        base.update(kw)
        return cls(**base)

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    omega_star: np.ndarray
    objective_history: list
    final_labeling: object
    iterations: int
    status: str = "converged"


def one_hot(labels, n):
    labels = np.asarray(labels).ravel()
    out = np.zeros((labels.size, n))
    out[np.arange(labels.size), labels] = 1.0
    return out


def kl_objective(V, Wstar):
    """``sum_i KL(W*_i, exp_1(V_i))``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        neg_ent = np.where(Wstar > 0, Wstar * np.log(Wstar), 0.0).sum()
    return float(neg_ent - np.sum(Wstar * V) + logsumexp(V, axis=1).sum())


def kl_gradient(V, Wstar):
    return softmax(V, axis=1) - Wstar


def solve_flow(Omega, ctx, T, h, integrator="euler", keep=False):
    """Integrate the modified LAF from V = 0; returns V_N or the list of V_j."""
    steps = int(round(T / h))
    V = np.zeros(ctx.shape)
    traj = [V]
    for _ in range(steps):
        K1 = modified_laf_field(V, Omega, ctx)
        if integrator == "euler":
            V = V + h * K1
        else:
            K2 = modified_laf_field(V + h * K1, Omega, ctx)
            V = V + 0.5 * h * (K1 + K2)
        if keep:
            traj.append(V)
    return traj if keep else V


def phi(Omega, ctx, Wstar, cfg):
    return kl_objective(solve_flow(Omega, ctx, cfg.T, cfg.h, cfg.integrator), Wstar)


def phi_and_gradient(Omega, ctx, Wstar, cfg):
    """Objective value and its exact Euclidean gradient in ``Omega``.

    Euler: ``lam_j = lam_{j+1} + h dVF^T lam_{j+1}`` and the gradient adds
    ``h dOmegaF(V_j)^T lam_{j+1}``.  The accumulation pairs the adjoint of
    step j+1 with the state V_j at which the step was evaluated (the printed
    index V_{j-1} is undefined at j = 0).

    Heun: with stages X1 = V_j and X2 = V_j + h F(V_j),
    ``lt = lam_{j+1} + h dVF^T lam_{j+1}``,
    ``lam_j = lam_{j+1} + h/2 (dVF^T lt + dVF^T lam_{j+1})`` and the gradient adds
    ``h/2 (dOmegaF(X1)^T lt + dOmegaF(X2)^T lam_{j+1})``.
    """
    h = cfg.h
    if cfg.integrator == "euler":
        Vs = solve_flow(Omega, ctx, cfg.T, h, "euler", keep=True)
        VN = Vs[-1]
        lam = kl_gradient(VN, Wstar)
        grad = np.zeros_like(Omega)
        for j in range(len(Vs) - 2, -1, -1):
            grad += h * dOmega_F_adjoint(lam, Vs[j], ctx)
            lam = lam + h * dV_F_adjoint(lam, Omega, ctx)
        return kl_objective(VN, Wstar), grad

    Vs = solve_flow(Omega, ctx, cfg.T, h, "heun", keep=True)
    VN = Vs[-1]
    lam = kl_gradient(VN, Wstar)
    grad = np.zeros_like(Omega)
    for j in range(len(Vs) - 2, -1, -1):
        X1 = Vs[j]
        X2 = X1 + h * modified_laf_field(X1, Omega, ctx)
        adj_next = dV_F_adjoint(lam, Omega, ctx)
        lt = lam + h * adj_next
        grad += 0.5 * h * (dOmega_F_adjoint(lt, X1, ctx) + dOmega_F_adjoint(lam, X2, ctx))
        lam = lam + 0.5 * h * (dV_F_adjoint(lt, Omega, ctx) + adj_next)
    return kl_objective(VN, Wstar), grad


def riemannian_step(Omega, grad, step):
    """``exp_Omega(-step * R_Omega[grad])`` row-wise on the weight manifold."""
    return simplex_exp(Omega, -step * replicator(Omega, grad))


def geometric_step(Omega, grad, step):
    """Geometric Euler step ``exp_Omega(-step * grad)`` of ``Omega' = -R_Omega[grad]``.

    Equals ``Exp_Omega(-step * R_Omega[grad])`` with the e-connection map.
    """
    return simplex_exp(Omega, -step * grad)


STEP_RULES = {"geometric": geometric_step, "replicator": riemannian_step}


def relative_change(prev, cur, h_prime):
    return abs(cur - prev) / (h_prime * abs(cur))


def label_with_weights(Omega, ctx, cfg):
    from assignflow.flow import assignment_from_tangent
    V = solve_flow(Omega, ctx, cfg.T, cfg.h, cfg.integrator)
    return round_assignment(assignment_from_tangent(V))


def train(D, Wstar, g, cfg, omega0=None, callback=None):
    """Riemannian gradient descent on the weights with backtracking.

    ``cfg.step_rule`` picks the update: ``"geometric"`` (default) is the
    geometric Euler step :func:`geometric_step`, ``"replicator"`` applies
    :func:`riemannian_step`, which is smaller by roughly the neighborhood size.

    Each outer iteration starts from ``cfg.h_prime`` and shrinks the step by
    ``cfg.backtracking.factor`` until the objective decreases.  Iteration stops
    once ``|Phi_k - Phi_{k-1}| / (h' |Phi_k|) < rel_change_tol`` or after
    ``max_outer`` iterations.
    """
    ctx = make_context(D, g, cfg.rho)
    step_fn = STEP_RULES[cfg.step_rule]
    Omega = uniform_weights(g) if omega0 is None else np.array(omega0, dtype=float)
    value, grad = phi_and_gradient(Omega, ctx, Wstar, cfg)
    history = [value]
    status = "max-iterations"
    k = 0
    for k in range(1, cfg.max_outer + 1):
        step = cfg.h_prime
        accepted = False
        for _ in range(cfg.backtracking.max_halvings + 1):
            cand = step_fn(Omega, grad, step)
            cand_value = phi(cand, ctx, Wstar, cfg)
            if cand_value < value:
                accepted = True
                break
            step *= cfg.backtracking.factor
        if not accepted:
            warnings.warn("backtracking exhausted without decrease; returning best iterate")
            status = "backtracking-exhausted"
            k -= 1
            break
        assert is_assignment(cand, tol=1e-12)
        Omega = cand
        prev, value = value, cand_value
        history.append(value)
        log.info("iter %d  phi=%.6g  step=%.3g", k, value, step)
        if callback is not None:
            callback(k, Omega, value)
        if relative_change(prev, value, cfg.h_prime) < cfg.rel_change_tol:
            status = "converged"
            break
        _, grad = phi_and_gradient(Omega, ctx, Wstar, cfg)
    labeling = label_with_weights(Omega, ctx, cfg)
    return TrainResult(omega_star=Omega, objective_history=history,
                       final_labeling=labeling, iterations=k, status=status)

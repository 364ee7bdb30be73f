"""Runge-Kutta integration with discrete adjoints.

States are numpy arrays of any shape.  Callbacks used throughout:

* ``field(x, t)``        -> dx/dt
* ``dxfT(x, t, lam)``    -> ``d_x f(x, t)^T lam``   (same shape as x)
* ``dpfT(x, t, lam)``    -> ``d_p f(x, t)^T lam``   (parameter shaped)
* ``dxf(x, t, dx)``      -> ``d_x f(x, t) dx``
* ``dpf(x, t, dp)``      -> ``d_p f(x, t) dp``

The backward recursion uses the symplectic partner of the forward tableau, so
the returned gradient is the exact derivative of the discrete forward map.
"""
from dataclasses import dataclass, field as dc_field

import numpy as np

from assignflow.manifold import simplex_exp


class ConvergenceError(RuntimeError):
    """Fixed-point iteration of an implicit stage system did not converge."""


class UnsupportedTableau(ValueError):
    """Tableau has a zero weight b_i, so no symplectic partner exists."""


@dataclass(frozen=True)
class ButcherTableau:
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    name: str = ""

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        s = len(b)
        if A.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"inconsistent tableau: A {A.shape}, b {b.shape}, c {c.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def stages(self):
        return len(self.b)

    @property
    def explicit(self):
        return bool(np.all(np.triu(self.A) == 0.0))


EULER = ButcherTableau([[0.0]], [1.0], [0.0], "euler")
HEUN = ButcherTableau([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], [0.0, 1.0], "heun")
RK4 = ButcherTableau(
    [[0, 0, 0, 0], [0.5, 0, 0, 0], [0, 0.5, 0, 0], [0, 0, 1, 0]],
    [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0, 0.5, 0.5, 1], "rk4")
IMPLICIT_MIDPOINT = ButcherTableau([[0.5]], [1.0], [0.5], "implicit-midpoint")

TABLEAUX = {t.name: t for t in (EULER, HEUN, RK4, IMPLICIT_MIDPOINT)}


def symplectic_partner(t):
    """Coefficients ``abar_ij = b_j - b_j a_ji / b_i``, ``bbar = b``, ``cbar = c``."""
    b = t.b
    if np.any(b == 0.0):
        raise UnsupportedTableau(f"tableau {t.name or t} has a zero weight b_i")
    Abar = b[None, :] - b[None, :] * t.A.T / b[:, None]
    name = f"{t.name}-partner" if t.name else ""
    return ButcherTableau(Abar, b.copy(), t.c.copy(), name)


def check_partitioned_symplectic(t1, t2, tol=1e-14):
    """True iff ``b_i abar_ij - b_i bbar_j + bbar_j a_ji = 0``, ``bbar = b``, ``cbar = c``."""
    if t1.stages != t2.stages:
        raise ValueError(f"stage mismatch: {t1.stages} vs {t2.stages}")
    b, A, bb, Ab = t1.b, t1.A, t2.b, t2.A
    cond = b[:, None] * Ab - b[:, None] * bb[None, :] + bb[None, :] * A.T
    return bool(np.all(np.abs(cond) <= tol)
                and np.all(np.abs(bb - b) <= tol)
                and np.all(np.abs(t2.c - t1.c) <= tol))


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    T: float
    h: np.ndarray

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if np.any(h <= 0):
            raise ValueError("step sizes must be positive")
        if not np.isclose(h.sum(), self.T - self.t0, rtol=1e-12, atol=1e-12):
            raise ValueError(f"steps sum to {h.sum()}, expected {self.T - self.t0}")
        object.__setattr__(self, "h", h)

    @classmethod
    def uniform(cls, T, steps, t0=0.0):
        return cls(t0, T, np.full(steps, (T - t0) / steps))

    @property
    def steps(self):
        return len(self.h)

    @property
    def times(self):
        return self.t0 + np.concatenate([[0.0], np.cumsum(self.h)])


@dataclass
class Trajectory:
    times: np.ndarray
    states: list             # x_0 .. x_N
    stages: list             # stages[n][i] = X_{n,i}
    tableau: ButcherTableau = dc_field(repr=False)


@dataclass
class AdjointTrajectory:
    lams: list               # lambda_0 .. lambda_N
    stages: list             # stages[n][i] = Lambda_{n,i}


def _stage_combination(coeffs, ks):
    out = 0.0
    for a, k in zip(coeffs, ks):
        if a != 0.0:
            out = out + a * k
    return out


def rk_integrate(field, x0, grid, tableau, max_iter=50, tol=1e-12):
    """Integrate ``x' = field(x, t)`` and keep every internal stage."""
    A, b, c, s = tableau.A, tableau.b, tableau.c, tableau.stages
    x = np.array(x0, dtype=float)
    times = grid.times
    states, stages = [x], []
    for n, h in enumerate(grid.h):
        t = times[n]
        if tableau.explicit:
            ks, Xs = [], []
            for i in range(s):
                X = x + h * _stage_combination(A[i, :i], ks)
                Xs.append(X)
                ks.append(field(X, t + c[i] * h))
        else:
            k0 = field(x, t)
            ks = [k0] * s
            for _ in range(max_iter):
                Xs = [x + h * _stage_combination(A[i], ks) for i in range(s)]
                new = [field(Xs[i], t + c[i] * h) for i in range(s)]
                delta = max(np.max(np.abs(kn - ko)) for kn, ko in zip(new, ks))
                scale = 1.0 + max(np.max(np.abs(kn)) for kn in new)
                ks = new
                if delta <= tol * scale:
                    break
            else:
                raise ConvergenceError(
                    f"stage iteration failed at step {n} (h={h}); reduce the step size")
            Xs = [x + h * _stage_combination(A[i], ks) for i in range(s)]
        x = x + h * _stage_combination(b, ks)
        states.append(x)
        stages.append(Xs)
    return Trajectory(times, states, stages, tableau)


def discrete_adjoint(traj, dxfT, grid, tableau, lam_T, max_iter=50, tol=1e-12):
    """Backward recursion for the adjoints of ``rk_integrate``.

    With ``G_ij = b_j a_ji / b_i`` the stage adjoints satisfy
    ``Lambda_i = lambda_{n+1} - h sum_j G_ij l_j`` and ``l_i = -dxfT(X_i, Lambda_i)``;
    ``lambda_n = lambda_{n+1} - h sum_i b_i l_i``.  This is the partner tableau
    rewritten to run from n+1 to n.  For explicit forward tableaux ``G`` is
    strictly upper triangular and the stages are solved in reverse order.
    """
    A, b, c, s = tableau.A, tableau.b, tableau.c, tableau.stages
    if np.any(b == 0.0):
        raise UnsupportedTableau("discrete adjoint needs all b_i != 0")
    G = b[None, :] * A.T / b[:, None]
    times = grid.times
    lam = np.array(lam_T, dtype=float)
    lams = [lam]
    stages = [None] * grid.steps
    for n in range(grid.steps - 1, -1, -1):
        h, t, Xs = grid.h[n], times[n], traj.stages[n]
        if tableau.explicit:
            ls = [None] * s
            Ls = [None] * s
            for i in range(s - 1, -1, -1):
                Ls[i] = lam - h * _stage_combination(G[i, i + 1:], ls[i + 1:])
                ls[i] = -dxfT(Xs[i], t + c[i] * h, Ls[i])
        else:
            ls = [-dxfT(Xs[i], t + c[i] * h, lam) for i in range(s)]
            for _ in range(max_iter):
                Ls = [lam - h * _stage_combination(G[i], ls) for i in range(s)]
                new = [-dxfT(Xs[i], t + c[i] * h, Ls[i]) for i in range(s)]
                delta = max(np.max(np.abs(a - o)) for a, o in zip(new, ls))
                scale = 1.0 + max(np.max(np.abs(a)) for a in new)
                ls = new
                if delta <= tol * scale:
                    break
            else:
                raise ConvergenceError(f"adjoint stage iteration failed at step {n}")
            Ls = [lam - h * _stage_combination(G[i], ls) for i in range(s)]
        lam = lam - h * _stage_combination(b, ls)
        lams.append(lam)
        stages[n] = Ls
    lams.reverse()
    return AdjointTrajectory(lams, stages)


def adjoint_gradient(traj, adj, dpfT, grid, tableau):
    """``sum_n h_n sum_i b_i d_p f(X_{n,i})^T Lambda_{n,i}``."""
    b, c = tableau.b, tableau.c
    times = grid.times
    grad = 0.0
    for n, h in enumerate(grid.h):
        for i in range(tableau.stages):
            grad = grad + h * b[i] * dpfT(traj.stages[n][i], times[n] + c[i] * h,
                                          adj.stages[n][i])
    return grad


def variational_sensitivity(field, dxf, dpf, x0, grid, tableau, directions):
    """Integrate ``delta' = d_x f delta + d_p f dp``, ``delta(0) = 0``, per direction.

    The state and all sensitivities are advanced by the same tableau, so the
    result is the derivative of the discrete end state along each direction.
    Returns an array of shape ``(len(directions),) + x0.shape``.
    """
    x0 = np.asarray(x0, dtype=float)
    P = len(directions)

    def augmented(z, t):
        x = z[0]
        out = np.empty_like(z)
        out[0] = field(x, t)
        for k, dp in enumerate(directions):
            out[k + 1] = dxf(x, t, z[k + 1]) + dpf(x, t, dp)
        return out

    z0 = np.zeros((P + 1,) + x0.shape)
    z0[0] = x0
    traj = rk_integrate(augmented, z0, grid, tableau)
    return traj.states[-1][1:]


def pseudo_hamiltonian(field, x, lam, t=0.0):
    """``H(x, lam) = <f(x, t), lam>``."""
    return float(np.vdot(field(x, t), lam))


def geometric_euler(F, W0, grid):
    """Geometric Euler for ``W' = R_W[F(W)]``: ``W <- exp_W(h F(W))``."""
    W = np.array(W0, dtype=float)
    out = [W]
    times = grid.times
    for n, h in enumerate(grid.h):
        W = simplex_exp(W, h * F(W, times[n]))
        out.append(W)
    return out

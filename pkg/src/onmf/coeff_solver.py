"""Projected subgradient solver for the coefficient vector.

Solves ``min_{h in box} d(v || W h)`` with one of three step policies:
Armijo backtracking, the constant step ``1/L`` (an MM scheme), or the
modified Polyak step for nonsmooth losses.  :func:`solve_h_batch` runs the
same iteration independently on every column of a block of samples.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import divergence as dv
from .geometry import CoeffConstraint, project_H

POLICIES = ("armijo", "constant", "polyak")

H_MAX_ITERS = 500
H_TOL = 1e-6

# dynamic tolerance adjustment of the Polyak target level
POLYAK_GROW = 1.5
POLYAK_SHRINK = 0.5
# iterations without relative improvement of the best value before stopping
POLYAK_PATIENCE = 50


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepPolicy:
    kind: str
    alpha: float = 0.01
    gamma: float = 0.1
    q: int = 10
    delta_tol: float = 0.01

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown step policy {self.kind!r}")
        if not 0.0 < self.alpha < 0.5:
            raise ValueError("armijo alpha must lie in (0, 0.5)")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("armijo gamma must lie in (0, 1)")
        if int(self.q) != self.q or self.q < 0:
            raise ValueError("armijo q must be a nonnegative integer")
        if not self.delta_tol > 0:
            raise ValueError("polyak delta_tol must be > 0")


def auto_policy(div, **params):
    """Default policy for a divergence: constant 1/L where curvature is
    uniform, Armijo for the other smooth kinds and for l2, Polyak for l1."""
    if div.kind in ("sql2", "huber", "mahalanobis"):
        kind = "constant"
    elif div.kind in ("l1", "csiszar_l1"):
        kind = "polyak"
    else:
        kind = "armijo"
    return StepPolicy(kind, **params)


class SolveReport(NamedTuple):
    h: np.ndarray
    iterations: int
    final_objective: float
    converged: bool


class BlockSolve(NamedTuple):
    H: np.ndarray
    iterations: np.ndarray
    objective: np.ndarray
    converged: np.ndarray


def armijo_rule(f, grad, h, alpha=0.01, gamma=0.1, q=10, project=None):
    """Backtracking step for a generic objective.

    Tries ``xi = gamma**i`` for ``i = 0..q`` and returns the first one with
    ``f(P(h - xi g)) <= f(h) - alpha <g, h - P(h - xi g)>``; without a
    projection the right-hand side is ``f(h) - alpha xi ||g||^2``. Returns
    ``gamma**q`` when every trial fails.
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(grad(h), dtype=float)
    f0 = f(h)
    xi = 1.0
    for i in range(q + 1):
        trial = h - xi * g
        if project is not None:
            trial = project(trial)
            decrease = alpha * float(np.dot(g, h - trial))
        else:
            decrease = alpha * xi * float(np.dot(g, g))
        if f(trial) <= f0 - decrease or i == q:
            return xi
        xi *= gamma
    return xi


def armijo_step(div, v, W, h, policy=None, c=None):
    """Armijo step for ``h -> d(v || W h)`` at ``h``; trial points are clamped
    into the coefficient box when ``c`` is given."""
    policy = policy or StepPolicy("armijo")
    v = np.asarray(v, dtype=float)
    W = np.asarray(W, dtype=float)
    project = None if c is None else (lambda x: project_H(x, c))
    with np.errstate(all="ignore"):
        return armijo_rule(
            lambda x: float(dv.value(div, v, W @ x)),
            lambda x: W.T @ dv.gradient(div, v, W @ x),
            h,
            policy.alpha,
            policy.gamma,
            policy.q,
            project,
        )


def polyak_step(f_k, f_best, g, delta_tol=0.01):
    """Modified Polyak step ``(f_k - f_best + delta_tol) / ||g||^2``."""
    gg = float(np.dot(np.ravel(g), np.ravel(g)))
    if gg == 0.0:
        raise SolverError("zero subgradient: the point is already optimal")
    return (f_k - f_best + delta_tol) / gg


def criticality_residual(div, v, W, h, c):
    """Norm of the negative gradient projected onto the tangent cone of the box
    at ``h``: zero iff ``h`` is a critical point, and equal to
    ``-min <grad, d> / ||d||`` over feasible directions ``d`` otherwise."""
    v = np.asarray(v, dtype=float)
    W = np.asarray(W, dtype=float)
    h = np.asarray(h, dtype=float)
    g = W.T @ dv.gradient(div, v, W @ h)
    d = -g
    at_lo = h <= c.eps_prime
    at_hi = h >= c.U
    d = np.where(at_lo, np.maximum(d, 0.0), d)
    d = np.where(at_hi, np.minimum(d, 0.0), d)
    return float(np.linalg.norm(d))


def _clamp(H, c):
    return np.minimum(np.maximum(H, c.eps_prime), c.U)


def _colnorm(X):
    return np.sqrt((X * X).sum(0))


def _armijo_block(div, V, W, H, f, G, policy, c):
    # backtracking on all columns at once; `todo` holds the undecided ones
    T = _clamp(H - G, c)
    ok = dv.value(div, V, W @ T) <= f - policy.alpha * (G * (H - T)).sum(0)
    if ok.all() or policy.q == 0:
        return T
    Hn = T
    todo = np.flatnonzero(~ok)
    xi = 1.0
    for i in range(1, policy.q + 1):
        xi *= policy.gamma
        Ht, Gt = H[:, todo], G[:, todo]
        T = _clamp(Ht - xi * Gt, c)
        ok = dv.value(div, V[:, todo], W @ T) <= f[todo] - policy.alpha * (Gt * (Ht - T)).sum(0)
        if i == policy.q:
            ok[:] = True
        Hn[:, todo[ok]] = T[:, ok]
        todo = todo[~ok]
        if todo.size == 0:
            break
    return Hn


def _validate(div, V, W, H0, c):
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    if W.ndim != 2 or W.shape[0] != V.shape[0]:
        raise SolverError(f"dictionary shape {W.shape} does not match data {V.shape}")
    if c.K != W.shape[1]:
        raise SolverError(f"box is {c.K}-dimensional, dictionary has {W.shape[1]} atoms")
    if H0 is None:
        H0 = np.ones((W.shape[1], V.shape[1]))
    H0 = np.asarray(H0, dtype=float)
    if H0.ndim == 1:
        H0 = H0[:, None]
    if H0.shape != (W.shape[1], V.shape[1]):
        raise SolverError(f"initial coefficients have shape {H0.shape}")
    try:
        dv.check_args(div, V, V)
    except dv.DivergenceError as err:
        raise SolverError(f"invalid sample: {err}") from None
    if not np.all(np.isfinite(W)) or np.any(W < 0):
        raise SolverError("dictionary must be finite and nonnegative")
    return V, W, project_H(H0, c)


def solve_h_batch(div, V, W, H0=None, policy=None, c=None, max_iters=H_MAX_ITERS, tol=H_TOL,
                  history=None):
    """Solve every column of ``V`` independently against the dictionary ``W``.

    Parameters
    ----------
    V : ndarray, shape (F, n)
        Samples, one per column.
    W : ndarray, shape (F, K)
    H0 : ndarray, shape (K, n), optional
        Starting coefficients; all ones by default. Projected into the box.
    policy : StepPolicy, optional
        Defaults to :func:`auto_policy`.
    c : CoeffConstraint, optional
        Coefficient box; the default box for ``K`` atoms otherwise.
    history : list, optional
        When given, receives a copy of the full coefficient block after
        every iteration (diagnostics only).

    Returns
    -------
    BlockSolve
        Coefficients, iteration counts, final objectives and convergence
        flags, one entry per column.
    """
    W = np.asarray(W, dtype=float)
    c = c or CoeffConstraint(W.shape[1])
    policy = policy or auto_policy(div)
    V, W, H = _validate(div, V, W, H0, c)
    if policy.kind == "constant" and not dv.class_of(div).in_D1:
        raise SolverError(f"constant 1/L steps need a differentiable divergence, got {div.kind}")
    if max_iters < 1:
        raise SolverError("max_iters must be >= 1")
    n = V.shape[1]
    iters = np.zeros(n, dtype=int)
    converged = np.zeros(n, dtype=bool)
    active = np.arange(n)

    with np.errstate(all="ignore"):
        if policy.kind == "constant":
            L = np.array([dv.lipschitz_bound(div, V[:, j], W, c.box) for j in range(n)])
            steps = np.where(L > 0, 1.0 / np.where(L > 0, L, 1.0), 0.0)
        if policy.kind == "polyak":
            f_best = dv.value(div, V, W @ H)
            H_best = H.copy()
            delta = np.full(n, policy.delta_tol)
            f_level = np.full(n, -np.inf)
            stall = np.zeros(n, dtype=int)

        for k in range(1, max_iters + 1):
            full = active.size == n
            Va = V if full else V[:, active]
            Ha = H if full else H[:, active]
            Y = W @ Ha
            f = dv.value(div, Va, Y)
            G = W.T @ dv.gradient(div, Va, Y)
            done = np.zeros(active.size, dtype=bool)
            if policy.kind == "constant":
                Hn = _clamp(Ha - steps[active] * G, c)
            elif policy.kind == "armijo":
                Hn = _armijo_block(div, Va, W, Ha, f, G, policy, c)
            else:
                # target level reached by the previous step: widen the tolerance,
                # otherwise shrink it towards delta_tol
                if k > 1:
                    hit = f <= f_level[active]
                    delta[active] = np.where(hit, POLYAK_GROW * delta[active],
                                             np.maximum(POLYAK_SHRINK * delta[active], policy.delta_tol))
                better = f < f_best[active] - tol * np.maximum(1.0, np.abs(f_best[active]))
                stall[active] = np.where(better, 0, stall[active] + 1)
                improved = f < f_best[active]
                f_best[active[improved]] = f[improved]
                H_best[:, active[improved]] = Ha[:, improved]
                gg = (G * G).sum(0)
                done = (gg == 0.0) | (stall[active] >= POLYAK_PATIENCE)
                f_level[active] = f_best[active] - delta[active]
                step = np.where(done, 0.0, (f - f_level[active]) / np.where(gg == 0.0, 1.0, gg))
                Hn = _clamp(Ha - step * G, c)
            if not np.isfinite(Hn).all():
                raise SolverError(f"non-finite coefficients at inner iteration {k}")
            done |= _colnorm(Hn - Ha) <= tol * np.maximum(1.0, _colnorm(Ha))
            if full:
                H = Hn
            else:
                H[:, active] = Hn
            iters[active] = k
            if history is not None:
                history.append(H.copy())
            converged[active[done]] = True
            active = active[~done]
            if active.size == 0:
                break

        obj = dv.value(div, V, W @ H)
        if policy.kind == "polyak":
            use_best = f_best < obj
            H[:, use_best] = H_best[:, use_best]
            obj = np.where(use_best, f_best, obj)
    return BlockSolve(H, iters, np.asarray(obj, dtype=float), converged)


def solve_h(div, v, W, h0=None, policy=None, c=None, max_iters=H_MAX_ITERS, tol=H_TOL):
    """Coefficient vector for a single sample; see :func:`solve_h_batch`."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise SolverError("solve_h expects a single sample vector")
    res = solve_h_batch(div, v, W, None if h0 is None else np.asarray(h0, float)[:, None],
                        policy, c, max_iters, tol)
    return SolveReport(res.H[:, 0], int(res.iterations[0]), float(res.objective[0]),
                       bool(res.converged[0]))

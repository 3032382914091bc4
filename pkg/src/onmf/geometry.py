"""Constraint sets for the dictionary and the coefficients, and their projections.

The dictionary set is row-separable: each row lies in
``{w in [0, 1]^K : sum(w) >= eps}``. Projecting a row is a box clamp unless
the clamped row falls short of ``eps``, in which case the Euclidean
projection is the projection of the row onto the scaled simplex
``{w >= 0, sum(w) = eps}`` (entries stay below 1 since ``eps < 1``).
"""

from dataclasses import dataclass

import numpy as np

EPS = 1e-8
EPS_PRIME = 1e-8
U_BOUND = 1e8

MEMBER_TOL = 1e-12


class ProjectionError(ValueError):
    pass


@dataclass(frozen=True)
class DictConstraint:
    F: int
    K: int
    eps: float = EPS

    def __post_init__(self):
        if self.F < 1 or self.K < 1:
            raise ProjectionError("F and K must be positive")
        if not 0.0 < self.eps < 1.0:
            raise ProjectionError(f"eps must lie in (0, 1), got {self.eps}")


@dataclass(frozen=True)
class CoeffConstraint:
    K: int
    eps_prime: float = EPS_PRIME
    U: float = U_BOUND

    def __post_init__(self):
        if self.K < 1:
            raise ProjectionError("K must be positive")
        if not 0.0 < self.eps_prime < self.U:
            raise ProjectionError(
                f"need 0 < eps_prime < U, got eps_prime={self.eps_prime}, U={self.U}"
            )

    @property
    def box(self):
        return (self.eps_prime, self.U)


def _finite(a, what):
    a = np.asarray(a, dtype=float)
    if np.isnan(a).any():
        raise ProjectionError(f"NaN in {what}")
    return a


def project_H(h, c):
    """Entrywise clamp to ``[eps_prime, U]``; works on vectors or ``K x n`` blocks."""
    h = _finite(h, "coefficients")
    return np.clip(h, c.eps_prime, c.U)


def _simplex_rows(M, s):
    """Project each row of ``M`` onto ``{w >= 0, sum(w) = s}`` (sorting method)."""
    n, K = M.shape
    # stable sort on the negated rows gives descending order with ties by index
    order = np.argsort(-M, axis=1, kind="stable")
    u = np.take_along_axis(M, order, axis=1)
    css = np.cumsum(u, axis=1) - s
    j = np.arange(1, K + 1)
    cond = u - css / j > 0
    # cond is True on a prefix; rho is its length (>= 1 up to rounding)
    rho = np.maximum(cond.sum(axis=1), 1)
    theta = css[np.arange(n), rho - 1] / rho
    out = np.maximum(M - theta[:, None], 0.0)
    # M - theta cancels badly when s is tiny next to the entries; restore the sum
    tot = out.sum(axis=1)
    ok = tot > 0
    out[ok] *= (s / tot[ok])[:, None]
    if not ok.all():
        # everything cancelled: the mass sits on the largest entries
        top = M[~ok] == M[~ok].max(axis=1, keepdims=True)
        out[~ok] = top * (s / top.sum(axis=1, keepdims=True))
    return out


def simplex_project(v, s):
    """Euclidean projection of ``v`` onto ``{w >= 0, sum(w) = s}``."""
    if not s > 0:
        raise ProjectionError(f"simplex sum must be > 0, got {s}")
    v = _finite(v, "vector")
    if not np.all(np.isfinite(v)):
        raise ProjectionError("non-finite entries")
    return _simplex_rows(v.reshape(1, -1), float(s))[0]


def project_C(W, c):
    """Projection onto the dictionary set: clamp to ``[0, 1]``, then repair
    any row whose clamped l1 norm is below ``eps``."""
    W = _finite(W, "dictionary")
    if W.shape != (c.F, c.K):
        raise ProjectionError(f"expected shape {(c.F, c.K)}, got {W.shape}")
    out = np.clip(W, 0.0, 1.0)
    # rows repaired earlier may sum to eps minus a rounding error; leave them
    short = out.sum(axis=1) < c.eps * (1.0 - 1e-12)
    if short.any():
        rows = W[short]
        # infinite entries only come from a blown-up step; keep the sort finite
        rows = np.clip(rows, -1.0, 1.0) if not np.all(np.isfinite(rows)) else rows
        out[short] = _simplex_rows(rows, c.eps)
    return out


def is_member(x, c, tol=MEMBER_TOL):
    """Membership in the dictionary set (``DictConstraint``) or the coefficient
    box (``CoeffConstraint``), within ``tol``."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        return False
    if isinstance(c, DictConstraint):
        if x.shape != (c.F, c.K):
            return False
        return bool(
            np.all(x >= -tol)
            and np.all(x <= 1.0 + tol)
            and np.all(x.sum(axis=1) >= c.eps - tol)
        )
    if x.shape[0] != c.K:
        return False
    return bool(np.all(x >= c.eps_prime - tol) and np.all(x <= c.U + tol))

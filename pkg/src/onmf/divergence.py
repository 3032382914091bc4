"""Divergence catalog: values, (sub)gradients, class flags and curvature bounds.

Every function reduces over the first axis, so ``x`` and ``y`` may be
vectors of length ``n`` or ``n x m`` matrices holding ``m`` column samples;
in the latter case values come back per column.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

KINDS = (
    "csiszar_l1",
    "alpha",
    "hellinger",
    "kl",
    "mahalanobis",
    "beta",
    "is",
    "sql2",
    "l1",
    "l2",
    "huber",
)

# kinds whose domain relaxes to the closed nonnegative orthant
ROBUST_KINDS = frozenset({"l1", "l2", "huber"})

_ALIASES = {
    "csiszar-l1": "csiszar_l1",
    "hellinger": "hellinger",
    "kl": "kl",
    "is": "is",
    "itakura-saito": "is",
    "sql2": "sql2",
    "squared-l2": "sql2",
    "squared_l2": "sql2",
    "l1": "l1",
    "robust-l1": "l1",
    "l2": "l2",
    "robust-l2": "l2",
}

_SYM_TOL = 1e-10


class DivergenceError(ValueError):
    """Invalid divergence parameters or arguments outside the domain."""


@dataclass(frozen=True, eq=False)
class DivergenceSpec:
    """A catalog divergence together with its parameters.

    ``param`` carries alpha for ``alpha``, beta for ``beta`` and the
    threshold for ``huber``; ``matrix`` is the PSD weight of
    ``mahalanobis``.
    """

    kind: str
    param: Optional[float] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)
    source: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DivergenceError(f"unknown divergence kind {self.kind!r}")
        if self.kind in ("alpha", "beta"):
            if self.param is None or not np.isfinite(self.param):
                raise DivergenceError(f"{self.kind} needs a finite parameter")
            if self.param in (0.0, 1.0):
                raise DivergenceError(
                    f"{self.kind} parameter must not be 0 or 1 (use kl / is)"
                )
        elif self.kind == "huber":
            if self.param is None or not self.param > 0:
                raise DivergenceError("huber threshold must be > 0")
        elif self.kind == "mahalanobis":
            if self.matrix is None:
                raise DivergenceError("mahalanobis needs a weight matrix")
            A = np.asarray(self.matrix, dtype=float)
            if A.ndim != 2 or A.shape[0] != A.shape[1]:
                raise DivergenceError("mahalanobis matrix must be square")
            if not np.all(np.isfinite(A)):
                raise DivergenceError("mahalanobis matrix has non-finite entries")
            if np.max(np.abs(A - A.T), initial=0.0) > _SYM_TOL:
                raise DivergenceError("mahalanobis matrix is not symmetric")
            A = 0.5 * (A + A.T)
            if np.linalg.eigvalsh(A).min() < -_SYM_TOL:
                raise DivergenceError("mahalanobis matrix is not PSD")
            object.__setattr__(self, "matrix", A)
        elif self.param is not None:
            raise DivergenceError(f"{self.kind} takes no parameter")

    def __eq__(self, other):
        if not isinstance(other, DivergenceSpec):
            return NotImplemented
        if (self.kind, self.param) != (other.kind, other.param):
            return False
        if self.matrix is None or other.matrix is None:
            return self.matrix is other.matrix
        return np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash((self.kind, self.param))

    @property
    def robust(self):
        return self.kind in ROBUST_KINDS

    def __str__(self):
        return format_divergence(self)


@dataclass(frozen=True)
class DivergenceClass:
    in_D1: bool  # differentiable in y with locally Lipschitz gradient
    in_D2: bool  # convex in y


def parse_divergence(text, loader=None):
    """Parse ``"beta:1.5"``, ``"huber:1.0"``, ``"kl"``, ``"mahalanobis:<path>"``.

    ``loader`` reads the Mahalanobis matrix file; it defaults to
    :func:`onmf.io.load_matrix`.
    """
    text = text.strip()
    name, sep, arg = text.partition(":")
    name = name.strip().lower()
    arg = arg.strip()
    if name in ("alpha", "beta", "huber"):
        if not arg:
            raise DivergenceError(f"{name} needs a parameter, e.g. '{name}:1.5'")
        try:
            value = float(arg)
        except ValueError:
            raise DivergenceError(f"bad {name} parameter {arg!r}") from None
        return DivergenceSpec(name, value)
    if name == "mahalanobis":
        if not arg:
            raise DivergenceError("mahalanobis needs a matrix file path")
        if loader is None:
            from .io import load_matrix as loader
        return DivergenceSpec("mahalanobis", matrix=loader(arg), source=arg)
    if sep:
        raise DivergenceError(f"{name} takes no parameter")
    if name not in _ALIASES:
        raise DivergenceError(f"unknown divergence {text!r}")
    return DivergenceSpec(_ALIASES[name])


def format_divergence(div):
    if div.kind in ("alpha", "beta", "huber"):
        return f"{div.kind}:{div.param!r}"
    if div.kind == "mahalanobis":
        return f"mahalanobis:{div.source or '<matrix>'}"
    return {"csiszar_l1": "csiszar-l1"}.get(div.kind, div.kind)


def check_args(div, x, y):
    """Validate a pair of arguments; returns them as float arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DivergenceError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim not in (1, 2) or x.shape[0] < 1:
        raise DivergenceError("arguments must be nonempty vectors or matrices")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DivergenceError("non-finite entries")
    if div.robust:
        if np.any(x < 0) or np.any(y < 0):
            raise DivergenceError(f"{div.kind} needs nonnegative entries")
    elif np.any(x <= 0) or np.any(y <= 0):
        raise DivergenceError(f"{div.kind} needs strictly positive entries")
    if div.kind == "mahalanobis" and div.matrix.shape[0] != x.shape[0]:
        raise DivergenceError(
            f"mahalanobis matrix is {div.matrix.shape[0]}-dimensional, "
            f"arguments are {x.shape[0]}-dimensional"
        )
    return x, y


def _huber(u, a):
    au = np.abs(u)
    return np.where(au <= a, 0.5 * u * u, a * (au - 0.5 * a))


def value(div, x, y):
    """Unchecked divergence value; see :func:`eval_div`."""
    k = div.kind
    if k in ("l1", "csiszar_l1"):
        return np.abs(x - y).sum(0)
    if k == "l2":
        return np.sqrt(((x - y) ** 2).sum(0))
    if k == "sql2":
        return 0.5 * ((x - y) ** 2).sum(0)
    if k == "huber":
        return _huber(x - y, div.param).sum(0)
    if k == "kl":
        return (x * np.log(x / y) - x + y).sum(0)
    if k == "is":
        r = x / y
        return (r - np.log(r) - 1.0).sum(0)
    if k == "hellinger":
        return 2.0 * ((np.sqrt(x) - np.sqrt(y)) ** 2).sum(0)
    if k == "alpha":
        a = div.param
        terms = y * ((x / y) ** a - 1.0) - a * (x - y)
        return terms.sum(0) / (a * (a - 1.0))
    if k == "beta":
        b = div.param
        terms = x**b - y**b - b * y ** (b - 1.0) * (x - y)
        return terms.sum(0) / (b * (b - 1.0))
    if k == "mahalanobis":
        d = x - y
        return 0.5 * (d * (div.matrix @ d)).sum(0)
    raise AssertionError(k)


def gradient(div, x, y):
    """Unchecked (sub)gradient of ``y -> d(x||y)``; see :func:`grad_y`."""
    k = div.kind
    if k in ("l1", "csiszar_l1"):
        return np.sign(y - x)
    if k == "l2":
        d = y - x
        nrm = np.sqrt((d * d).sum(0))
        return d / np.where(nrm > 0, nrm, 1.0)
    if k == "sql2":
        return y - x
    if k == "huber":
        return np.clip(y - x, -div.param, div.param)
    if k == "kl":
        return 1.0 - x / y
    if k == "is":
        return (y - x) / (y * y)
    if k == "hellinger":
        return 2.0 * (1.0 - np.sqrt(x / y))
    if k == "alpha":
        a = div.param
        return (1.0 - (x / y) ** a) / a
    if k == "beta":
        b = div.param
        return y ** (b - 2.0) * (y - x)
    if k == "mahalanobis":
        return div.matrix @ (y - x)
    raise AssertionError(k)


def eval_div(div, x, y):
    """Divergence ``d(x||y)`` summed over the first axis.

    Returns a float for vector arguments and a per-column array for
    matrix arguments.
    """
    x, y = check_args(div, x, y)
    out = value(div, x, y)
    return float(out) if np.ndim(out) == 0 else out


def grad_y(div, x, y):
    """Gradient of ``y -> d(x||y)``, or one subgradient for ``l1``/``l2``.

    At kinks (zero residual coordinate for l1, ``y == x`` for l2) the zero
    element of the subdifferential is returned.
    """
    x, y = check_args(div, x, y)
    return gradient(div, x, y)


def _check_factor(div, v, W, h):
    v = np.asarray(v, dtype=float)
    W = np.asarray(W, dtype=float)
    h = np.asarray(h, dtype=float)
    if W.ndim != 2 or v.ndim != 1 or h.ndim != 1:
        raise DivergenceError("expected v (F,), W (F, K), h (K,)")
    if W.shape != (v.shape[0], h.shape[0]):
        raise DivergenceError(
            f"shape mismatch: v {v.shape}, W {W.shape}, h {h.shape}"
        )
    y = W @ h
    check_args(div, v, y)
    return v, W, h, y


def grad_W(div, v, W, h):
    """Subgradient of ``W -> d(v||Wh)``: the outer product ``g h^T``."""
    v, W, h, y = _check_factor(div, v, W, h)
    return np.outer(gradient(div, v, y), h)


def grad_h(div, v, W, h):
    """Subgradient of ``h -> d(v||Wh)``: ``W^T g``."""
    v, W, h, y = _check_factor(div, v, W, h)
    return W.T @ gradient(div, v, y)


def class_of(div):
    in_D1 = div.kind not in ("l1", "csiszar_l1", "l2")
    in_D2 = not (div.kind == "is" or (div.kind == "beta" and not 1.0 <= div.param <= 2.0))
    return DivergenceClass(in_D1=in_D1, in_D2=in_D2)


def spectral_norm(W):
    return float(np.linalg.norm(np.asarray(W, dtype=float), 2)) if np.size(W) else 0.0


def _pow_max(lo, hi, p):
    # max of y**p over [lo, hi] sits at an endpoint
    return max(lo**p, hi**p)


def curvature_bound(div, vmax, ylo, yhi, vmin=None):
    """Upper bound on ``|d^2/dy^2 d(v||y)|`` per coordinate for
    ``vmin <= v <= vmax`` and ``ylo <= y <= yhi``; the Hessian in ``y`` is
    diagonal for every separable kind. ``vmin`` only matters for negative
    alpha and defaults to ``vmax``."""
    k = div.kind
    if k in ("sql2", "huber"):
        return 1.0
    if k == "mahalanobis":
        return float(max(np.linalg.eigvalsh(div.matrix).max(), 0.0))
    if ylo <= 0:
        return np.inf
    if k == "kl":
        return vmax / ylo**2
    if k == "is":
        return 1.0 / ylo**2 + 2.0 * vmax / ylo**3
    if k == "hellinger":
        return np.sqrt(vmax) / ylo**1.5
    if k == "alpha":
        a = div.param
        vmin = vmax if vmin is None else vmin
        return _pow_max(vmin, vmax, a) * _pow_max(ylo, yhi, -a - 1.0)
    if k == "beta":
        b = div.param
        return abs(b - 1.0) * _pow_max(ylo, yhi, b - 2.0) + abs(b - 2.0) * vmax * _pow_max(
            ylo, yhi, b - 3.0
        )
    raise DivergenceError(f"no curvature bound for {k}")


def lipschitz_bound(div, v, W, box):
    """Lipschitz constant of ``h -> grad_h d(v||Wh)`` over the box ``[lo, hi]^K``.

    Returns ``None`` for kinds outside the differentiable class. The bound is
    ``sigma_max(W)^2`` times a per-coordinate curvature bound evaluated over
    the range ``Wh`` can take on the box.
    """
    if not class_of(div).in_D1:
        return None
    lo, hi = box
    v = np.asarray(v, dtype=float)
    W = np.asarray(W, dtype=float)
    rows = W.sum(axis=1)
    ylo = lo * float(rows.min())
    yhi = hi * float(rows.max())
    c = curvature_bound(div, float(np.max(v)), ylo, yhi, float(np.min(v)))
    return spectral_norm(W) ** 2 * c

"""Built-in invariant suite behind ``onmf check``.

Quick versions of the properties the test-suite asserts: finite-difference
gradients, nonnegativity, family identities, and the projections against a
brute-force KKT enumeration.
"""

import itertools
from typing import NamedTuple

import numpy as np

from . import divergence as dv
from .geometry import CoeffConstraint, DictConstraint, is_member, project_C, project_H, simplex_project


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def sample_specs(rng, n=5):
    """One DivergenceSpec per catalog kind (several for the parametric families)."""
    B = rng.normal(size=(n, n))
    specs = [dv.DivergenceSpec(k) for k in ("csiszar_l1", "hellinger", "kl", "is", "sql2", "l1", "l2")]
    specs += [dv.DivergenceSpec("alpha", a) for a in (-0.5, 0.5, 2.0)]
    specs += [dv.DivergenceSpec("beta", b) for b in (-1.0, 0.5, 1.5, 3.0)]
    specs += [dv.DivergenceSpec("huber", 0.3), dv.DivergenceSpec("mahalanobis", matrix=B @ B.T)]
    return specs


def fd_gradient(f, y, rel=1e-6):
    g = np.empty_like(y)
    for i in range(y.size):
        h = rel * max(1.0, abs(y[i]))
        e = np.zeros_like(y)
        e[i] = h
        g[i] = (f(y + e) - f(y - e)) / (2 * h)
    return g


def check_gradients(rng, trials=20, n=5):
    worst = 0.0
    for div in sample_specs(rng, n):
        if not dv.class_of(div).in_D1:
            continue
        for _ in range(trials):
            x = rng.uniform(0.5, 2.0, n)
            y = rng.uniform(0.5, 2.0, n)
            g = dv.grad_y(div, x, y)
            fd = fd_gradient(lambda z: float(dv.value(div, x, z)), y)
            worst = max(worst, np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(g))))
    return CheckResult("gradient vs central differences", worst < 1e-5, f"max rel err {worst:.2e}")


def check_nonnegativity(rng, trials=1000, n=5):
    bad = []
    for div in sample_specs(rng, n):
        x = rng.uniform(0.01, 10.0, (n, trials))
        y = rng.uniform(0.01, 10.0, (n, trials))
        vals = dv.eval_div(div, x, y)
        if np.any(vals < 0) or np.any(dv.eval_div(div, x, x) != 0):
            bad.append(str(div))
    return CheckResult("nonnegativity and d(x||x) = 0", not bad, ", ".join(bad) or "all kinds")


def check_family(rng, n=5):
    x = rng.uniform(0.1, 5.0, n)
    y = rng.uniform(0.1, 5.0, n)

    def ev(kind, param=None):
        return float(dv.eval_div(dv.DivergenceSpec(kind, param), x, y))

    def rel(a, b):
        return abs(a - b) / max(abs(b), 1e-300)

    errs = {
        "alpha(1/2) = hellinger": abs(ev("alpha", 0.5) - ev("hellinger")),
        "beta(2) = sql2": abs(ev("beta", 2.0) - ev("sql2")),
        "beta(1+) -> kl": rel(ev("beta", 1 + 1e-6), ev("kl")),
        "beta(1-) -> kl": rel(ev("beta", 1 - 1e-6), ev("kl")),
        "beta(0) -> is": rel(ev("beta", 1e-6), ev("is")),
    }
    limits = {"alpha(1/2) = hellinger": 1e-12, "beta(2) = sql2": 1e-12}
    failed = [k for k, e in errs.items() if e > limits.get(k, 1e-4)]
    return CheckResult("family identities", not failed, ", ".join(failed) or "all hold")


def kkt_simplex(v, s):
    """Simplex projection by enumerating the support of the solution."""
    best, best_d = None, np.inf
    K = v.size
    for r in range(1, K + 1):
        for S in itertools.combinations(range(K), r):
            S = list(S)
            theta = (v[S].sum() - s) / r
            w = np.zeros(K)
            w[S] = v[S] - theta
            off = np.setdiff1d(np.arange(K), S)
            if np.all(w[S] >= 0) and np.all(v[off] - theta <= 1e-12):
                d = np.sum((w - v) ** 2)
                if d < best_d:
                    best, best_d = w, d
    return best


def check_projections(rng, trials=200):
    err = 0.0
    for _ in range(trials):
        K = int(rng.integers(1, 7))
        v = rng.normal(0.0, 1.0, K)
        s = float(rng.uniform(0.1, 2.0))
        err = max(err, np.max(np.abs(simplex_project(v, s) - kkt_simplex(v, s))))
    ok = err < 1e-10
    c = DictConstraint(4, 3, 1e-8)
    h = CoeffConstraint(3)
    for _ in range(trials):
        W = rng.normal(0.0, 1.0, (4, 3))
        P = project_C(W, c)
        ok &= is_member(P, c) and np.array_equal(project_C(P, c), P)
        x = rng.normal(0.0, 10.0, 3)
        ok &= np.array_equal(project_H(project_H(x, h), h), project_H(x, h))
    return CheckResult("projections (KKT oracle, idempotence)", bool(ok), f"simplex err {err:.1e}")


def run_checks(seed=0):
    rng = np.random.default_rng(seed)
    return [
        check_nonnegativity(rng),
        check_gradients(rng),
        check_family(rng),
        check_projections(rng),
    ]

import numpy as np
import pytest

from onmf import coeff_solver as cs
from onmf import divergence as dv
from onmf.divergence import DivergenceSpec
from onmf.geometry import CoeffConstraint, is_member

from oracles import grid_least_squares

SQL2 = DivergenceSpec("sql2")


def armijo_oracle(f, g, h, alpha, gamma, q):
    # first i whose unprojected trial passes the sufficient-decrease test
    for i in range(q + 1):
        xi = gamma**i
        if f(h - xi * g) <= f(h) - alpha * xi * g @ g:
            return xi
    return gamma**q


def test_armijo_quadratic_accepts_unit_step():
    f = lambda h: 0.5 * float(h @ h)
    assert cs.armijo_rule(f, lambda h: h, np.array([1.0])) == 1.0


def test_armijo_zero_gradient():
    f = lambda h: float((h[0] - 2.0) ** 2)
    assert cs.armijo_rule(f, lambda h: 2 * (h - 2.0), np.array([2.0])) == 1.0


def test_armijo_steep_quartic_needs_two_shrinks():
    f = lambda h: float(h[0] ** 4)
    grad = lambda h: 4 * h**3
    h = np.array([5.0])
    xi = cs.armijo_rule(f, grad, h, 0.01, 0.1, 10)
    assert xi == pytest.approx(0.01)
    assert xi == pytest.approx(armijo_oracle(f, grad(h), h, 0.01, 0.1, 10))


def test_armijo_returns_last_step_after_q_shrinks():
    f = lambda h: float(np.exp(-h[0]))  # ascent direction: every trial fails
    assert cs.armijo_rule(f, lambda h: np.exp(-h) * 1.0, np.array([0.0]), q=3) == pytest.approx(1e-3)


def test_armijo_step_on_divergence():
    v = np.array([1e-9])
    xi = cs.armijo_step(SQL2, v, np.array([[1.0]]), np.array([1.0]))
    assert xi == 1.0


def test_armijo_rule_matches_oracle_on_random_smooth_problems():
    rng = np.random.default_rng(0)
    for _ in range(200):
        A = rng.normal(size=(3, 3))
        Q = A @ A.T * rng.uniform(0.1, 30)
        f = lambda h: 0.5 * float(h @ Q @ h) + 0.1 * float(np.sum(h**4))
        grad = lambda h: Q @ h + 0.4 * h**3
        h = rng.normal(size=3)
        assert cs.armijo_rule(f, grad, h) == pytest.approx(armijo_oracle(f, grad(h), h, 0.01, 0.1, 10))


@pytest.mark.parametrize("fk, fbest, gg, expect", [(1.0, 1.0, 1.0, 0.01), (1.09, 1.0, 0.1, 1.0),
                                                   (2.0, 2.0, 4.0, 0.0025)])
def test_polyak_step_examples(fk, fbest, gg, expect):
    g = np.array([np.sqrt(gg)])
    assert cs.polyak_step(fk, fbest, g, 0.01) == pytest.approx(expect)


def test_polyak_zero_subgradient():
    with pytest.raises(cs.SolverError):
        cs.polyak_step(1.0, 1.0, np.zeros(2))


def test_step_policy_validation():
    for bad in (dict(alpha=0.5), dict(gamma=1.0), dict(q=-1), dict(delta_tol=0.0)):
        with pytest.raises(ValueError):
            cs.StepPolicy("armijo", **bad)
    with pytest.raises(ValueError):
        cs.StepPolicy("newton")


@pytest.mark.parametrize("kind, policy", [("sql2", "constant"), ("huber", "constant"),
                                          ("kl", "armijo"), ("is", "armijo"), ("l2", "armijo"),
                                          ("l1", "polyak"), ("beta", "armijo")])
def test_auto_policy(kind, policy):
    param = {"huber": 1.0, "beta": 1.5}.get(kind)
    assert cs.auto_policy(DivergenceSpec(kind, param)).kind == policy


def test_solve_identity_dictionary():
    r = cs.solve_h(SQL2, [0.5, 0.7], np.eye(2))
    np.testing.assert_allclose(r.h, [0.5, 0.7], atol=1e-6)
    assert r.converged


def test_solve_one_dimensional_least_squares():
    r = cs.solve_h(SQL2, [1.0, 3.0], np.array([[1.0], [1.0]]))
    np.testing.assert_allclose(r.h, [2.0], atol=1e-6)
    assert r.final_objective == pytest.approx(dv.eval_div(SQL2, [1, 3], [2, 2]))


@pytest.mark.parametrize("spec", [DivergenceSpec("kl"), DivergenceSpec("is"), SQL2,
                                  DivergenceSpec("huber", 0.5), DivergenceSpec("l1"),
                                  DivergenceSpec("l2"), DivergenceSpec("alpha", 2.0)])
def test_start_at_optimum(spec):
    W = np.array([[0.5, 0.2], [0.1, 0.9], [0.7, 0.3]])
    h0 = np.array([1.3, 0.4])
    r = cs.solve_h(spec, W @ h0, W, h0)
    np.testing.assert_array_equal(r.h, h0)
    assert r.iterations == 1 and r.converged and r.final_objective == 0.0


def test_constant_policy_needs_differentiable_divergence():
    with pytest.raises(cs.SolverError):
        cs.solve_h(DivergenceSpec("l1"), [1.0], [[1.0]], policy=cs.StepPolicy("constant"))


def test_invalid_inputs():
    with pytest.raises(cs.SolverError):
        cs.solve_h(SQL2, [1.0, 2.0], np.ones((3, 1)))
    with pytest.raises(cs.SolverError):
        cs.solve_h(DivergenceSpec("kl"), [0.0, 2.0], np.ones((2, 1)))
    with pytest.raises(cs.SolverError):
        cs.solve_h(SQL2, [1.0], [[1.0]], max_iters=0)


def test_grid_search_oracle_small_rank():
    rng = np.random.default_rng(1)
    for trial in range(12):
        K = 1 + trial % 3
        c = CoeffConstraint(K, 1e-8, 1.0)
        W = rng.uniform(0.05, 1.0, (5, K))
        v = W @ rng.uniform(-0.2, 1.2, K) + rng.uniform(0.0, 0.1, 5)
        v = np.maximum(v, 0.01)
        r = cs.solve_h(SQL2, v, W, c=c, max_iters=20000, tol=1e-12)
        ref = grid_least_squares(v, W, 0.0, 1.0)
        assert np.max(np.abs(r.h - ref)) <= 2e-3


def random_instance(rng, F=6, K=3):
    W = rng.uniform(0.05, 1.0, (F, K))
    v = W @ rng.uniform(0.2, 2.0, K) * rng.uniform(0.8, 1.25, F)
    return v, W


@pytest.mark.parametrize("spec", [DivergenceSpec("kl"), DivergenceSpec("is"),
                                  DivergenceSpec("huber", 0.3), SQL2])
def test_constant_step_is_monotone(spec):
    rng = np.random.default_rng(2)
    c = CoeffConstraint(3, 0.05, 10.0)
    V = np.column_stack([random_instance(rng)[0] for _ in range(50)])
    W = random_instance(rng)[1]
    hist = []
    cs.solve_h_batch(spec, V, W, policy=cs.StepPolicy("constant"), c=c, max_iters=100, history=hist)
    objs = [dv.value(spec, V, W @ H) for H in [np.ones((3, 50))] + hist]
    for a, b in zip(objs, objs[1:]):
        assert np.all(b <= a + 1e-10)
    assert np.all(objs[-1] < objs[0])


@pytest.mark.parametrize("spec", [DivergenceSpec("kl"), DivergenceSpec("is"), SQL2,
                                  DivergenceSpec("l2"), DivergenceSpec("l1")])
def test_every_iterate_is_feasible(spec):
    rng = np.random.default_rng(3)
    c = CoeffConstraint(3)
    v, W = random_instance(rng)
    hist = []
    cs.solve_h_batch(spec, v, W, c=c, max_iters=60, history=hist)
    assert hist and all(is_member(H[:, 0], c) for H in hist)


@pytest.mark.parametrize("spec", [DivergenceSpec("kl"), DivergenceSpec("is"),
                                  DivergenceSpec("alpha", 0.5)])
def test_armijo_objective_decreases(spec):
    rng = np.random.default_rng(4)
    v, W = random_instance(rng)
    hist = []
    cs.solve_h_batch(spec, v, W, max_iters=50, history=hist)
    objs = [float(dv.value(spec, v, W @ H[:, 0])) for H in [np.ones((3, 1))] + hist]
    assert all(b <= a for a, b in zip(objs, objs[1:]))


@pytest.mark.parametrize("spec", [DivergenceSpec("kl"), SQL2, DivergenceSpec("huber", 0.5),
                                  DivergenceSpec("hellinger"), DivergenceSpec("beta", 1.5)])
def test_first_order_criticality(spec):
    rng = np.random.default_rng(5)
    c = CoeffConstraint(3)
    for _ in range(5):
        v, W = random_instance(rng)
        r = cs.solve_h(spec, v, W, c=c, max_iters=20000, tol=1e-13)
        g = dv.grad_h(spec, v, W, r.h)
        H = rng.uniform(0, 3, (1000, 3))
        d = H - r.h
        assert np.all(d @ g >= -1e-4 * np.linalg.norm(d, axis=1))
        assert cs.criticality_residual(spec, v, W, r.h, c) <= 1e-4


def test_polyak_solves_l1_regression():
    rng = np.random.default_rng(6)
    W = rng.uniform(0.1, 1.0, (8, 2))
    h_true = np.array([0.7, 1.4])
    v = W @ h_true
    v[0] += 5.0  # one gross outlier; l1 ignores it
    r = cs.solve_h(DivergenceSpec("l1"), v, W, max_iters=3000)
    np.testing.assert_allclose(r.h, h_true, atol=5e-2)


def test_polyak_keeps_best_iterate():
    rng = np.random.default_rng(7)
    v, W = random_instance(rng)
    div = DivergenceSpec("l1")
    hist = []
    r = cs.solve_h_batch(div, v, W, max_iters=40, history=hist)
    best = min(float(dv.value(div, v, W @ H[:, 0])) for H in [np.ones((3, 1))] + hist)
    assert r.objective[0] == pytest.approx(best)


def test_batch_matches_single_solves():
    rng = np.random.default_rng(8)
    V = np.column_stack([random_instance(rng)[0] for _ in range(4)])
    W = random_instance(rng)[1]
    div = DivergenceSpec("kl")
    block = cs.solve_h_batch(div, V, W)
    for j in range(4):
        r = cs.solve_h(div, V[:, j], W)
        np.testing.assert_allclose(block.H[:, j], r.h, rtol=1e-12)
        assert block.iterations[j] == r.iterations

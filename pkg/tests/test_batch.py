import numpy as np
import pytest

from onmf import datagen as dg
from onmf.batch import dictionary_armijo, run_batch
from onmf.divergence import DivergenceSpec
from onmf.geometry import is_member
from onmf.online import ExperimentConfig, SolverSettings, StepSchedule, run_online

SQL2 = DivergenceSpec("sql2")


def test_fixed_point_at_global_optimum():
    W = np.array([[0.5, 0.2], [0.1, 0.9], [0.7, 0.3]])
    H = np.array([[1.0, 2.0, 0.4, 3.0], [0.5, 0.3, 1.2, 0.8]])
    for kind in ("sql2", "kl", "is"):
        cfg = ExperimentConfig(DivergenceSpec(kind), F=3, K=2)
        rep = run_batch(W @ H, cfg, 3, W0=W, H0=H)
        np.testing.assert_array_equal(rep.W, W)
        np.testing.assert_array_equal(rep.H, H)
        assert rep.objective_per_iter == [0.0, 0.0, 0.0]


def rank_one():
    w = np.array([0.9, 0.4, 0.7])
    h = np.array([2.0, 1.0, 3.0])
    return np.outer(w, h)


def svd_rank_one_residual(V):
    s = np.linalg.svd(V, compute_uv=False)
    return 0.5 * float(np.sum(s[1:] ** 2))


def test_rank_one_least_squares_converges():
    V = rank_one()
    cfg = ExperimentConfig(SQL2, F=3, K=1, seed=4, solver=SolverSettings(max_iters=2000, tol=1e-12))
    rep = run_batch(V, cfg, 300)
    bound = 1e-4 * float(np.sum(V**2))
    assert rep.objective_per_iter[-1] < bound
    # the best rank-1 fit is exact here, so the unconstrained SVD optimum is 0 as well
    assert svd_rank_one_residual(V) < 1e-20
    assert is_member(rep.W, cfg.dict_constraint)


def test_online_and_batch_both_reach_threshold_on_rank_one():
    V = rank_one()
    theta = 1e-3 * float(np.sum(V**2)) / V.shape[1]
    cfg = ExperimentConfig(SQL2, F=3, K=1, seed=4, T=200, schedule=StepSchedule(1.0, 1.0, 3),
                           solver=SolverSettings(max_iters=2000, tol=1e-12))
    rep = run_batch(V, cfg, 300)
    assert rep.objective_per_iter[-1] / V.shape[1] <= theta
    stream = dg.SampleStream(np.tile(V, 200))
    _, trace = run_online(cfg, stream)
    assert trace[-1].empirical_loss <= theta


def test_single_outer_iteration_single_record():
    V = rank_one()
    rep = run_batch(V, ExperimentConfig(SQL2, F=3, K=2), 1)
    assert len(rep.objective_per_iter) == 1 and len(rep.steps) == 1


@pytest.mark.parametrize("kind", ["sql2", "kl", "is"])
def test_outer_objective_monotone(kind):
    rng = np.random.default_rng(0)
    V = rng.uniform(0.1, 1, (8, 3)) @ rng.uniform(0.1, 2, (3, 60)) * rng.uniform(0.8, 1.2, (8, 60))
    cfg = ExperimentConfig(DivergenceSpec(kind), F=8, K=3, seed=1,
                           solver=SolverSettings(policy="constant" if kind == "sql2" else "armijo",
                                                 max_iters=300, tol=1e-9))
    objs = run_batch(V, cfg, 25).objective_per_iter
    for a, b in zip(objs, objs[1:]):
        assert b <= a + 1e-8 * max(1.0, abs(a))
    assert objs[-1] < objs[0]


def test_dictionary_armijo_rejects_nondescent():
    W = np.array([[0.5]])
    H = np.array([[2.0]])
    V = W @ H
    out, xi = dictionary_armijo(SQL2, V, W, H, ExperimentConfig(SQL2, F=1, K=1).dict_constraint)
    assert xi == 0.0
    np.testing.assert_array_equal(out, W)


def test_validation():
    cfg = ExperimentConfig(SQL2, F=3, K=1)
    with pytest.raises(ValueError):
        run_batch(rank_one(), cfg, 0)
    with pytest.raises(ValueError):
        run_batch(np.ones((4, 2)), cfg, 1)


def test_callback_sees_every_iteration():
    seen = []
    run_batch(rank_one(), ExperimentConfig(SQL2, F=3, K=1), 4,
              callback=lambda k, W, H, obj, xi: seen.append(k))
    assert seen == [1, 2, 3, 4]

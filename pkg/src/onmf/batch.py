"""Full-batch alternating projected-subgradient NMF, used as the baseline.

Every outer iteration re-solves all coefficient columns against the current
dictionary (warm-started from the previous ones) and then takes one projected
Armijo step on the dictionary over the mean objective.
"""

from typing import List, NamedTuple

import numpy as np

from . import divergence as dv
from .coeff_solver import SolverError, solve_h_batch
from .geometry import project_C, project_H
from .online import NumericalError, batch_gradient, init_dictionary

W_ARMIJO_ALPHA = 0.01
W_ARMIJO_GAMMA = 0.1
W_ARMIJO_Q = 10


class BatchReport(NamedTuple):
    W: np.ndarray
    H: np.ndarray
    objective_per_iter: List[float]
    steps: List[float]


def _mean_objective(div, V, W, H):
    with np.errstate(all="ignore"):
        return float(np.mean(dv.value(div, V, W @ H)))


def dictionary_armijo(div, V, W, H, c, alpha=W_ARMIJO_ALPHA, gamma=W_ARMIJO_GAMMA, q=W_ARMIJO_Q):
    """Projected Armijo step on ``W -> mean_n d(v_n || W h_n)``.

    Returns the new dictionary and the accepted step; when none of the
    ``q + 1`` trial steps gives sufficient decrease the dictionary is kept
    and the step is 0.
    """
    f0 = _mean_objective(div, V, W, H)
    with np.errstate(all="ignore"):
        G = batch_gradient(div, V, W, H)
    if not np.all(np.isfinite(G)):
        raise NumericalError("non-finite dictionary gradient")
    xi = 1.0
    for _ in range(q + 1):
        trial = project_C(W - xi * G, c)
        drop = alpha * float(np.sum(G * (W - trial)))
        f = _mean_objective(div, V, trial, H)
        if f <= f0 - drop and drop > 0:
            return trial, xi
        xi *= gamma
    return W, 0.0


def run_batch(V, config, outer_iters, W0=None, H0=None, callback=None):
    """Alternate coefficient solves and dictionary steps on the whole matrix.

    Parameters
    ----------
    V : ndarray, shape (F, N)
    config : ExperimentConfig
        Supplies the divergence, rank, constraint constants, solver settings
        and the seed for the initial dictionary.
    outer_iters : int
    W0, H0 : ndarray, optional
        Starting point; seeded uniform dictionary and all-ones
        coefficients otherwise.
    callback : callable, optional
        Called as ``callback(k, W, H, objective, step)`` after every outer
        iteration.

    Returns
    -------
    BatchReport
        Final factors, the summed objective ``sum_n d(v_n || W h_n)`` after
        every outer iteration and the accepted dictionary steps.
    """
    if outer_iters < 1:
        raise ValueError("outer_iters must be >= 1")
    V = np.asarray(V, dtype=float)
    div = config.divergence
    dc, hc = config.dict_constraint, config.coeff_constraint
    if V.shape[0] != config.F:
        raise ValueError(f"data has {V.shape[0]} rows, config expects F={config.F}")
    W = init_dictionary(config.F, config.K, config.seed, config.eps) if W0 is None else W0
    W = project_C(np.asarray(W, dtype=float), dc)
    H = None if H0 is None else project_H(np.asarray(H0, dtype=float), hc)
    policy = config.solver.step_policy(div)
    s = config.solver
    objective, steps = [], []
    for k in range(1, outer_iters + 1):
        try:
            sol = solve_h_batch(div, V, W, H, policy, hc, s.max_iters, s.tol)
        except SolverError as err:
            raise SolverError(f"coefficient solve failed at outer iteration {k}: {err}") from err
        H = sol.H
        W, xi = dictionary_armijo(div, V, W, H, dc, s.armijo_alpha, s.armijo_gamma, s.armijo_q)
        if not np.all(np.isfinite(W)):
            raise NumericalError(f"non-finite dictionary at outer iteration {k}")
        obj = _mean_objective(div, V, W, H) * V.shape[1]
        objective.append(obj)
        steps.append(xi)
        if callback is not None:
            callback(k, W, H, obj, xi)
    return BatchReport(W, H, objective, steps)

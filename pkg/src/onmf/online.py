"""Streaming dictionary learning by stochastic projected subgradient descent.

Each iteration draws ``tau`` samples, fits their coefficients against the
current dictionary, averages the per-sample dictionary subgradients and
takes a projected step with ``eta_t = a / (tau t + b)``.
"""

import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import divergence as dv
from .coeff_solver import H_MAX_ITERS, H_TOL, SolverError, StepPolicy, auto_policy, solve_h_batch
from .datagen import StreamExhausted, rng_for
from .geometry import EPS, EPS_PRIME, U_BOUND, CoeffConstraint, DictConstraint, is_member, project_C

LOSS_WINDOW = 1000
PROBE_ETA = 1e-2


class NumericalError(RuntimeError):
    """The dictionary iterate became non-finite."""


@dataclass(frozen=True)
class StepSchedule:
    a: float = 2e4
    b: float = 2e4
    tau: int = 1

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError("step schedule needs a > 0 and b > 0")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError("mini-batch size tau must be a positive integer")

    def __call__(self, t):
        return step_size(self, t)


def step_size(schedule, t):
    if t < 1:
        raise ValueError("iterations are numbered from 1")
    return schedule.a / (schedule.tau * t + schedule.b)


def canonical_tau(N):
    return max(1, int(round(1e-4 * N)))


@dataclass(frozen=True)
class SolverSettings:
    policy: Optional[str] = None  # None picks auto_policy
    max_iters: int = H_MAX_ITERS
    tol: float = H_TOL
    armijo_alpha: float = 0.01
    armijo_gamma: float = 0.1
    armijo_q: int = 10
    polyak_delta: float = 0.01
    warm_start: bool = False

    def step_policy(self, div):
        params = dict(alpha=self.armijo_alpha, gamma=self.armijo_gamma, q=self.armijo_q,
                      delta_tol=self.polyak_delta)
        if self.policy is None:
            return auto_policy(div, **params)
        return StepPolicy(self.policy, **params)


@dataclass(frozen=True)
class ExperimentConfig:
    divergence: dv.DivergenceSpec
    F: int
    K: int = 40
    eps: float = EPS
    eps_prime: float = EPS_PRIME
    U: float = U_BOUND
    schedule: StepSchedule = field(default_factory=StepSchedule)
    T: int = 1
    seed: int = 0
    eval_every: int = 1
    solver: SolverSettings = field(default_factory=SolverSettings)
    loss_window: int = LOSS_WINDOW  # 0 keeps the full history (diagnostic mode)
    probe_eta: float = PROBE_ETA
    wall_clock: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be >= 1")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.loss_window < 0:
            raise ValueError("loss_window must be >= 0")
        DictConstraint(self.F, self.K, self.eps)
        CoeffConstraint(self.K, self.eps_prime, self.U)

    @property
    def dict_constraint(self):
        return DictConstraint(self.F, self.K, self.eps)

    @property
    def coeff_constraint(self):
        return CoeffConstraint(self.K, self.eps_prime, self.U)

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class TraceRecord:
    t: int
    samples_seen: int
    empirical_loss: float
    eta: float
    stationarity_residual: Optional[float] = None
    wall_ms: int = 0


@dataclass
class LossTrace:
    records: List[TraceRecord] = field(default_factory=list)
    windowed: bool = True

    def append(self, rec):
        if self.records and rec.t <= self.records[-1].t:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def at(self, t):
        """Record of the last evaluation point at or before iteration ``t``."""
        best = None
        for rec in self.records:
            if rec.t <= t:
                best = rec
        if best is None:
            raise KeyError(t)
        return best


def init_dictionary(F, K, seed, eps=EPS):
    rng = rng_for(seed, "init")
    return project_C(rng.uniform(0.0, 1.0, size=(F, K)), DictConstraint(F, K, eps))


def batch_gradient(div, V, W, H):
    """Mean over columns of the per-sample dictionary gradients ``g_i h_i^T``."""
    G = dv.gradient(div, V, W @ H)
    return (G @ H.T) / V.shape[1]


def update_dictionary(W_prev, batch, eta, div, c=None):
    """One projected step ``P_C(W - eta * mean_i g_i h_i^T)``.

    ``batch`` is a sequence of ``(v, h)`` pairs or a pair of matrices
    ``(V, H)`` with samples in columns.
    """
    W_prev = np.asarray(W_prev, dtype=float)
    if not eta > 0:
        raise ValueError("step size must be positive")
    V, H = _as_block(batch)
    if V.shape[1] == 0:
        raise ValueError("empty batch")
    c = c or DictConstraint(*W_prev.shape)
    G = batch_gradient(div, V, W_prev, H)
    return project_C(W_prev - eta * G, c)


def _as_block(batch):
    if isinstance(batch, tuple) and len(batch) == 2 and np.ndim(batch[0]) == 2:
        return np.asarray(batch[0], float), np.asarray(batch[1], float)
    pairs = list(batch)
    if not pairs:
        return np.zeros((0, 0)), np.zeros((0, 0))
    V = np.column_stack([np.asarray(v, float) for v, _ in pairs])
    H = np.column_stack([np.asarray(h, float) for _, h in pairs])
    return V, H


def empirical_loss(div, pairs, W):
    """Mean of ``d(v_i || W h_i)`` over the stored pairs."""
    V, H = _as_block(pairs)
    if V.size == 0:
        raise ValueError("empirical loss needs at least one stored pair")
    with np.errstate(all="ignore"):
        return float(np.mean(dv.value(div, V, np.asarray(W, float) @ H)))


def full_gradient(div, V, W, settings=None, c=None):
    """Average dictionary gradient over a held dataset with coefficients
    re-solved against ``W``; returns the gradient and the coefficients."""
    settings = settings or SolverSettings()
    W = np.asarray(W, dtype=float)
    c = c or CoeffConstraint(W.shape[1])
    sol = solve_h_batch(div, V, W, None, settings.step_policy(div), c, settings.max_iters,
                        settings.tol)
    return batch_gradient(div, np.asarray(V, float), W, sol.H), sol.H


def stationarity_residual(W, V, div, probe_eta=PROBE_ETA, settings=None, eps=EPS, c=None):
    """Gradient-mapping norm ``||P_C(W - eta grad f(W)) - W|| / eta`` of the
    empirical objective over the held samples ``V``."""
    if not dv.class_of(div).in_D1:
        raise ValueError(f"stationarity residual needs a differentiable divergence, got {div.kind}")
    W = np.asarray(W, dtype=float)
    G, _ = full_gradient(div, V, W, settings, c)
    P = project_C(W - probe_eta * G, DictConstraint(*W.shape, eps))
    return float(np.linalg.norm(P - W) / probe_eta)


def unbiasedness_check(W, V, div, settings=None, c=None):
    """Distance between the mean of per-sample dictionary gradients and the
    full-data gradient, both at coefficients solved against ``W``."""
    cls = dv.class_of(div)
    if not (cls.in_D1 and cls.in_D2):
        raise ValueError(f"unbiasedness check needs a smooth convex divergence, got {div.kind}")
    V = np.asarray(V, dtype=float)
    W = np.asarray(W, dtype=float)
    full, H = full_gradient(div, V, W, settings, c)
    acc = np.zeros_like(W)
    for j in range(V.shape[1]):
        acc += dv.grad_W(div, V[:, j], W, H[:, j])
    return float(np.linalg.norm(acc / V.shape[1] - full))


class OnlineLearner:
    """Live state of a run: the dictionary, the iteration counter and the
    bounded window of ``(v, h)`` pairs used for the empirical loss."""

    def __init__(self, config, W0=None):
        self.config = config
        self.div = config.divergence
        self.dict_c = config.dict_constraint
        self.coeff_c = config.coeff_constraint
        self.policy = config.solver.step_policy(self.div)
        if W0 is None:
            W0 = init_dictionary(config.F, config.K, config.seed, config.eps)
        W0 = np.asarray(W0, dtype=float)
        if W0.shape != (config.F, config.K):
            raise ValueError(f"initial dictionary has shape {W0.shape}")
        self.W = project_C(W0, self.dict_c)
        self.t = 0
        self.samples_seen = 0
        maxlen = config.loss_window or None
        self.window_v = deque(maxlen=maxlen)
        self.window_h = deque(maxlen=maxlen)
        self._batch = None
        self._h_prev = None

    def live_sample_count(self):
        """Number of data vectors held in memory (window plus current batch)."""
        current = 0 if self._batch is None else self._batch.shape[1]
        return len(self.window_v) + current

    def step(self, V):
        """Consume one mini-batch ``V`` (``F x tau``); returns the step size used."""
        cfg = self.config
        self._batch = V
        t = self.t + 1
        H0 = None
        if cfg.solver.warm_start and self._h_prev is not None:
            H0 = np.repeat(self._h_prev[:, -1:], V.shape[1], axis=1)
        try:
            sol = solve_h_batch(self.div, V, self.W, H0, self.policy, self.coeff_c,
                                cfg.solver.max_iters, cfg.solver.tol)
        except SolverError as err:
            raise SolverError(f"coefficient solve failed at iteration {t}: {err}") from err
        eta = step_size(cfg.schedule, t)
        with np.errstate(all="ignore"):
            G = batch_gradient(self.div, V, self.W, sol.H)
        if not np.all(np.isfinite(G)):
            raise NumericalError(f"non-finite dictionary gradient at iteration {t}")
        W = project_C(self.W - eta * G, self.dict_c)
        if not np.all(np.isfinite(W)):
            raise NumericalError(f"non-finite dictionary at iteration {t}")
        self.W = W
        self.t = t
        self.samples_seen += V.shape[1]
        for j in range(V.shape[1]):
            self.window_v.append(V[:, j])
            self.window_h.append(sol.H[:, j])
        self._h_prev = sol.H
        self._batch = None
        return eta

    def loss(self):
        return empirical_loss(self.div, (np.column_stack(self.window_v),
                                         np.column_stack(self.window_h)), self.W)


def run_online(config, stream, probe=None, W0=None, callback=None):
    """Run ``config.T`` iterations of mini-batch online learning over ``stream``.

    Parameters
    ----------
    config : ExperimentConfig
    stream : SampleStream
        Must hold at least ``T * tau`` samples.
    probe : ndarray, shape (F, M), optional
        Held samples for the stationarity residual, evaluated at every trace
        point when given (differentiable divergences only).
    W0 : ndarray, optional
        Initial dictionary; seeded uniform entries projected onto the
        dictionary set otherwise.
    callback : callable, optional
        Called as ``callback(learner, record)`` after each trace record.

    Returns
    -------
    (ndarray, LossTrace)
    """
    tau = config.schedule.tau
    if len(stream) - getattr(stream, "cursor", 0) < config.T * tau:
        raise StreamExhausted(
            f"need {config.T * tau} samples for T={config.T}, tau={tau}; "
            f"stream has {stream.remaining}"
        )
    if probe is not None and not dv.class_of(config.divergence).in_D1:
        probe = None
    learner = OnlineLearner(config, W0)
    trace = LossTrace(windowed=config.loss_window > 0)
    start = time.perf_counter()
    for _ in range(config.T):
        eta = learner.step(stream.take(tau))
        if learner.t % config.eval_every == 0 or learner.t == config.T:
            res = None
            if probe is not None:
                res = stationarity_residual(learner.W, probe, learner.div, config.probe_eta,
                                            config.solver, config.eps, learner.coeff_c)
            wall = int((time.perf_counter() - start) * 1000) if config.wall_clock else 0
            rec = TraceRecord(learner.t, learner.samples_seen, learner.loss(), eta, res, wall)
            trace.append(rec)
            if callback is not None:
                callback(learner, rec)
    assert is_member(learner.W, learner.dict_c)
    return learner.W, trace

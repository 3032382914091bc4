"""Synthetic factorization data, observation noise, sample streams and the
text / image preprocessing pipelines."""

import hashlib
from dataclasses import dataclass, field

import numpy as np

NOISE_KINDS = ("gamma", "poisson", "gaussian", "outliers", "none")

ZERO_FLOOR = 1e-8
CLIP_HI = 4000.0

# Matched noise model for each divergence; kinds not listed fall back to gaussian.
MATCHED_NOISE = {
    "is": "gamma",
    "kl": "poisson",
    "sql2": "gaussian",
    "huber": "outliers",
    "l1": "outliers",
    "csiszar_l1": "outliers",
    "l2": "outliers",
}


class StreamExhausted(RuntimeError):
    pass


def sub_seed(seed, role):
    """Derive a named sub-seed: the first 8 bytes of sha256("<seed>:<role>")."""
    digest = hashlib.sha256(f"{int(seed)}:{role}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed, role):
    return np.random.default_rng(sub_seed(seed, role))


@dataclass(frozen=True)
class Noise:
    kind: str
    shape: float = 1000.0  # gamma shape kappa
    sd: float = 30.0  # gaussian standard deviation
    lam: float = 2000.0  # outlier half-width
    frac: float = 0.3  # outlier fraction per column

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not (self.shape > 0 and self.sd > 0 and self.lam > 0):
            raise ValueError("noise parameters must be positive")
        if not 0.0 < self.frac <= 1.0:
            raise ValueError("outlier fraction must lie in (0, 1]")


@dataclass(frozen=True)
class SyntheticSpec:
    F: int
    K_truth: int
    N: int
    kappa: float = 1.0  # offset of the half-normal
    sigma: float = 5.0  # scale of the half-normal
    noise: Noise = field(default_factory=lambda: Noise("gaussian"))
    clip_hi: float = CLIP_HI

    def __post_init__(self):
        if min(self.F, self.K_truth, self.N) < 1:
            raise ValueError("F, K_truth and N must be positive")
        if not (self.kappa > 0 and self.sigma > 0 and self.clip_hi > 0):
            raise ValueError("kappa, sigma and clip_hi must be positive")


def entry_moments(K_truth, kappa=1.0, sigma=5.0):
    """Mean and second moment of an entry of ``W H`` when both factors have
    i.i.d. ``|N(0, sigma^2)| + kappa`` entries."""
    m = kappa + sigma * np.sqrt(2.0 / np.pi)
    s2 = kappa**2 + 2.0 * kappa * sigma * np.sqrt(2.0 / np.pi) + sigma**2
    mean = K_truth * m * m
    second = K_truth * (s2 * s2 - m**4) + mean * mean
    return mean, second


def scaled_noise(kind, K_truth, kappa=1.0, sigma=5.0, snr_db=30.0):
    """Noise model and clip bound for a ground truth of rank ``K_truth``.

    Follows the calibration rules behind the reference parameters: outlier
    half-width ``2 E[v]``, clip bound ``4 E[v]``, Gaussian deviation for the
    target SNR, gamma shape ``10**(snr_db / 10)``. At rank 40 these round to
    ``lam = 2000``, ``clip = 4000``, ``sd = 30`` and ``shape = 1000``.
    """
    mean, second = entry_moments(K_truth, kappa, sigma)
    noise = Noise(
        kind,
        shape=10.0 ** (snr_db / 10.0),
        sd=float(np.sqrt(second) * 10.0 ** (-snr_db / 20.0)),
        lam=float(2.0 * mean),
    )
    return noise, float(4.0 * mean)


def shifted_half_normal(rng, shape, sigma, offset):
    return np.abs(rng.normal(0.0, sigma, size=shape)) + offset


def gen_ground_truth(spec, seed):
    """Ground-truth factors with i.i.d. shifted half-normal entries and their product."""
    rng = rng_for(seed, "truth")
    W = shifted_half_normal(rng, (spec.F, spec.K_truth), spec.sigma, spec.kappa)
    H = shifted_half_normal(rng, (spec.K_truth, spec.N), spec.sigma, spec.kappa)
    return W, H, W @ H


def _per_column_choice(rng, F, N, count):
    # independent subset of `count` rows for every column
    keys = rng.random((F, N))
    return np.argsort(keys, axis=0, kind="stable")[:count]


def add_noise(V0, noise, seed):
    """Contaminate a clean nonnegative matrix.

    ``gamma``: multiplicative, ``Gamma(shape, V0/shape)``; ``poisson``:
    ``Poisson(V0)``; ``gaussian``: ``V0 + N(0, sd^2)``; ``outliers``: in
    every column ``floor(frac F)`` entries get ``Uniform(-lam, lam)`` added
    and the rest are left untouched.
    """
    V0 = np.asarray(V0, dtype=float)
    if np.any(V0 <= 0):
        raise ValueError("noise models need a strictly positive clean matrix")
    rng = np.random.default_rng(seed)
    if noise.kind == "none":
        return V0.copy()
    if noise.kind == "gamma":
        return rng.gamma(noise.shape, V0 / noise.shape)
    if noise.kind == "poisson":
        return rng.poisson(V0).astype(float)
    if noise.kind == "gaussian":
        return V0 + rng.normal(0.0, noise.sd, size=V0.shape)
    F, N = V0.reshape(V0.shape[0], -1).shape
    count = int(np.floor(noise.frac * F))
    out = V0.copy()
    if count:
        rows = _per_column_choice(rng, F, N, count)
        cols = np.broadcast_to(np.arange(N), rows.shape)
        out[rows, cols] += rng.uniform(-noise.lam, noise.lam, size=rows.shape)
    return out


def snr(V0, V):
    """``20 log10(||V0|| / ||V - V0||)`` in dB; ``inf`` when there is no noise."""
    V0 = np.asarray(V0, dtype=float)
    err = np.linalg.norm(np.asarray(V, dtype=float) - V0)
    if err == 0:
        return float("inf")
    return float(20.0 * np.log10(np.linalg.norm(V0) / err))


def project_samples(V, clip_hi=CLIP_HI, floor=ZERO_FLOOR):
    return np.clip(V, floor, clip_hi)


class SampleStream:
    """Seeded, repeatable stream of sample columns.

    The source holds ``p`` replicas of a data matrix (``p`` consecutive
    column blocks); it is permuted once by the stream seed (``seed=None``
    keeps the original order) and every yielded block is clamped entrywise
    to ``[0, clip_hi]``, divided by ``scale`` and lifted to at least ``floor``.
    With the default ``scale=1`` entries lie in ``[floor, clip_hi]``.
    """

    def __init__(self, V, p=1, clip_hi=CLIP_HI, floor=ZERO_FLOOR, seed=None, replicated=False,
                 scale=1.0):
        V = np.asarray(V, dtype=float)
        if V.ndim != 2:
            raise ValueError("stream source must be a matrix")
        if int(p) != p or p < 1:
            raise ValueError("replication p must be a positive integer")
        if not 0 <= floor < clip_hi:
            raise ValueError("need 0 <= floor < clip_hi")
        if not scale > 0:
            raise ValueError("scale must be positive")
        if replicated and V.shape[1] % p:
            raise ValueError("replicated source width must be a multiple of p")
        self.V = V
        self.p = int(p)
        self.clip_hi = clip_hi
        self.floor = floor
        self.scale = float(scale)
        self.seed = seed
        self.F = V.shape[0]
        self.N = V.shape[1] // p if replicated else V.shape[1]
        self._width = V.shape[1]
        total = self.N * self.p
        if seed is None:
            self.order = np.arange(total)
        else:
            self.order = rng_for(seed, "permutation").permutation(total)
        self.cursor = 0

    def __len__(self):
        return self.N * self.p

    @property
    def remaining(self):
        return len(self) - self.cursor

    def take(self, n):
        """Next ``n`` samples as an ``F x n`` matrix."""
        if n > self.remaining:
            raise StreamExhausted(f"stream has {self.remaining} samples left, {n} requested")
        idx = self.order[self.cursor:self.cursor + n] % self._width
        self.cursor += n
        X = np.minimum(self.V[:, idx], self.clip_hi)
        if self.scale != 1.0:
            X = X / self.scale
        return np.maximum(X, self.floor)

    def __iter__(self):
        while self.remaining:
            yield self.take(1)[:, 0]

    def reset(self):
        self.cursor = 0


def make_stream(source, p=1, clip_hi=CLIP_HI, seed=None, floor=ZERO_FLOOR, scale=1.0):
    """Stream over a noisy matrix, or over fresh draws from a :class:`SyntheticSpec`.

    For a ``SyntheticSpec`` the clean matrix is generated once from ``seed``, each of
    the ``p`` replicas gets its own noise draw and its ``clip_hi``
    replaces the argument.
    """
    if isinstance(source, SyntheticSpec):
        base = 0 if seed is None else seed
        _, _, V0 = gen_ground_truth(source, base)
        blocks = [add_noise(V0, source.noise, sub_seed(base, f"noise/{r}")) for r in range(p)]
        return SampleStream(np.hstack(blocks), p, source.clip_hi, floor, seed, replicated=True,
                            scale=scale)
    return SampleStream(source, p, clip_hi, floor, seed, scale=scale)


def tfidf_transform(counts):
    """``(1 + log c) log(n / nnz(row))`` on nonzero counts, 0 elsewhere (natural log)."""
    C = np.asarray(counts, dtype=float)
    if C.ndim != 2 or np.any(C < 0):
        raise ValueError("counts must be a nonnegative matrix")
    n = C.shape[1]
    support = np.count_nonzero(C, axis=1)
    idf = np.log(n / np.maximum(support, 1))
    out = np.zeros_like(C)
    nz = C > 0
    out[nz] = (1.0 + np.log(C[nz])) * np.broadcast_to(idf[:, None], C.shape)[nz]
    return out


def select_top_rows(M, r):
    """The ``r`` rows with largest l1 norm, in decreasing norm order (ties by index).

    Returns the submatrix and the selected row indices.
    """
    M = np.asarray(M, dtype=float)
    if r > M.shape[0] or r < 0:
        raise ValueError(f"cannot select {r} rows from {M.shape[0]}")
    norms = np.abs(M).sum(axis=1)
    idx = np.argsort(-norms, kind="stable")[:r]
    return M[idx], idx


def salt_pepper(images, frac=0.3, seed=None):
    """Add ``Uniform(0, 255)`` to ``floor(frac F)`` random pixels of every
    column, then clamp to ``[0, 255]``."""
    X = np.asarray(images, dtype=float)
    if not 0.0 < frac <= 1.0:
        raise ValueError("frac must lie in (0, 1]")
    if X.ndim != 2 or np.any(X < 0) or np.any(X > 255):
        raise ValueError("images must be an F x N matrix with entries in [0, 255]")
    rng = np.random.default_rng(seed)
    F, N = X.shape
    count = int(np.floor(frac * F))
    out = X.copy()
    rows = _per_column_choice(rng, F, N, count)
    cols = np.broadcast_to(np.arange(N), rows.shape)
    out[rows, cols] = np.clip(out[rows, cols] + rng.uniform(0.0, 255.0, size=rows.shape), 0.0, 255.0)
    return out

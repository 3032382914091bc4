"""Flat ``key = value`` run configuration.

A configuration file holds one ``key = value`` pair per line; blank lines
and lines starting with ``#`` are ignored, values may be quoted. Absent keys
take the canonical defaults below. Several keys accept ``auto``, which is
resolved against the data when a run starts (see :func:`resolve`).
"""

import math
import shlex
from dataclasses import dataclass

from . import divergence as dv
from .coeff_solver import POLICIES
from .datagen import NOISE_KINDS

AUTO = "auto"


class ConfigError(ValueError):
    pass


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _int(text):
    f = float(text)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(f)


def _divergence(text):
    name = str(text).partition(":")[0].strip().lower()
    if name != "mahalanobis":
        # normalise spelling; the Mahalanobis matrix is loaded at resolve time
        return dv.format_divergence(dv.parse_divergence(text))
    if not str(text).partition(":")[2].strip():
        raise ValueError("mahalanobis needs a matrix file path")
    return str(text).strip()


def _policy(text):
    t = str(text).strip().lower()
    if t != AUTO and t not in POLICIES:
        raise ValueError(f"h_policy must be auto or one of {', '.join(POLICIES)}")
    return t


def _noise(text):
    t = str(text).strip().lower()
    if t != "matched" and t not in NOISE_KINDS:
        raise ValueError(f"noise must be matched or one of {', '.join(NOISE_KINDS)}")
    return t


@dataclass(frozen=True)
class Key:
    parse: object
    default: object
    auto: bool = False  # accepts the literal "auto"
    doc: str = ""


SCHEMA = {
    "divergence": Key(_divergence, None, doc="e.g. kl, is, sql2, huber:0.01, beta:1.5"),
    # problem and constraint sets
    "K": Key(_int, 40, doc="latent dimension"),
    "eps": Key(float, 1e-8, doc="minimum row l1 norm of the dictionary"),
    "eps_prime": Key(float, 1e-8, doc="lower bound of the coefficients"),
    "u_bound": Key(float, 1e8, doc="upper bound of the coefficients"),
    # step schedule eta_t = a / (tau t + b)
    "a": Key(float, 2e4),
    "b": Key(float, 2e4),
    "tau": Key(_int, AUTO, True, "mini-batch size; auto = max(1, round(1e-4 N p))"),
    "T": Key(_int, AUTO, True, "iterations; auto = one pass over the stream"),
    "seed": Key(_int, 0),
    "eval_every": Key(_int, AUTO, True, "trace period; auto = max(1, T // 100)"),
    "loss_window": Key(_int, 1000, doc="pairs kept for the empirical loss; 0 = all"),
    "probe_size": Key(_int, 0, doc="held samples for the stationarity residual; 0 = off"),
    "probe_eta": Key(float, 1e-2),
    "wall_clock": Key(_bool, False, doc="record elapsed milliseconds in the trace"),
    # coefficient solver
    "h_policy": Key(_policy, AUTO, doc="auto, armijo, constant or polyak"),
    "h_max_iters": Key(_int, 500),
    "h_tol": Key(float, 1e-6),
    "armijo_alpha": Key(float, 0.01),
    "armijo_gamma": Key(float, 0.1),
    "armijo_q": Key(_int, 10),
    "polyak_delta": Key(float, 0.01),
    "warm_start": Key(_bool, False),
    # batch baseline
    "outer_iters": Key(_int, 200),
    # data
    "data": Key(str, "", doc="matrix file with samples in columns; empty = synthetic"),
    "p": Key(_int, 1, doc="replication factor"),
    "clip_hi": Key(float, AUTO, True, "upper end of the sample box; auto = 4 E[v] or max(V)"),
    "floor": Key(float, 1e-8, doc="zero entries are lifted to this value"),
    "data_scale": Key(float, AUTO, True, "samples are divided by this; auto = clip_hi"),
    "synth_F": Key(_int, 100),
    "synth_K": Key(_int, 40, doc="ground-truth rank"),
    "synth_N": Key(_int, 5000),
    "kappa": Key(float, 1.0, doc="offset of the half-normal factors"),
    "sigma": Key(float, 5.0, doc="scale of the half-normal factors"),
    "noise": Key(_noise, "matched", doc="matched, gamma, poisson, gaussian, outliers, none"),
    "snr_db": Key(float, 30.0, doc="target SNR for the auto noise parameters"),
    "noise_shape": Key(float, AUTO, True, "gamma shape"),
    "noise_sd": Key(float, AUTO, True, "gaussian standard deviation"),
    "noise_lam": Key(float, AUTO, True, "outlier half-width"),
    "outlier_frac": Key(float, 0.3),
}


class Config:
    """Validated flat configuration; behaves like a read-only mapping."""

    def __init__(self, values=None):
        self._v = {k: spec.default for k, spec in SCHEMA.items()}
        for k, v in (values or {}).items():
            self._v[k] = _coerce(k, v)
        _check(self._v)

    def __getitem__(self, key):
        return self._v[key]

    def __iter__(self):
        return iter(SCHEMA)

    def items(self):
        return [(k, self._v[k]) for k in SCHEMA]

    def __eq__(self, other):
        return isinstance(other, Config) and self._v == other._v

    def __repr__(self):
        return f"Config({self._v!r})"

    def with_(self, **changes):
        out = dict(self._v)
        out.update(changes)
        return Config(out)

    def is_auto(self, key):
        return self._v[key] == AUTO


def _coerce(key, value):
    if key not in SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    spec = SCHEMA[key]
    if isinstance(value, str):
        value = value.strip()
        if spec.auto and value.lower() == AUTO:
            return AUTO
    elif value is None or (spec.auto and value == AUTO):
        return value
    try:
        return spec.parse(value)
    except (ValueError, TypeError, dv.DivergenceError) as err:
        raise ConfigError(f"bad value for {key}: {err}") from None


def _check(v):
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    def num(key):
        return v[key] != AUTO

    need(0 < v["eps"] < 1, "eps must lie in (0, 1)")
    need(0 < v["eps_prime"] < v["u_bound"], "need 0 < eps_prime < u_bound")
    need(math.isfinite(v["u_bound"]), "u_bound must be finite")
    need(v["a"] > 0 and v["b"] > 0, "a and b must be positive")
    need(v["K"] >= 1, "K must be >= 1")
    for key in ("tau", "T", "eval_every"):
        need(not num(key) or v[key] >= 1, f"{key} must be >= 1")
    need(v["loss_window"] >= 0 and v["probe_size"] >= 0, "loss_window and probe_size must be >= 0")
    need(v["probe_eta"] > 0, "probe_eta must be positive")
    need(v["h_max_iters"] >= 1 and v["h_tol"] >= 0, "need h_max_iters >= 1 and h_tol >= 0")
    need(0 < v["armijo_alpha"] < 0.5, "armijo_alpha must lie in (0, 0.5)")
    need(0 < v["armijo_gamma"] < 1, "armijo_gamma must lie in (0, 1)")
    need(v["armijo_q"] >= 0, "armijo_q must be >= 0")
    need(v["polyak_delta"] > 0, "polyak_delta must be positive")
    need(v["outer_iters"] >= 1 and v["p"] >= 1, "outer_iters and p must be >= 1")
    need(0 <= v["floor"], "floor must be >= 0")
    for key in ("clip_hi", "data_scale", "noise_shape", "noise_sd", "noise_lam"):
        need(not num(key) or v[key] > 0, f"{key} must be positive")
    need(not num("clip_hi") or v["floor"] < v["clip_hi"], "floor must be below clip_hi")
    need(min(v["synth_F"], v["synth_K"], v["synth_N"]) >= 1, "synthetic sizes must be >= 1")
    need(v["kappa"] > 0 and v["sigma"] > 0, "kappa and sigma must be positive")
    need(0 < v["outlier_frac"] <= 1, "outlier_frac must lie in (0, 1]")


def parse_text(text):
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        key, sep, raw = s.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        raw = raw.strip()
        if raw[:1] in ("'", '"'):
            try:
                parts = shlex.split(raw)
            except ValueError as err:
                raise ConfigError(f"line {lineno}: {err}") from None
            if len(parts) != 1:
                raise ConfigError(f"line {lineno}: trailing text after quoted value")
            raw = parts[0]
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = raw
    return Config(values)


def parse_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from None
    return parse_text(text)


def _render_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str) and (not v or any(ch.isspace() or ch in "#'\"" for ch in v)):
        return shlex.quote(v) if v else '""'
    return str(v)


def render(config, header=()):
    """Config file text; ``parse_text(render(c)) == c``. ``header`` lines are
    written first as comments."""
    lines = [f"# {h}" for h in header]
    for k, v in config.items():
        if v is None:
            continue
        lines.append(f"{k} = {_render_value(v)}")
    return "\n".join(lines) + "\n"


def apply_overrides(config, pairs):
    """Apply ``(key, value)`` string pairs, e.g. from ``--key value`` flags."""
    changes = {}
    for key, value in pairs:
        key = key.replace("-", "_")
        if key not in SCHEMA:
            # keys are case sensitive in files; accept --t for T and --k for K
            match = [k for k in SCHEMA if k.lower() == key.lower()]
            if len(match) != 1:
                raise ConfigError(f"unknown config key {key!r}")
            key = match[0]
        changes[key] = _coerce(key, value)
    return config.with_(**changes)


def sweep_grid(specs):
    """Cross product of ``key=v1,v2,...`` sweep specs as lists of ``(key, value)``."""
    axes = []
    for spec in specs:
        key, sep, vals = spec.partition("=")
        if not sep or not key.strip() or not vals.strip():
            raise ConfigError(f"bad sweep {spec!r}, expected key=v1,v2,...")
        axes.append([(key.strip(), v.strip()) for v in vals.split(",") if v.strip()])
    grid = [[]]
    for axis in axes:
        grid = [g + [kv] for g in grid for kv in axis]
    return grid

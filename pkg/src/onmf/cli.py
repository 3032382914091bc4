"""Command-line runner.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (non-finite dictionary or failed coefficient solve).
"""

import argparse
import datetime
import hashlib
import os
import sys

import numpy as np

from . import __version__
from . import datagen as dg
from . import divergence as dv
from .batch import run_batch
from .checks import run_checks
from .coeff_solver import SolverError
from .config import ConfigError, Config, apply_overrides, parse_config, render, sweep_grid
from .io import DataError, ensure_dir, load_matrix, save_matrix, write_trace
from .online import (ExperimentConfig, LossTrace, NumericalError, SolverSettings, StepSchedule,
                     TraceRecord, canonical_tau, run_online)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
GENERATOR = "numpy PCG64, sub-seed = first 8 bytes of sha256('<seed>:<role>')"


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Prepared:
    """A configuration with every ``auto`` resolved, plus its data."""

    def __init__(self, config, div, stream, digests):
        self.config = config
        self.div = div
        self.stream = stream
        self.digests = digests

    def experiment(self):
        c = self.config
        solver = SolverSettings(
            policy=None if c["h_policy"] == "auto" else c["h_policy"],
            max_iters=c["h_max_iters"], tol=c["h_tol"], armijo_alpha=c["armijo_alpha"],
            armijo_gamma=c["armijo_gamma"], armijo_q=c["armijo_q"],
            polyak_delta=c["polyak_delta"], warm_start=c["warm_start"])
        try:
            return ExperimentConfig(
                self.div, F=self.stream.F, K=c["K"], eps=c["eps"], eps_prime=c["eps_prime"],
                U=c["u_bound"], schedule=StepSchedule(c["a"], c["b"], c["tau"]), T=c["T"],
                seed=c["seed"], eval_every=c["eval_every"], solver=solver,
                loss_window=c["loss_window"], probe_eta=c["probe_eta"],
                wall_clock=c["wall_clock"])
        except ValueError as err:
            raise ConfigError(str(err)) from None


def load_divergence(config):
    text = config["divergence"]
    if not text:
        raise ConfigError("missing required config key 'divergence'")
    try:
        return dv.parse_divergence(text)
    except DataError:
        raise
    except dv.DivergenceError as err:
        raise ConfigError(f"bad value for divergence: {err}") from None


def synthetic_spec(config, div, clip):
    kind = config["noise"]
    if kind == "matched":
        kind = dg.MATCHED_NOISE.get(div.kind, "gaussian")
    auto, _ = dg.scaled_noise(kind, config["synth_K"], config["kappa"], config["sigma"],
                              config["snr_db"])

    def pick(key, fallback):
        return fallback if config.is_auto(key) else config[key]

    noise = dg.Noise(kind, shape=pick("noise_shape", auto.shape), sd=pick("noise_sd", auto.sd),
                     lam=pick("noise_lam", auto.lam), frac=config["outlier_frac"])
    return dg.SyntheticSpec(config["synth_F"], config["synth_K"], config["synth_N"],
                            config["kappa"], config["sigma"], noise, clip)


def auto_clip(config):
    # the sample box is [0, 4 E[v]] for synthetic data (4000 at the canonical rank 40)
    mean, _ = dg.entry_moments(config["synth_K"], config["kappa"], config["sigma"])
    return float(4.0 * mean)


def prepare(config):
    """Load the data, build the stream and resolve every ``auto`` key."""
    div = load_divergence(config)
    digests = {}
    if div.kind == "mahalanobis" and div.source:
        digests["mahalanobis"] = sha256_file(div.source)
    changes = {}
    if config["data"]:
        V = load_matrix(config["data"])
        digests["data"] = sha256_file(config["data"])
        if np.any(V < 0):
            raise DataError("data matrix has negative entries")
        clip = float(V.max()) if config.is_auto("clip_hi") else config["clip_hi"]
        if not clip > config["floor"]:
            raise DataError("data matrix has no entry above the floor")
        changes["clip_hi"] = clip
        scale = clip if config.is_auto("data_scale") else config["data_scale"]
        stream = dg.SampleStream(V, config["p"], clip, config["floor"], config["seed"], scale=scale)
    else:
        clip = auto_clip(config) if config.is_auto("clip_hi") else config["clip_hi"]
        changes["clip_hi"] = clip
        scale = clip if config.is_auto("data_scale") else config["data_scale"]
        spec = synthetic_spec(config, div, clip)
        for key, val in (("noise_shape", spec.noise.shape), ("noise_sd", spec.noise.sd),
                         ("noise_lam", spec.noise.lam)):
            changes[key] = float(val)
        stream = dg.make_stream(spec, config["p"], seed=config["seed"], floor=config["floor"],
                                scale=scale)
    changes["data_scale"] = float(scale)
    total = len(stream)
    tau = canonical_tau(total) if config.is_auto("tau") else config["tau"]
    T = total // tau if config.is_auto("T") else config["T"]
    if T < 1:
        raise DataError(f"{total} samples cannot fill one mini-batch of {tau}")
    changes.update(tau=tau, T=T)
    changes["eval_every"] = max(1, T // 100) if config.is_auto("eval_every") else config["eval_every"]
    return Prepared(config.with_(**changes), div, stream, digests)


def write_manifest(path, prepared, command):
    header = [
        "onmf run manifest",
        f"command: {command}",
        f"version: {__version__}",
        f"generator: {GENERATOR}",
        f"seed: {prepared.config['seed']}",
        f"started: {datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')}",
    ]
    header += [f"sha256 {name}: {digest}" for name, digest in sorted(prepared.digests.items())]
    with open(path, "w") as fh:
        fh.write(render(prepared.config, header))


def probe_samples(prepared):
    n = prepared.config["probe_size"]
    if n == 0 or not dv.class_of(prepared.div).in_D1:
        return None
    s = prepared.stream
    probe = dg.SampleStream(s.V, s.p, s.clip_hi, s.floor, prepared.config["seed"],
                            replicated=s._width != s.N, scale=s.scale)
    return probe.take(min(n, len(probe)))


def run_experiment(command, config, out):
    prepared = prepare(config)
    ec = prepared.experiment()
    ensure_dir(out)
    write_manifest(os.path.join(out, "manifest.txt"), prepared, command)
    if command == "online":
        W, trace = run_online(ec, prepared.stream, probe_samples(prepared))
    else:
        V = prepared.stream.take(len(prepared.stream))
        N = V.shape[1]
        trace = LossTrace(windowed=False)

        def record(k, W, H, obj, xi):
            trace.append(TraceRecord(k, k * N, obj / N, xi))

        W = run_batch(V, ec, config["outer_iters"], callback=record).W
    write_trace(os.path.join(out, "trace.csv"), trace.records)
    save_matrix(os.path.join(out, "W_final.txt"), W)
    last = trace.records[-1]
    print(f"{command}: t={last.t} empirical_loss={last.empirical_loss:.6g} -> {out}")


def _split_overrides(extra):
    pairs, i = [], 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise ConfigError(f"unexpected argument {tok!r}")
        key, eq, val = tok[2:].partition("=")
        if not eq:
            if i + 1 >= len(extra):
                raise ConfigError(f"flag {tok} needs a value")
            val = extra[i + 1]
            i += 1
        pairs.append((key, val))
        i += 1
    return pairs


def _build_parser():
    p = argparse.ArgumentParser(prog="onmf", description="Online NMF with general divergences.")
    p.add_argument("--version", action="version", version=f"onmf {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("online", "batch"):
        sp = sub.add_parser(name, help=f"{name} factorization run; any config key can be "
                                       "overridden with --key value")
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", help="master seed")
        sp.add_argument("--out", help="output directory (default $ONMF_OUT_DIR or ./onmf_out)")
        sp.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2",
                        help="run the cross product of the listed values")
    sp = sub.add_parser("gen-synth", help="write a synthetic data set")
    sp.add_argument("--config")
    sp.add_argument("--seed")
    sp.add_argument("--out")
    sp = sub.add_parser("tfidf", help="TF-IDF transform of a term-document count matrix")
    sp.add_argument("counts")
    sp.add_argument("output")
    sp.add_argument("--rows", type=int, default=1000, help="keep the rows with largest l1 norm")
    sp.add_argument("--scale-l", type=float, default=1.0, help="entrywise scaling factor l")
    sp.add_argument("--poisson", action="store_true", help="add Poisson noise after scaling")
    sp.add_argument("--seed", type=int, default=0)
    sp = sub.add_parser("corrupt-images", help="salt-and-pepper corruption of image columns")
    sp.add_argument("images")
    sp.add_argument("output")
    sp.add_argument("--frac", type=float, default=0.3)
    sp.add_argument("--seed", type=int, default=0)
    sp = sub.add_parser("check", help="run the built-in invariant checks")
    sp.add_argument("--seed", type=int, default=0)
    return p


def _load_config(args, extra):
    config = parse_config(args.config) if args.config else Config()
    pairs = _split_overrides(extra)
    if args.seed is not None:
        pairs.append(("seed", args.seed))
    return apply_overrides(config, pairs)


def _out_dir(args):
    return args.out or os.environ.get("ONMF_OUT_DIR") or "onmf_out"


def cmd_run(args, extra):
    config = _load_config(args, extra)
    out = _out_dir(args)
    grid = sweep_grid(args.sweep)
    for point in grid:
        cfg = apply_overrides(config, point)
        sub = out if not point else os.path.join(out, "_".join(f"{k}={v}" for k, v in point))
        run_experiment(args.command, cfg, sub)


def cmd_gen_synth(args, extra):
    config = _load_config(args, extra)
    if not config["divergence"] and config["noise"] == "matched":
        config = config.with_(noise="gaussian")
    div = load_divergence(config) if config["divergence"] else dv.DivergenceSpec("sql2")
    clip = auto_clip(config) if config.is_auto("clip_hi") else config["clip_hi"]
    spec = synthetic_spec(config, div, clip)
    seed = config["seed"]
    W0, H0, V0 = dg.gen_ground_truth(spec, seed)
    V = dg.add_noise(V0, spec.noise, dg.sub_seed(seed, "noise/0"))
    out = ensure_dir(_out_dir(args))
    save_matrix(os.path.join(out, "W_true.txt"), W0)
    save_matrix(os.path.join(out, "H_true.txt"), H0)
    save_matrix(os.path.join(out, "V_clean.txt"), V0)
    save_matrix(os.path.join(out, "V.txt"), dg.project_samples(V, clip, config["floor"]))
    print(f"gen-synth: {spec.noise.kind} noise, SNR {dg.snr(V0, V):.2f} dB -> {out}")


def cmd_tfidf(args):
    counts = load_matrix(args.counts)
    if np.any(counts < 0):
        raise DataError("counts must be nonnegative")
    M, _ = dg.select_top_rows(dg.tfidf_transform(counts), min(args.rows, counts.shape[0]))
    M = M * args.scale_l
    if args.poisson:
        M = np.random.default_rng(dg.sub_seed(args.seed, "tfidf")).poisson(M).astype(float)
    save_matrix(args.output, M)
    print(f"tfidf: {M.shape[0]} x {M.shape[1]} -> {args.output}")


def cmd_corrupt(args):
    X = load_matrix(args.images)
    try:
        out = dg.salt_pepper(X, args.frac, dg.sub_seed(args.seed, "salt_pepper"))
    except ValueError as err:
        raise DataError(str(err)) from None
    save_matrix(args.output, out)
    print(f"corrupt-images: {X.shape[1]} images -> {args.output}")


def cmd_check(args):
    results = run_checks(args.seed)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else 1


def main(argv=None):
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        if args.command in ("online", "batch"):
            cmd_run(args, extra)
        elif args.command == "gen-synth":
            cmd_gen_synth(args, extra)
        elif extra:
            parser.error(f"unrecognized arguments: {' '.join(extra)}")
        elif args.command == "tfidf":
            cmd_tfidf(args)
        elif args.command == "corrupt-images":
            cmd_corrupt(args)
        else:
            return cmd_check(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, dg.StreamExhausted, dv.DivergenceError) as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, SolverError, FloatingPointError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

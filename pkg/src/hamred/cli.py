"""``hamred offline|run|experiment|check``."""

import argparse
import logging
import sys
import time

import numpy as np

from .baselines import STANDARD_METHODS
from .config import ALL_METHODS, ConfigError, load_config
from .errors import HamredError
from .experiment import RunSpec, build_offline, experiment, open_dictionary, single_run


def _parser():
    p = argparse.ArgumentParser(prog="hamred", description="Dictionary-based symplectic model reduction.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    off = sub.add_parser("offline", help="build the snapshot dictionary of a config")
    off.add_argument("--config", required=True)
    off.add_argument("--dictionary", help="output file (default: from the config)")
    off.add_argument("--force", action="store_true", help="overwrite an existing dictionary")

    run = sub.add_parser("run", help="one full or reduced simulation")
    run.add_argument("--config", required=True)
    run.add_argument("--dictionary")
    run.add_argument("--out", help="output directory (default: from the config)")
    run.add_argument("--method", required=True, choices=ALL_METHODS)
    run.add_argument("--mu", required=True, help="parameter; components separated by ';'")
    run.add_argument("--m_s", type=int, help="window size (dictionary methods)")
    run.add_argument("--n_s", type=int, help="selected snapshots, or basis size for pod/csvd methods")
    run.add_argument("--force", action="store_true")

    exp = sub.add_parser("experiment", help="the parameter sweep of a config")
    exp.add_argument("--config", required=True)
    exp.add_argument("--dictionary")
    exp.add_argument("--out")
    exp.add_argument("--seed", type=int, help="override the seed of random test parameters")
    exp.add_argument("--force", action="store_true")

    chk = sub.add_parser("check", help="run the invariant suites")
    chk.add_argument("--scale", choices=("tiny", "default"), default="default")
    chk.add_argument("--dictionary", help="also verify the stored products of this dictionary file")
    return p


def _mu(text):
    try:
        return tuple(float(v) for v in text.split(";"))
    except ValueError:
        raise ConfigError(f"cannot read --mu {text!r}") from None


def _offline(args):
    cfg = load_config(args.config)
    tic = time.perf_counter()
    d, path = build_offline(cfg, args.dictionary, args.force)
    s = d.state
    print(f"wrote {path}")
    print(f"  2N = {2 * s.half_dim}, N_X = {s.size}, N_P = {0 if d.nonlinear is None else d.nonlinear.n_rows}")
    print(f"  offline time {time.perf_counter() - tic:.2f} s")
    return 0


def _run(args):
    cfg = load_config(args.config)
    mu = _mu(args.mu)
    model = cfg.build_model()
    if not model.domain.contains(np.array(mu)):
        raise ConfigError(f"--mu {args.mu} lies outside the parameter domain "
                          f"[{model.domain.lower.tolist()}, {model.domain.upper.tolist()}]")
    if args.method in STANDARD_METHODS and args.n_s is None:
        raise ConfigError(f"--n_s (basis size) is required for {args.method}")
    if args.method.startswith("db-") and (args.m_s is None or args.n_s is None):
        raise ConfigError(f"--m_s and --n_s are required for {args.method}")
    spec = RunSpec(args.method, mu, args.m_s if args.method.startswith("db-") else None,
                   None if args.method == "fom" else args.n_s)
    d = open_dictionary(cfg, args.dictionary)
    row, _ = single_run(cfg, spec, d, args.out, args.force)
    print(",".join(f"{k}={v}" for k, v in (("method", row["method"]), ("status", row["status"]),
                                             ("n_mean", row["n_mean"]), ("e_rel", row["e_rel"]))))
    return 0 if row["status"] == "ok" else 1


def _experiment(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    d = open_dictionary(cfg, args.dictionary)
    rows = experiment(cfg, d, args.out, args.force)
    failed = sum(r["status"] != "ok" for r in rows)
    print(f"{len(rows)} runs written to {args.out or cfg.out_dir} ({failed} failed)")
    return 0


def _check(args):
    from .checks import run_checks

    width = 24

    def report(res):
        print(f"{res.name:<{width}} {'PASS' if res.passed else 'FAIL'}  {res.seconds:7.2f} s  {res.detail}",
              flush=True)

    print(f"{'check':<{width}} result  time       detail")
    results = run_checks(args.scale, args.dictionary, report)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed" +
          (f"; failing: {', '.join(failed)}" if failed else ""))
    return 1 if failed else 0


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"offline": _offline, "run": _run, "experiment": _experiment, "check": _check}[args.command]
    try:
        return handler(args)
    except HamredError as exc:
        print(f"hamred {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""``pestctl`` command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 optimal-control sweep not converged (outputs are still written).
"""

import argparse
import os
import sys
import warnings

from .config import load_config
from .errors import ConfigError, NotConverged, PestctlError
from . import scenarios

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_NOT_CONVERGED = 4

COMMANDS = ("simulate", "equilibria", "stability", "hopf-scan", "bifurcation", "optimal-control")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pestctl", description="Crop-pest-awareness model: simulation, equilibria, "
                                    "stability, Hopf scans and optimal control.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="key = value scenario file")
    parser.add_argument("--out", default=None, help="output directory (default: output_dir or .)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config entry (repeatable)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $PESTCTL_THREADS or 1)")
    return parser


def resolve_threads(arg):
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("PESTCTL_THREADS", "").strip()
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"PESTCTL_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("thread count must be at least 1")
    return n


def run(command, cfg, out, threads):
    if command == "simulate":
        return scenarios.run_simulate(cfg, out, threads), EXIT_OK
    if command in ("equilibria", "stability"):
        res = scenarios.run_equilibria_stability(cfg, out, command, threads)
        return res, EXIT_NUMERIC if res["consistency_failed"] else EXIT_OK
    if command == "hopf-scan":
        return scenarios.run_hopf_scan(cfg, out, threads), EXIT_OK
    if command == "bifurcation":
        return scenarios.run_bifurcation(cfg, out, threads), EXIT_OK
    res = scenarios.run_optimal_control(cfg, out, threads)
    return res, EXIT_OK if res["result"].converged else EXIT_NOT_CONVERGED


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        threads = resolve_threads(args.threads)
        cfg = load_config(args.config, args.overrides)
        out = args.out or cfg.output_dir or "."
        os.makedirs(out, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            res, code = run(args.command, cfg, out, threads)
    except ConfigError as exc:
        print(f"pestctl: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"pestctl: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PestctlError, ArithmeticError) as exc:
        print(f"pestctl: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in res["files"]:
        print(path)
    if code == EXIT_NOT_CONVERGED:
        print("pestctl: forward-backward sweep did not converge", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

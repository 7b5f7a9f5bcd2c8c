"""Command-line entry point: ``fracsteer <command> [config] [options]``.

Exit codes: 0 success, 1 validation failure, 2 numeric failure, 3 I/O failure.
"""

import argparse
import sys

import numpy as np

from . import __version__
from .errors import NumericError, ValidationError
from .experiments import (format_table, format_trajectory, load_config, run_oracle_check,
                          run_simulate, run_sweep, run_synthesize, run_verify, write_text)
from .controllability import SweepRow

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


def _parser():
    parser = argparse.ArgumentParser(
        prog="fracsteer",
        description="Simulate and steer nonlocal fractional systems with nonsmooth forcing.",
        epilog="exit codes: 0 success, 1 validation, 2 numeric, 3 I/O")
    parser.add_argument("--version", action="version", version=f"fracsteer {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", nargs="?", help="YAML configuration file")
        p.add_argument("--preset", choices=["heat", "scalar"], help="start from a built-in preset")
        p.add_argument("--grid", type=int, metavar="M", help="number of uniform time steps")
        p.add_argument("--out", metavar="PATH", help="write CSV output to PATH")
        p.add_argument("--force", action="store_true",
                       help="run even when verification fails")
        return p

    add("verify", "check the standing assumptions of a configuration")
    add("simulate", "solve the state equation for a prescribed control")
    syn = add("synthesize", "steer toward the target for one regularization value")
    syn.add_argument("--reg", type=float, required=True, metavar="A",
                     help="regularization parameter a > 0")
    add("sweep", "run the regularization sweep over a_grid")
    add("oracle-check", "compare the mild formula with the independent time-stepper")
    return parser


def _emit(text, path):
    if path:
        write_text(path, text)
    else:
        sys.stdout.write(text)


def _gate(cfg, force):
    report = run_verify(cfg)
    if not report.passed and not force:
        print(report.text, file=sys.stderr)
        print("refusing to run: verification failed (use --force to override)", file=sys.stderr)
        return False
    return True


def _dispatch(args):
    lenient = args.command == "verify" or args.force
    cfg = load_config(args.config, preset=args.preset, grid=args.grid,
                      enforce_smallness=not lenient)
    out = args.out or cfg.output_path

    if args.command == "verify":
        report = run_verify(cfg)
        print(report.text)
        return EXIT_OK if report.passed else EXIT_VALIDATION

    if args.command == "oracle-check":
        report = run_oracle_check(cfg, finest=args.grid)
        print(report.text)
        return EXIT_OK if report.passed else EXIT_NUMERIC

    if not _gate(cfg, args.force):
        return EXIT_VALIDATION

    if args.command == "simulate":
        sol, init = run_simulate(cfg)
        print(f"converged={sol.converged} iterations={sol.iterations} residual={sol.residual:.3e}",
              file=sys.stderr)
        print(f"nonlocal consistency |Γ(α) lim t^(1−α)x − Σ c_k x(t_k)| = {init.discrepancy:.3e}",
              file=sys.stderr)
        _emit(format_trajectory(sol.trajectory, cfg), out)
        return EXIT_OK if sol.converged else EXIT_NUMERIC

    if args.command == "synthesize":
        res = run_synthesize(cfg, args.reg)
        row = SweepRow(args.reg, res.terminal_error, res.control_energy, res.iterations,
                       res.converged, res.residual)
        print(f"terminal_error={res.terminal_error:.6e} "
              f"relative={res.terminal_error / np.linalg.norm(cfg.target):.6e} "
              f"iterations={res.iterations} converged={res.converged} "
              f"residual={res.residual:.3e}", file=sys.stderr)
        _emit(format_table([row], cfg), out)
        return EXIT_OK

    rows = run_sweep(cfg)
    flagged = [r.a for r in rows if not r.converged]
    if flagged:
        print("warning: no convergence for a = " + ", ".join(f"{a:g}" for a in flagged),
              file=sys.stderr)
    _emit(format_table(rows, cfg), out)
    return EXIT_OK


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

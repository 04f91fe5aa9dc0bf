"""Command-line driver: ``eyeblink run|validate|sweep``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import experiments as ex

log = logging.getLogger("eyeblink")


def _grid(text):
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 28x24, got {text!r}") from None
    return nx, ny


def build_parser():
    p = argparse.ArgumentParser(prog="eyeblink", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(ex.PRESETS))
    src.add_argument("--config", type=Path)
    run.add_argument("--kappa", type=float)
    run.add_argument("--grid", type=_grid, metavar="NxM")
    run.add_argument("--rtol", type=float, help="sets both rtol and atol")
    run.add_argument("--h0", type=float, help="film initial thickness")
    run.add_argument("--t-end", type=float)
    run.add_argument("--out", type=Path)
    run.add_argument("--no-figures", action="store_true")

    val = sub.add_parser("validate", help="check a config file")
    val.add_argument("--config", type=Path, required=True)

    sw = sub.add_parser("sweep", help="run every combination of sweep.<key> values")
    sw.add_argument("--config", type=Path, required=True)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--no-figures", action="store_true")
    return p


def _overrides(args):
    o = {}
    if args.kappa is not None:
        o["kappa"] = args.kappa
    if args.grid is not None:
        o["nx"], o["ny"] = args.grid
    if args.rtol is not None:
        o["rtol"] = o["atol"] = args.rtol
    if args.h0 is not None:
        o["h0"] = args.h0
    if args.t_end is not None:
        o["t_end"] = args.t_end
        o["snapshots"] = None
    if args.out is not None:
        o["out"] = str(args.out)
    return o


def execute(cfg, figures=True):
    """Run ``cfg``, write its artifacts and return ``(exit code, result)``."""
    result = ex.simulate(cfg)
    out = ex.write_outputs(result)
    if figures:
        from .plotting import render_figures

        render_figures(result, out)
    return ex.exit_code(result), result


def _execute_quiet(args):
    cfg, figures = args
    code, result = execute(cfg, figures)
    return code, ex.summary_text(result)


def cmd_run(args):
    try:
        if args.preset:
            cfg = ex.preset(args.preset)
        else:
            cfg, _ = ex.read_config_file(args.config)
        o = _overrides(args)
        if "snapshots" in o:
            t_end = o["t_end"]
            o["snapshots"] = tuple(sorted({s for s in cfg.snapshots if s <= t_end} | {t_end}))
        cfg = dataclasses.replace(cfg, **o)
        problems = ex.validate(cfg)
        if problems:
            raise ex.ConfigError(problems)
    except ex.ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return ex.EXIT_CONFIG
    code, result = execute(cfg, figures=not args.no_figures)
    print(ex.summary_text(result), end="")
    if result.stagnated:
        print(f"integrator stagnated; last t reached = {result.t_reached:.6g}", file=sys.stderr)
    return code


def cmd_validate(args):
    try:
        cfg, sweep = ex.read_config_file(args.config)
    except (ex.ConfigError, OSError) as exc:
        for v in getattr(exc, "violations", [str(exc)]):
            print(v)
        return ex.EXIT_CONFIG
    problems = []
    for tag, c in ex.expand_sweep(cfg, sweep):
        problems += [f"{tag}: {v}" if tag else v for v in ex.validate(c)]
    for v in problems:
        print(v)
    if problems:
        return ex.EXIT_CONFIG
    print("ok")
    return ex.EXIT_OK


def cmd_sweep(args):
    try:
        cfg, sweep = ex.read_config_file(args.config)
        runs = ex.expand_sweep(cfg, sweep)
        problems = [f"{tag}: {v}" for tag, c in runs for v in ex.validate(c)]
        if problems:
            raise ex.ConfigError(problems)
    except ex.ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return ex.EXIT_CONFIG
    jobs = [(c, not args.no_figures) for _, c in runs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_execute_quiet, jobs))
    else:
        outcomes = [_execute_quiet(j) for j in jobs]
    codes = []
    for (tag, c), (code, summary) in zip(runs, outcomes):
        print(f"== {tag or 'base'} -> {c.out} (exit {code})")
        print(summary)
        codes.append(code)
    if ex.EXIT_STAGNATION in codes:
        return ex.EXIT_STAGNATION
    return max(codes) if codes else ex.EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": cmd_run, "validate": cmd_validate, "sweep": cmd_sweep}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())

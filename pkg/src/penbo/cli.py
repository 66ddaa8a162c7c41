"""Command-line interface: run, gradcheck, report, sweep."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import load_config
from .errors import ConfigError
from .harness import execute, report, resolve_out_dir


def _load(path: str):
    try:
        return load_config(path)
    except FileNotFoundError:
        print(f"config not found: {path}", file=sys.stderr)
        raise SystemExit(2)
    except ConfigError as err:
        print(f"invalid config: {err}", file=sys.stderr)
        raise SystemExit(2)


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "no_plots", False):
        cfg = replace(cfg, plots=False)
    return cfg


def _run_kind(args, expected_kind: str | None) -> int:
    cfg = _apply_overrides(_load(args.config), args)
    if expected_kind is not None and cfg.kind != expected_kind:
        print(f"config kind is {cfg.kind!r}, expected {expected_kind!r}", file=sys.stderr)
        return 2
    out_dir = resolve_out_dir(cfg, args.out)
    try:
        status = execute(cfg, out_dir)
    except ConfigError as err:
        print(f"invalid config: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime abort: partial artifacts stay in place
        print(f"run aborted: {err}", file=sys.stderr)
        return 1
    print(f"artifacts in {out_dir}")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="penbo",
        description="Penalty-method bilevel RL experiments and gradient diagnostics")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the experiment described by a config file")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, default=None, help="override the config seed")
    run_p.add_argument("--out", default=None, help="override the output directory")
    run_p.add_argument("--no-plots", action="store_true")

    gc_p = sub.add_parser("gradcheck", help="run analytic-vs-FD gradient checks")
    gc_p.add_argument("--config", required=True)
    gc_p.add_argument("--seed", type=int, default=None)
    gc_p.add_argument("--out", default=None)
    gc_p.add_argument("--no-plots", action="store_true")

    rep_p = sub.add_parser("report", help="summarize a finished run directory")
    rep_p.add_argument("run_dir")
    rep_p.add_argument("--no-plots", action="store_true")

    sweep_p = sub.add_parser("sweep", help="fan a base config out over one axis")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", default=None)
    sweep_p.add_argument("--no-plots", action="store_true")

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except SystemExit as exc:  # config loading failures carry their exit code
        return exc.code if isinstance(exc.code, int) else 2


def _dispatch(args) -> int:
    if args.command == "run":
        return _run_kind(args, None)
    if args.command == "gradcheck":
        cfg = _apply_overrides(_load(args.config), args)
        if cfg.kind != "gradcheck":
            print(f"config kind is {cfg.kind!r}, expected 'gradcheck'", file=sys.stderr)
            return 2
        out_dir = resolve_out_dir(cfg, args.out)
        try:
            status = execute(cfg, out_dir)
        except ConfigError as err:
            print(f"invalid config: {err}", file=sys.stderr)
            return 2
        cols = (out_dir / "record.csv").read_text().splitlines()[1:]
        failed = []
        for line in cols:
            name, err, tol, passed = line.split(",")
            print(f"{name}: max relative error {float(err):.3e} (tolerance {float(tol):g})")
            if passed == "0":
                failed.append(name)
        if failed:
            print("FAILED: " + ", ".join(failed), file=sys.stderr)
            return 1
        print("all gradient checks passed")
        return 0
    if args.command == "report":
        try:
            text = report(args.run_dir, plots=not args.no_plots)
        except FileNotFoundError as err:
            print(str(err), file=sys.stderr)
            return 1
        print(text, end="")
        return 0
    if args.command == "sweep":
        return _run_kind(args, "sweep")
    return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point.

Exit codes: 0 success, 1 bound violation, 2 invalid configuration,
3 data error (bad or missing input/run files), 4 grid above capacity.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, default_config_json
from .errors import ConfigError, EnsembleError
from .market_data import ReturnSeries, business_dates, synth_returns, write_returns_csv
from .runner import bound_check, grid_info, run
from .simplex_grid import DEFAULT_CAP


def _cmd_run(args) -> int:
    if args.print_config:
        print(default_config_json())
        return 0
    if not args.config:
        raise ConfigError("run needs --config <path> (see --print-config)")
    cfg = ExperimentConfig.load(args.config)
    manifest = run(cfg, args.out)
    for key, path in manifest.files.items():
        print(f"wrote {path}")
    t = sum(manifest.timings.values())
    print(f"{len(manifest.strategies)} strategies in {t:.2f}s -> {manifest.out_dir}")
    return 0


def _cmd_grid(args) -> int:
    print(grid_info(args.k, args.step_den, args.cap))
    return 0


def _cmd_bound_check(args) -> int:
    report = bound_check(args.run)
    for line in report.lines:
        print(line)
    print("bound-check: " + ("pass" if report.passed else "FAIL"))
    return 0 if report.passed else 1


def _cmd_synth(args) -> int:
    if args.assets < 2 or args.periods < 1:
        raise ConfigError("synth needs --assets >= 2 and --periods >= 1")
    r = synth_returns(args.assets, args.periods, args.regime, seed=args.seed)
    out = Path(args.out)
    if args.prices:
        prices = np.vstack([np.ones(args.assets), np.cumprod(r.returns, axis=0)])
        dates = business_dates(args.periods + 1)
        write_returns_csv(ReturnSeries(prices, r.symbols, dates), out)
    else:
        write_returns_csv(ReturnSeries(r.returns, r.symbols, business_dates(args.periods)), out)
    print(f"wrote {args.periods} periods x {args.assets} assets to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on usage errors, the same code as a bad config
    p = argparse.ArgumentParser(prog="ensemblefolio", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment from a JSON config")
    r.add_argument("--config", help="experiment config (JSON)")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--print-config", action="store_true", help="print the default config and exit")
    r.set_defaults(func=_cmd_run)

    g = sub.add_parser("grid", help="count points of a simplex grid without building it")
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--step-den", type=int, required=True, help="grid step is 1/step_den")
    g.add_argument("--cap", type=int, default=DEFAULT_CAP)
    g.set_defaults(func=_cmd_grid)

    b = sub.add_parser("bound-check", help="verify regret bounds of a finished run")
    b.add_argument("--run", required=True, help="run output directory")
    b.set_defaults(func=_cmd_bound_check)

    s = sub.add_parser("synth", help="write a synthetic gross-return CSV")
    s.add_argument("--assets", type=int, required=True)
    s.add_argument("--periods", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--regime", choices=["lognormal", "regime-switching"], default="lognormal")
    s.add_argument("--prices", action="store_true", help="write prices starting at 1 instead of returns")
    s.set_defaults(func=_cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EnsembleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())

"""Command-line entry point.

Exit codes: 0 completed, 1 usage or configuration error, 2 model failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import campaign as cp
from .benchmarks import BENCHMARKS

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _experiment_flags(p: argparse.ArgumentParser, surrogate: bool) -> None:
    p.add_argument("--config", help="JSON experiment config (path or shipped name)")
    p.add_argument("--model", help=f"benchmark id: {', '.join(sorted(BENCHMARKS))}")
    p.add_argument("--stl", help="requirement text, e.g. 'G[0,24] (room1 > -1.6)'")
    p.add_argument("--strategy", help="uniform | hillclimb | anneal")
    p.add_argument("--max", type=int, dest="max_executions",
                   help="execution budget (inner budget in surrogate mode)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--cost-factor", type=int, dest="cost_factor",
                   help="run the model this many times per execution")
    if surrogate:
        p.add_argument("--structure", help="arx | armax | bj | ss")
        p.add_argument("--orders", help="comma-separated orders, e.g. 2,1,1,2,1")
        p.add_argument("--max-ref", type=int, dest="max_refinements")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="surrofal", description="Falsification testing with surrogate models")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("falsify", help="one baseline falsification run")
    _experiment_flags(p, surrogate=False)

    p = sub.add_parser("aristeo", help="one surrogate-assisted (approximation-refinement) run")
    _experiment_flags(p, surrogate=True)

    p = sub.add_parser("campaign", help="repeated seeded runs")
    _experiment_flags(p, surrogate=True)
    p.add_argument("--mode", choices=cp.MODES)
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("sweep", help="structure/order sweep with Pareto frontier")
    p.add_argument("--config", required=True, help="sweep file (path or shipped name)")
    p.add_argument("--reps", type=int, dest="repetitions")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--parallel", type=int, default=1)

    p = sub.add_parser("replay", help="rerun one seed of a saved campaign")
    p.add_argument("--out", required=True, help="campaign directory")
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("report", help="summarise a campaign or sweep directory")
    p.add_argument("dir", nargs="?")
    p.add_argument("--out", help="same as the positional directory")
    return parser


def _config_from_args(args, mode: str | None) -> cp.ExperimentConfig:
    base = {}
    if args.config:
        base = cp.load_config(args.config).to_dict()
    for key in ("model", "stl", "max_executions", "seed", "cost_factor", "structure",
                "max_refinements", "repetitions", "mode"):
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if args.strategy is not None:
        base["strategy"] = {"name": args.strategy}
    if getattr(args, "orders", None):
        try:
            base["orders"] = [int(x) for x in args.orders.split(",")]
        except ValueError:
            raise cp.ConfigError(f"bad --orders {args.orders!r}") from None
    if mode is not None:
        base["mode"] = mode
    if "model" not in base:
        raise cp.ConfigError("--model (or a config with 'model') is required")
    return cp.ExperimentConfig.from_dict(base)


def _print_row(row: dict) -> None:
    print(f"seed={row['seed']} mode={row['mode']} outcome={row['outcome']} "
          f"best_objective={row['best_objective']!r} mut_executions={row['mut_executions']} "
          f"iterations={row['iterations']} wall_ms={row['wall_ms']:.1f}")


def _single(args, mode: str) -> int:
    config = replace(_config_from_args(args, mode), repetitions=1)
    cp.resolve(config)
    out = Path(args.out) if args.out else None
    rep = cp.run_campaign(config, out)
    row = rep.rows[0]
    _print_row(row)
    if out is not None:
        run_dir = out / "runs" / f"seed_{row['seed']}"
        if (run_dir / "failing_input.json").exists():
            print(f"failing input: {run_dir / 'failing_input.json'}")
    if row["outcome"] == "error":
        if out is not None:
            print((out / "runs" / f"seed_{row['seed']}" / "error.txt").read_text().strip(),
                  file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _campaign(args) -> int:
    config = _config_from_args(args, None)
    rep = cp.run_campaign(config, args.out, args.parallel)
    for row in rep.rows:
        _print_row(row)
    _print_summary(cp.summarize(rep.rows, rep.budget))
    return EXIT_RUNTIME if rep.errors == len(rep.rows) else EXIT_OK


def _sweep(args) -> int:
    configs = cp.load_sweep(args.config)
    overrides = {k: getattr(args, k) for k in ("repetitions", "seed") if getattr(args, k) is not None}
    if overrides:
        configs = [replace(c, **overrides) for c in configs]
    table = cp.sweep(configs, args.out, args.parallel)
    print(f"{'config':<10} {'orders':<14} {'effectiveness':>13} {'mean_iter':>10} {'errors':>6}  pareto")
    for r in table:
        print(f"{r.label:<10} {','.join(map(str, r.orders)):<14} {r.effectiveness:>13.3f} "
              f"{r.mean_iterations:>10.2f} {r.errors:>6}  {'*' if r.pareto else ''}")
    return EXIT_OK


def _replay(args) -> int:
    row, recorded = cp.replay(args.out, args.seed)
    _print_row(row)
    if recorded is None:
        print(f"seed {args.seed} has no recorded row; nothing to compare")
        return EXIT_OK
    if cp.same_row(row, recorded):
        print("reproduced: row matches the recorded one")
        return EXIT_OK
    print("MISMATCH with the recorded row:", file=sys.stderr)
    _print_row(recorded)
    return EXIT_RUNTIME


def _print_summary(s: dict) -> None:
    def f(x):
        return "n/a" if isinstance(x, float) and math.isnan(x) else (f"{x:.3f}" if isinstance(x, float) else x)
    print(f"runs={s['runs']} found={s['found']} boundary={s['boundary']} errors={s['errors']} "
          f"effectiveness={f(s['effectiveness'])} median_mut_executions={f(s['median_mut_executions'])} "
          f"mean_iterations={f(s['mean_iterations'])}")


def _report(args) -> int:
    target = args.dir or args.out
    if target is None:
        print("report: a directory is required", file=sys.stderr)
        return EXIT_USAGE
    root = Path(target)
    if not root.is_dir():
        print(f"report: {root} is not a directory", file=sys.stderr)
        return EXIT_USAGE
    campaigns = sorted(p.parent for p in root.rglob("rows.csv"))
    if not campaigns:
        print(f"no runs in {root}", file=sys.stderr)
        return EXIT_USAGE
    for cdir in campaigns:
        rows = cp.read_rows(cdir / "rows.csv")
        print(f"== {cdir}")
        if not rows:
            print("no runs")
            continue
        budget = None
        if (cdir / "config.json").exists():
            budget = cp.iteration_budget(cp.load_config(cdir / "config.json"))
        _print_summary(cp.summarize(rows, budget))
        for r in rows:
            path = cdir / "runs" / f"seed_{r['seed']}" / "failing_input.json"
            if path.exists():
                print(f"  seed {r['seed']}: failing input {path}")
    sweep_csv = root / "sweep.csv"
    if sweep_csv.exists():
        print(f"== sweep table: {sweep_csv}")
        print(sweep_csv.read_text().rstrip())
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "falsify":
            return _single(args, "baseline")
        if args.command == "aristeo":
            return _single(args, "surrogate")
        if args.command == "campaign":
            return _campaign(args)
        if args.command == "sweep":
            return _sweep(args)
        if args.command == "replay":
            return _replay(args)
        return _report(args)
    except cp.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``bikerec <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment as ex
from .demand import build_demand_table, read_trips_csv, write_demand_csv
from .scenario import (ScenarioError, generate_users, halve_capacities, read_scenario, read_stations_json,
                       synthetic_scenario, write_scenario, write_stations_json, write_users_csv)
from .strategies import KINDS

log = logging.getLogger("bikerec")

# flag name -> config key; None defaults mean "not given, keep the config file value"
_CONFIG_FLAGS = {
    "strategy": "kind", "md": "md", "MD": "MD", "rent_fail_cost": "rent_fail_cost",
    "return_fail_cost": "return_fail_cost", "f_rent_fc": "f_rent_fc", "f_return_fc": "f_return_fc",
    "tf": "tf", "f": "f", "step_cap": "step_cap", "min_steps": "min_steps", "seed": "seed",
    "replications": "replications", "travel_noise": "travel_noise",
}


def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment config (overrides --config)")
    g.add_argument("--config", type=Path, help="experiment config JSON")
    g.add_argument("--strategy", type=str.upper, choices=KINDS)
    g.add_argument("--md", type=float, help="max walking distance for rentals, m")
    g.add_argument("--MD", type=float, help="neighbourhood radius for future impact, m")
    g.add_argument("--rent-fail-cost", type=float)
    g.add_argument("--return-fail-cost", type=float)
    g.add_argument("--f-rent-fc", type=float)
    g.add_argument("--f-return-fc", type=float)
    g.add_argument("--tf", type=float, help="prediction timeframe, s")
    g.add_argument("--f", type=float, help="future impact weight")
    g.add_argument("--step-cap", type=float, help="RK4 step cap, s")
    g.add_argument("--min-steps", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--replications", type=int)
    g.add_argument("--travel-noise", type=float)


def _load_doc(path) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: config must be a JSON object")
    return doc


def _configs(args) -> tuple[dict, list[ex.ExperimentConfig]]:
    doc = _load_doc(args.config)
    overrides = {key: getattr(args, flag) for flag, key in _CONFIG_FLAGS.items()}
    strategies = getattr(args, "strategies", None)
    if strategies:
        doc["runs"] = [{"kind": k} for k in strategies.split(",")]
    return doc, ex.load_configs(doc, overrides)


def _scenario(args, doc):
    path = args.scenario or doc.get("scenario")
    if path is None:
        raise ScenarioError("no scenario given (--scenario or 'scenario' in the config)")
    return read_scenario(path)


def _emit(rows, out, markdown, columns=None):
    if out:
        ex.write_csv(out, rows, columns)
        log.info("wrote %s", out)
    if markdown:
        Path(markdown).write_text(ex.to_markdown(rows, columns))
    if not out:
        sys.stdout.write(ex.to_markdown(rows, columns))


# ------------------------------------------------------------------ commands

def cmd_synth(args):
    sc = synthetic_scenario(user_seed=args.user_seed, layout_seed=args.layout_seed, halve=not args.no_halve,
                            jitter_radius=args.radius, rows=args.rows, cols=args.cols, n_trips=args.trips)
    write_scenario(args.out, sc)
    print(f"{len(sc.stations)} stations, {sc.total_slots} slots, {sc.total_bikes} bikes, "
          f"{len(sc.users)} users -> {args.out}")


def cmd_generate(args):
    trips = read_trips_csv(args.trips)
    stations = read_stations_json(args.stations)
    users = generate_users(trips, stations, args.radius, args.seed, args.start_hour)
    write_users_csv(args.out, users)
    print(f"{len(users)} users -> {args.out}")


def cmd_demand(args):
    trips = read_trips_csv(args.trips)
    ids = [s.id for s in read_stations_json(args.stations)] if args.stations else None
    table = build_demand_table(trips, args.days, ids, args.return_lag, args.origin_hour)
    write_demand_csv(args.out, table)
    print(f"{len(table.rents)} stations, {table.rejected} trips rejected -> {args.out}")


def cmd_halve(args):
    stations = read_stations_json(args.stations)
    half = halve_capacities(stations)
    write_stations_json(args.out, half)
    print(f"slots {sum(s.capacity for s in stations)} -> {sum(s.capacity for s in half)}, "
          f"bikes {sum(s.bikes for s in stations)} -> {sum(s.bikes for s in half)}")


def cmd_run(args):
    doc, cfgs = _configs(args)
    sc = _scenario(args, doc)
    try:
        rows = ex.run_experiment(sc, cfgs, optimum=not args.no_optimum)
    except ex.ExperimentError as exc:
        if exc.rows and args.out:
            ex.write_csv(args.out, exc.rows, ex.RESULT_COLUMNS)
        raise
    _emit(rows, args.out, args.markdown, ex.RESULT_COLUMNS)


def cmd_sweep(args):
    doc, cfgs = _configs(args)
    if len(cfgs) != 1:
        raise ScenarioError("sweep takes a single base config")
    sc = _scenario(args, doc)
    values = [v for v in args.values.split(",") if v]
    series = ex.sweep(sc, cfgs[0], args.parameter, values, workers=args.workers)
    _emit(ex.sweep_rows(series), args.out, args.markdown, ex.SWEEP_COLUMNS)


def cmd_report(args):
    parts = []
    for path in args.results:
        rows = ex.read_csv(path)
        parts.append(f"### {Path(path).stem}\n\n" + ex.to_markdown(rows) if args.format == "markdown"
                     else Path(path).read_text())
    text = "\n".join(parts)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bikerec", description="Bike-sharing recommendation simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic congested scenario directory")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--user-seed", type=int, default=0)
    s.add_argument("--layout-seed", type=int, default=0)
    s.add_argument("--rows", type=int, default=7)
    s.add_argument("--cols", type=int, default=7)
    s.add_argument("--trips", type=int, default=2400)
    s.add_argument("--radius", type=float, default=300.0)
    s.add_argument("--no-halve", action="store_true")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("generate", help="users from a trips CSV")
    s.add_argument("--trips", type=Path, required=True)
    s.add_argument("--stations", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--radius", type=float, default=300.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--start-hour", type=int, default=0, help="hour mapped to simulation time 0")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("demand", help="hourly demand table from a trips CSV")
    s.add_argument("--trips", type=Path, required=True)
    s.add_argument("--days", type=int, required=True)
    s.add_argument("--stations", type=Path)
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--return-lag", type=float, default=0.0, help="seconds")
    s.add_argument("--origin-hour", type=int, default=0)
    s.set_defaults(func=cmd_demand)

    s = sub.add_parser("halve", help="halve station capacities and bikes")
    s.add_argument("--stations", type=Path, required=True)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_halve)

    s = sub.add_parser("run", help="results table for one or more strategies")
    s.add_argument("--scenario", type=Path)
    s.add_argument("--strategies", help="comma separated kinds, one row each")
    s.add_argument("--out", type=Path, help="results CSV (default: markdown to stdout)")
    s.add_argument("--markdown", type=Path)
    s.add_argument("--no-optimum", action="store_true")
    _config_flags(s)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="vary one strategy parameter")
    s.add_argument("--scenario", type=Path)
    s.add_argument("--parameter", required=True)
    s.add_argument("--values", required=True, help="comma separated")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", type=Path)
    s.add_argument("--markdown", type=Path)
    _config_flags(s)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("report", help="render result CSVs as markdown")
    s.add_argument("results", nargs="+", type=Path)
    s.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ScenarioError, ValueError, KeyError, FileNotFoundError, ex.ExperimentError) as exc:
        print(f"bikerec: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Batch execution: result tables, the OPTIMUM reference row, parameter sweeps and reports."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .model import Network
from .scenario import Scenario
from .sim import Metrics, run
from .strategies import StrategyConfig
from .transient import DEFAULT_SOLVER, SolverConfig

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["strategy", "#a", "a%", "#fh", "fh%", "#fr", "fr%", "tt_min", "aet_min"]
SWEEP_COLUMNS = ["parameter_value", "abandons_pct", "tt_min", "fh", "fr", "aet_min"]
OPTIMUM = "OPTIMUM"


class ExperimentError(RuntimeError):
    """A run failed; ``rows`` keeps whatever finished before it."""

    def __init__(self, msg, rows):
        super().__init__(msg)
        self.rows = rows


@dataclass
class ExperimentConfig:
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    solver: SolverConfig = DEFAULT_SOLVER
    seed: int = 0
    replications: int = 1
    travel_noise: float = 0.0
    name: str | None = None

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0 <= self.travel_noise < 1:
            raise ValueError("travel_noise must be in [0, 1)")

    @property
    def label(self) -> str:
        return self.name or self.strategy.label()

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        """Flat mapping: StrategyConfig fields, SolverConfig fields, seed, replications, travel_noise, name."""
        d = dict(d)
        known = set(StrategyConfig.field_names()) | {f.name for f in fields(SolverConfig)} | {
            "seed", "replications", "travel_noise", "name", "solver"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        solver_kw = dict(d.pop("solver", {}) or {})
        for f in fields(SolverConfig):
            if f.name in d:
                solver_kw[f.name] = d.pop(f.name)
        strat_kw = {k: d.pop(k) for k in StrategyConfig.field_names() if k in d}
        return cls(StrategyConfig(**strat_kw), SolverConfig(**solver_kw), **d)

    def to_dict(self) -> dict:
        out = asdict(self.strategy)
        out.update(asdict(self.solver))
        out.update(seed=self.seed, replications=self.replications, travel_noise=self.travel_noise)
        if self.name:
            out["name"] = self.name
        return out


def load_configs(doc: dict, overrides: dict | None = None) -> list[ExperimentConfig]:
    """Expand a config document into experiment configs.

    Top-level keys are shared defaults; an optional ``runs`` list holds
    per-run overrides. ``overrides`` (from the command line) beat both.
    """
    doc = dict(doc)
    runs = doc.pop("runs", None) or [{}]
    doc.pop("scenario", None)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    return [ExperimentConfig.from_dict({**doc, **r, **overrides}) for r in runs]


# ------------------------------------------------------------------ running

def mean_metrics(ms: list[Metrics]) -> Metrics:
    if len(ms) == 1:
        return ms[0]
    return Metrics(**{f.name: float(np.mean([getattr(m, f.name) for m in ms])) for f in fields(Metrics)})


def run_config(scenario: Scenario, cfg: ExperimentConfig) -> Metrics:
    ms = []
    for r in range(cfg.replications):
        res = run(scenario, cfg.strategy, seed=cfg.seed + r, solver=cfg.solver, travel_noise=cfg.travel_noise)
        ms.append(res.metrics)
    return mean_metrics(ms)


def optimum_metrics(scenario: Scenario) -> Metrics:
    """Every user served at the nearest stations with unlimited capacity."""
    net = Network(scenario.stations, scenario.profile)
    trips = []
    for u in scenario.users:
        d_o = net.distances_from(u.origin)
        d_d = net.distances_from(u.destination)
        i, j = int(np.argmin(d_o)), int(np.argmin(d_d))
        trips.append(net.walk_seconds(d_o[i]) + net.bike_seconds(net.dist[i, j]) + net.walk_seconds(d_d[j]))
    n = len(trips)
    return Metrics(users=n, rent_attempts=n, return_attempts=n,
                   avg_total_time=float(np.mean(trips)) / 60.0 if trips else 0.0)


def result_row(label: str, m: Metrics) -> dict:
    return {"strategy": label, **m.as_row()}


def run_experiment(scenario: Scenario, configs: list[ExperimentConfig], optimum: bool = True) -> list[dict]:
    """One row per config, then the OPTIMUM row."""
    scenario.validate()
    rows = []
    for cfg in configs:
        t0 = time.perf_counter()
        try:
            m = run_config(scenario, cfg)
        except Exception as exc:
            raise ExperimentError(f"{cfg.label}: {exc}", rows) from exc
        log.info("%s done in %.1fs", cfg.label, time.perf_counter() - t0)
        rows.append(result_row(cfg.label, m))
    if optimum:
        rows.append(result_row(OPTIMUM, optimum_metrics(scenario)))
    return rows


def _coerce(parameter: str, value):
    ftype = {f.name: f.type for f in fields(StrategyConfig)}[parameter]
    return str(value) if ftype in (str, "str") else float(value)


def _sweep_point(args):
    scenario, cfg = args
    return run_config(scenario, cfg)


def sweep(scenario: Scenario, base: ExperimentConfig, parameter: str, values, workers: int = 1):
    """[(value, Metrics)] with ``parameter`` of the strategy config set to each value in turn."""
    if parameter not in StrategyConfig.field_names():
        raise ValueError(f"unknown sweep parameter {parameter!r}; expected one of {StrategyConfig.field_names()}")
    values = [_coerce(parameter, v) for v in values]
    cfgs = [replace(base, strategy=replace(base.strategy, **{parameter: v})) for v in values]
    scenario.validate()
    if workers > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            metrics = list(pool.map(_sweep_point, [(scenario, c) for c in cfgs]))
    else:
        metrics = [run_config(scenario, c) for c in cfgs]
    return list(zip(values, metrics))


def sweep_rows(series) -> list[dict]:
    return [{"parameter_value": v, "abandons_pct": round(m.abandons_pct, 4), "tt_min": round(m.avg_total_time, 4),
             "fh": m.failed_rents, "fr": m.failed_returns, "aet_min": round(m.avg_empty_time, 4)}
            for v, m in series]


# ------------------------------------------------------------------ output

def write_csv(path, rows: list[dict], columns: list[str] | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else RESULT_COLUMNS)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def to_markdown(rows: list[dict], columns: list[str] | None = None) -> str:
    if not rows:
        return ""
    columns = columns or list(rows[0])
    out = io.StringIO()
    out.write("| " + " | ".join(columns) + " |\n")
    out.write("|" + "|".join("---" for _ in columns) + "|\n")
    for r in rows:
        out.write("| " + " | ".join(str(r.get(c, "")) for c in columns) + " |\n")
    return out.getvalue()


def dump_config(cfgs: list[ExperimentConfig]) -> str:
    return json.dumps({"runs": [c.to_dict() for c in cfgs]}, indent=1, sort_keys=True)

"""Deterministic discrete-event simulation of users following recommendations."""
from __future__ import annotations

import csv
import heapq
import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .demand import DemandTable
from .ledger import RENTAL, RETURN, ExpectationLedger, ExpectedEvent
from .model import GeoPoint, MobilityProfile, Network, RentRequest, ReturnRequest, Station
from .strategies import Snapshot, Strategy, StrategyConfig
from .transient import DEFAULT_SOLVER, SolverConfig

log = logging.getLogger(__name__)

APPEAR = "appear"
ARRIVE_RENT = "arrive_at_rent_station"
ARRIVE_RETURN = "arrive_at_return_station"
REACH_DEST = "reach_destination"


@dataclass(frozen=True)
class UserScript:
    user_id: Hashable
    appear_at: float
    origin: GeoPoint
    destination: GeoPoint


@dataclass
class Metrics:
    users: int = 0
    abandons: int = 0
    abandons_pct: float = 0.0
    rent_attempts: int = 0
    failed_rents: int = 0
    failed_rents_pct: float = 0.0
    return_attempts: int = 0
    failed_returns: int = 0
    failed_returns_pct: float = 0.0
    avg_total_time: float = 0.0  # minutes, users who rented
    avg_empty_time: float = 0.0  # minutes, mean over stations

    def as_row(self) -> dict:
        return {
            "#a": self.abandons, "a%": round(self.abandons_pct, 2),
            "#fh": self.failed_rents, "fh%": round(self.failed_rents_pct, 2),
            "#fr": self.failed_returns, "fr%": round(self.failed_returns_pct, 2),
            "tt_min": round(self.avg_total_time, 2), "aet_min": round(self.avg_empty_time, 2),
        }


@dataclass
class StationStats:
    station: Hashable
    empty_seconds: float = 0.0
    full_seconds: float = 0.0
    rent_attempts: int = 0
    failed_rents: int = 0
    return_attempts: int = 0
    failed_returns: int = 0


@dataclass
class RunResult:
    metrics: Metrics
    stations: list[StationStats]
    log: list[dict]
    diagnostics: dict = field(default_factory=dict)

    def write_log(self, path) -> None:
        write_event_log(path, self.log)

    def write_station_stats(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["station", "empty_seconds", "full_seconds", "rent_attempts",
                        "failed_rents", "return_attempts", "failed_returns"])
            for s in self.stations:
                w.writerow([s.station, repr(s.empty_seconds), repr(s.full_seconds), s.rent_attempts,
                            s.failed_rents, s.return_attempts, s.failed_returns])


def write_event_log(path, records) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_event_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


class _User:
    __slots__ = ("script", "loc", "walked", "tried_rent", "tried_return", "target", "has_bike")

    def __init__(self, script: UserScript):
        self.script = script
        self.loc = script.origin
        self.walked = 0.0
        self.tried_rent: set = set()
        self.tried_return: set = set()
        self.target = None
        self.has_bike = False


class InvariantError(RuntimeError):
    pass


class Simulation:
    """One run of a scenario under one strategy. Single-threaded; call :meth:`run` once."""

    def __init__(self, stations: list[Station], users: list[UserScript], demand: DemandTable,
                 cfg: StrategyConfig, profile: MobilityProfile = MobilityProfile(),
                 horizon: float | None = None, solver: SolverConfig = DEFAULT_SOLVER,
                 seed: int = 0, travel_noise: float = 0.0, check_invariants: bool = False):
        self.net = Network(stations, profile)
        if len(self.net) == 0:
            raise ValueError("scenario has no active stations")
        self.users = sorted(users, key=lambda u: (u.appear_at, str(u.user_id)))
        self.horizon = horizon if horizon is not None else max((u.appear_at for u in users), default=0.0)
        self.cfg = cfg
        self.strategy = Strategy(cfg)
        self.ledger = ExpectationLedger()
        self.snap = Snapshot(self.net, self.ledger, demand, 0.0, solver)
        self.rng = np.random.default_rng(seed)
        self.travel_noise = travel_noise
        self.check = check_invariants
        self.initial_bikes = {s.id: s.bikes for s in self.net.stations}
        self._queue: list = []
        self._seq = itertools.count()
        self.log: list[dict] = []
        self.now = 0.0
        self.bikes_in_transit = 0
        self._total_bikes = int(self.net.bikes.sum())
        self.diagnostics = {"return_fallbacks": 0}

    # -- plumbing
    def _push(self, t, kind, user, station=None):
        heapq.heappush(self._queue, (t, next(self._seq), kind, user, station))

    def _record(self, kind, user, station=None, **detail):
        rec = {"time": self.now, "kind": kind, "user": user.script.user_id, "station": station}
        if detail:
            rec["detail"] = detail
        self.log.append(rec)

    def _travel(self, expected):
        if self.travel_noise:
            return expected * (1.0 + self.rng.uniform(-self.travel_noise, self.travel_noise))
        return expected

    def _snapshot(self):
        self.snap.clock = self.now
        return self.snap

    # -- behaviour
    def _request_rent(self, u: _User):
        budget = max(self.cfg.md - u.walked, 0.0)
        req = RentRequest(u.script.user_id, u.loc, self.now, budget)
        ranking = [s for s in self.strategy.rank_rent(req, self._snapshot()) if s not in u.tried_rent]
        if not ranking:
            self._record("abandon", u)
            return
        target = ranking[0]
        i = self.net.index[target]
        d = float(self.net.distances_from(u.loc)[i])
        expected = self.net.walk_seconds(d)
        self.ledger.commit(ExpectedEvent(target, self.now + expected, RENTAL, u.script.user_id))
        u.walked += d
        u.target = target
        self._push(self.now + self._travel(expected), ARRIVE_RENT, u, target)

    def _request_return(self, u: _User):
        req = ReturnRequest(u.script.user_id, u.loc, u.script.destination, self.now)
        ranking = [s for s in self.strategy.rank_return(req, self._snapshot()) if s not in u.tried_return]
        if not ranking:
            # filtered strategies can rank nothing untried; go to the nearest untried station
            self.diagnostics["return_fallbacks"] += 1
            if len(u.tried_return) >= len(self.net):
                u.tried_return.clear()
            d_dest = self.net.distances_from(u.script.destination)
            order = np.lexsort((self.net.id_rank, d_dest))
            ranking = [self.net.ids[i] for i in order if self.net.ids[i] not in u.tried_return]
        target = ranking[0]
        i = self.net.index[target]
        d = float(self.net.distances_from(u.loc)[i])
        expected = self.net.bike_seconds(d)
        self.ledger.commit(ExpectedEvent(target, self.now + expected, RETURN, u.script.user_id))
        u.target = target
        self._push(self.now + self._travel(expected), ARRIVE_RETURN, u, target)

    def _arrive_rent(self, u: _User, sid):
        self.ledger.resolve(u.script.user_id, sid)
        i = self.net.index[sid]
        u.tried_rent.add(sid)
        u.loc = self.net.stations[i].location
        if self.net.take_bike(i):
            u.has_bike = True
            self.bikes_in_transit += 1
            self._record("rent", u, sid, bikes=int(self.net.bikes[i]))
            self._request_return(u)
        else:
            self._record("rent_fail", u, sid)
            self._request_rent(u)

    def _arrive_return(self, u: _User, sid):
        self.ledger.resolve(u.script.user_id, sid)
        i = self.net.index[sid]
        u.tried_return.add(sid)
        u.loc = self.net.stations[i].location
        if self.net.return_bike(i):
            u.has_bike = False
            self.bikes_in_transit -= 1
            self._record("return", u, sid, bikes=int(self.net.bikes[i]))
            walk = self.net.walk_seconds(float(self.net.distances_from(u.script.destination)[i]))
            self._push(self.now + self._travel(walk), REACH_DEST, u)
        else:
            self._record("return_fail", u, sid)
            self._request_return(u)

    def _verify(self):
        b = self.net.bikes
        if (b < 0).any() or (b > self.net.capacity).any():
            raise InvariantError(f"capacity bounds violated at t={self.now}")
        if int(b.sum()) + self.bikes_in_transit != self._total_bikes:
            raise InvariantError(f"bike conservation violated at t={self.now}")

    def run(self) -> RunResult:
        for us in self.users:
            self._push(us.appear_at, APPEAR, _User(us))
        while self._queue:
            t, _, kind, u, sid = heapq.heappop(self._queue)
            self.now = t
            if kind == APPEAR:
                self._record(APPEAR, u)
                self._request_rent(u)
            elif kind == ARRIVE_RENT:
                self._arrive_rent(u, sid)
            elif kind == ARRIVE_RETURN:
                self._arrive_return(u, sid)
            else:
                self._record(REACH_DEST, u)
            if self.check:
                self._verify()
        if self.check and len(self.ledger):
            raise InvariantError("expectation ledger not empty at end of run")
        end = max(self.horizon, self.now)
        metrics, stats = compute_metrics(self.log, self.initial_bikes, self.net.capacity.tolist(), end)
        return RunResult(metrics, stats, self.log, dict(self.diagnostics))


def compute_metrics(records, initial_bikes: dict, capacities, end_time: float):
    """Metrics and per-station stats from an event log.

    ``initial_bikes`` maps station id to its bike count at t = 0 (dict order
    fixes station order); ``capacities`` follows the same order.
    """
    ids = list(initial_bikes)
    pos = {sid: k for k, sid in enumerate(ids)}
    stats = [StationStats(sid) for sid in ids]
    bikes = [initial_bikes[s] for s in ids]
    since = [0.0] * len(ids)
    appear, done = {}, {}
    rented = set()
    abandoned = 0
    m = Metrics()

    def settle(k, t):
        if bikes[k] == 0:
            stats[k].empty_seconds += t - since[k]
        elif bikes[k] == capacities[k]:
            stats[k].full_seconds += t - since[k]
        since[k] = t

    for rec in records:
        kind, t, user = rec["kind"], rec["time"], rec["user"]
        if kind == APPEAR:
            appear[user] = t
        elif kind == "abandon":
            abandoned += 1
        elif kind in ("rent", "rent_fail"):
            k = pos[rec["station"]]
            stats[k].rent_attempts += 1
            if kind == "rent":
                settle(k, t)
                bikes[k] -= 1
                rented.add(user)
            else:
                stats[k].failed_rents += 1
        elif kind in ("return", "return_fail"):
            k = pos[rec["station"]]
            stats[k].return_attempts += 1
            if kind == "return":
                settle(k, t)
                bikes[k] += 1
            else:
                stats[k].failed_returns += 1
        elif kind == REACH_DEST:
            done[user] = t
    for k in range(len(ids)):
        settle(k, end_time)

    m.users = len(appear)
    m.abandons = abandoned
    finished = abandoned + len(done)
    m.abandons_pct = 100.0 * abandoned / finished if finished else 0.0
    m.rent_attempts = sum(s.rent_attempts for s in stats)
    m.failed_rents = sum(s.failed_rents for s in stats)
    m.failed_rents_pct = 100.0 * m.failed_rents / m.rent_attempts if m.rent_attempts else 0.0
    m.return_attempts = sum(s.return_attempts for s in stats)
    m.failed_returns = sum(s.failed_returns for s in stats)
    m.failed_returns_pct = 100.0 * m.failed_returns / m.return_attempts if m.return_attempts else 0.0
    trips = [done[u] - appear[u] for u in done if u in rented]
    m.avg_total_time = float(np.mean(trips)) / 60.0 if trips else 0.0
    m.avg_empty_time = sum(s.empty_seconds for s in stats) / len(stats) / 60.0 if stats else 0.0
    return m, stats


def run(scenario, cfg: StrategyConfig, seed: int = 0, solver: SolverConfig = DEFAULT_SOLVER,
        travel_noise: float = 0.0, check_invariants: bool = False) -> RunResult:
    """Simulate ``scenario`` (see :mod:`bikerec.scenario`) under one strategy."""
    scenario.validate()
    sim = Simulation(scenario.stations, scenario.users, scenario.demand, cfg, scenario.profile,
                     scenario.horizon, solver, seed, travel_noise, check_invariants)
    return sim.run()

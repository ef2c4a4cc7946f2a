"""Scenarios: stations, scripted users, demand and mobility profile, plus I/O and generators."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .demand import (DemandTable, TripRecord, _parse_id, build_demand_table, read_demand_csv,
                     write_demand_csv)
from .model import GeoPoint, MobilityProfile, Station, distance, offset_point
from .sim import UserScript

log = logging.getLogger(__name__)


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    stations: list[Station]
    users: list[UserScript]
    demand: DemandTable
    profile: MobilityProfile = field(default_factory=MobilityProfile)
    horizon: float = 86400.0

    def validate(self) -> "Scenario":
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ScenarioError("station ids must be unique")
        if not any(s.active for s in self.stations):
            raise ScenarioError("no active stations")
        for s in self.stations:
            if s.capacity < 1 or not 0 <= s.bikes <= s.capacity:
                raise ScenarioError(f"station {s.id}: inconsistent capacity/bikes")
        for u in self.users:
            if not 0 <= u.appear_at <= self.horizon:
                raise ScenarioError(f"user {u.user_id} appears outside [0, {self.horizon}]")
        return self

    @property
    def total_slots(self) -> int:
        return sum(s.capacity for s in self.stations if s.active)

    @property
    def total_bikes(self) -> int:
        return sum(s.bikes for s in self.stations if s.active)


# ------------------------------------------------------------------ file I/O

def read_stations_json(path) -> list[Station]:
    with open(path) as fh:
        raw = json.load(fh)
    if isinstance(raw, dict):
        raw = raw["stations"]
    try:
        return [Station(r["id"], GeoPoint(float(r["lat"]), float(r["lon"])), int(r["capacity"]),
                        int(r["bikes"]), bool(r.get("active", True))) for r in raw]
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"{path}: malformed station record ({exc})") from exc


def write_stations_json(path, stations) -> None:
    rows = [{"id": s.id, "lat": s.location.lat, "lon": s.location.lon, "capacity": s.capacity,
             "bikes": s.bikes, "active": s.active} for s in stations]
    with open(path, "w") as fh:
        json.dump(rows, fh, indent=1)
        fh.write("\n")


def read_users_csv(path) -> list[UserScript]:
    with open(path, newline="") as fh:
        return [UserScript(_parse_id(r["user_id"]), float(r["appear_s"]),
                           GeoPoint(float(r["olat"]), float(r["olon"])),
                           GeoPoint(float(r["dlat"]), float(r["dlon"])))
                for r in csv.DictReader(fh)]


def write_users_csv(path, users) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user_id", "appear_s", "olat", "olon", "dlat", "dlon"])
        for u in users:
            w.writerow([u.user_id, repr(u.appear_at), repr(u.origin.lat), repr(u.origin.lon),
                        repr(u.destination.lat), repr(u.destination.lon)])


def write_scenario(directory, sc: Scenario) -> Path:
    """Write ``scenario.json``, ``stations.json``, ``users.csv``, ``demand.csv``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_stations_json(d / "stations.json", sc.stations)
    write_users_csv(d / "users.csv", sc.users)
    write_demand_csv(d / "demand.csv", sc.demand)
    meta = {"horizon": sc.horizon, "origin_hour": sc.demand.origin_hour, "profile": asdict(sc.profile),
            "stations": "stations.json", "users": "users.csv", "demand": "demand.csv"}
    with open(d / "scenario.json", "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")
    return d


def read_scenario(directory) -> Scenario:
    d = Path(directory)
    meta_path = d / "scenario.json"
    if not meta_path.exists():
        raise ScenarioError(f"{d}: no scenario.json")
    meta = json.loads(meta_path.read_text())
    stations = read_stations_json(d / meta.get("stations", "stations.json"))
    users = read_users_csv(d / meta.get("users", "users.csv"))
    demand = read_demand_csv(d / meta.get("demand", "demand.csv"), origin_hour=int(meta.get("origin_hour", 0)))
    profile = MobilityProfile(**meta.get("profile", {}))
    return Scenario(stations, users, demand, profile, float(meta["horizon"])).validate()


# --------------------------------------------------------------- generators

def _uniform_in_disc(rng, center: GeoPoint, radius: float) -> GeoPoint:
    if radius <= 0:
        return center
    r = radius * math.sqrt(rng.random())
    theta = 2 * math.pi * rng.random()
    return offset_point(center, r * math.cos(theta), r * math.sin(theta))


def generate_users(trips: list[TripRecord], stations: list[Station], jitter_radius: float = 300.0,
                   seed: int = 0, start_hour: int = 0) -> list[UserScript]:
    """One scripted user per trip: origin/destination jittered in discs, time uniform in the hour.

    Hours before ``start_hour`` belong to the next day (a 7:00-to-7:00 extract
    keeps its early-morning trips at the end).
    """
    by_id = {s.id: s for s in stations}
    rng = np.random.default_rng(seed)
    users, skipped = [], 0
    for k, trip in enumerate(trips):
        a, b = by_id.get(trip.rent_station), by_id.get(trip.return_station)
        if a is None or b is None:
            skipped += 1
            continue
        hour = (int(trip.hour) - start_hour) % 24
        t = (hour + rng.random()) * 3600.0
        users.append(UserScript(k, t, _uniform_in_disc(rng, a.location, jitter_radius),
                                _uniform_in_disc(rng, b.location, jitter_radius)))
    if skipped:
        log.warning("generate_users: skipped %d trips with unknown stations", skipped)
    return users


def halve_capacities(stations: list[Station]) -> list[Station]:
    out = []
    for s in stations:
        cap = math.ceil(s.capacity / 2)
        out.append(replace(s, capacity=cap, bikes=min(s.bikes // 2, cap)))
    return out


MADRID = GeoPoint(40.4168, -3.7038)
# relative trip intensity per hour of day
HOURLY_PROFILE = [0.2, 0.1, 0.1, 0.05, 0.05, 0.1, 0.3, 0.8, 1.3, 1.1, 0.8, 0.8,
                  0.9, 1.0, 1.0, 0.9, 1.0, 1.2, 1.3, 1.2, 1.0, 0.8, 0.6, 0.4]


def synthesize(rows: int = 7, cols: int = 7, spacing: float = 350.0, n_trips: int = 2400,
               start_hour: int = 7, hours: int = 14, fill: float = 0.44, seed: int = 0,
               center: GeoPoint = MADRID) -> tuple[list[Station], list[TripRecord]]:
    """Grid city with a commuting pattern: periphery to centre in the morning, back at night.

    Capacities mimic a real system (12-30 slots, mostly 24) before halving.
    """
    rng = np.random.default_rng(seed)
    stations = []
    cy, cx = (rows - 1) / 2, (cols - 1) / 2
    radial = []
    for r in range(rows):
        for c in range(cols):
            north = (r - cy + rng.uniform(-0.15, 0.15)) * spacing
            east = (c - cx + rng.uniform(-0.15, 0.15)) * spacing
            cap = int(rng.choice([12, 15, 18, 20, 24, 24, 24, 24, 27, 30]))
            bikes = int(rng.binomial(cap, fill))
            stations.append(Station(len(stations), offset_point(center, north, east), cap, bikes))
            radial.append(math.hypot(r - cy, c - cx) / max(math.hypot(cy, cx), 1e-9))
    radial = np.array(radial)
    work = 0.3 + 2.0 * (1 - radial) ** 2
    home = 0.3 + 1.5 * radial
    n = len(stations)
    d = np.array([[distance(a.location, b.location) for b in stations] for a in stations])
    decay = np.exp(-d / 1500.0)
    np.fill_diagonal(decay, 0.0)

    hrs = [(start_hour + k) % 24 for k in range(hours)]
    weights = np.array([HOURLY_PROFILE[h] for h in hrs])
    per_hour = rng.multinomial(n_trips, weights / weights.sum())
    trips = []
    for h, count in zip(hrs, per_hour):
        if 7 <= h < 11:
            src, dst = home, work
        elif 16 <= h < 21:
            src, dst = work, home
        else:
            src, dst = np.ones(n), np.ones(n)
        origins = rng.choice(n, size=count, p=src / src.sum())
        for o in origins:
            w = dst * decay[o]
            trips.append(TripRecord(int(o), int(rng.choice(n, p=w / w.sum())), "synthetic", int(h)))
    return stations, trips


def synthetic_scenario(user_seed: int = 0, layout_seed: int = 0, halve: bool = True,
                       jitter_radius: float = 300.0, **kwargs) -> Scenario:
    """Stations, trips and demand depend on ``layout_seed`` only; ``user_seed`` jitters users."""
    start_hour = kwargs.get("start_hour", 7)
    hours = kwargs.get("hours", 14)
    stations, trips = synthesize(seed=layout_seed, **kwargs)
    if halve:
        stations = halve_capacities(stations)
    demand = build_demand_table(trips, 1, [s.id for s in stations], origin_hour=start_hour)
    users = generate_users(trips, stations, jitter_radius, user_seed, start_hour)
    return Scenario(stations, users, demand, MobilityProfile(), hours * 3600.0).validate()

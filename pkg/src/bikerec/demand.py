"""Hourly rent/return demand estimated from historical trips."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable

import numpy as np

log = logging.getLogger(__name__)

HOURS = 24
SECONDS_PER_HOUR = 3600.0
DAY = HOURS * SECONDS_PER_HOUR


@dataclass(frozen=True)
class TripRecord:
    rent_station: Hashable
    return_station: Hashable
    day: str
    hour: int

    def __post_init__(self):
        if not 0 <= int(self.hour) < HOURS:
            raise ValueError(f"hour out of range: {self.hour}")


@dataclass
class DemandTable:
    """Expected rent/return attempts per hour-of-day for each station.

    Simulation time ``t`` (seconds) maps to hour-of-day
    ``(origin_hour + t / 3600) mod 24``.
    """

    rents: dict[Hashable, np.ndarray]
    returns: dict[Hashable, np.ndarray]
    origin_hour: int = 0
    rejected: int = 0
    _cum: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        for table in (self.rents, self.returns):
            for sid, row in table.items():
                row = np.asarray(row, dtype=float)
                if row.shape != (HOURS,) or (row < 0).any():
                    raise ValueError(f"bad demand row for station {sid}")
                table[sid] = row
        for sid in set(self.rents) | set(self.returns):
            self.rents.setdefault(sid, np.zeros(HOURS))
            self.returns.setdefault(sid, np.zeros(HOURS))

    def __eq__(self, other):
        if not isinstance(other, DemandTable):
            return NotImplemented
        return (
            self.origin_hour == other.origin_hour
            and self.rents.keys() == other.rents.keys()
            and all(np.array_equal(self.rents[k], other.rents[k]) for k in self.rents)
            and all(np.array_equal(self.returns[k], other.returns[k]) for k in self.returns)
        )

    @property
    def stations(self):
        return list(self.rents)

    def _cumulative(self, kind: str, sid):
        key = (kind, sid)
        cum = self._cum.get(key)
        if cum is None:
            row = (self.rents if kind == "rent" else self.returns).get(sid)
            if row is None:
                row = np.zeros(HOURS)
            # rotate so index 0 is the hour containing t = 0
            row = np.roll(row, -self.origin_hour)
            cum = (row.tolist(), np.concatenate([[0.0], np.cumsum(row)]).tolist())
            self._cum[key] = cum
        return cum

    def _integral_to(self, kind: str, sid, t: float) -> float:
        """Expected attempts in [0, t]; negative t integrates backwards."""
        rates, cum = self._cumulative(kind, sid)
        hours = t / SECONDS_PER_HOUR
        days = math.floor(hours / HOURS)
        rem = hours - days * HOURS
        h = min(int(rem), HOURS - 1)
        return days * cum[HOURS] + cum[h] + (rem - h) * rates[h]

    def rate_at(self, kind: str, sid, t: float) -> float:
        """Instantaneous attempts per second at time t."""
        rates, _ = self._cumulative(kind, sid)
        h = int(math.floor(t / SECONDS_PER_HOUR)) % HOURS
        return rates[h] / SECONDS_PER_HOUR


def _window(table: DemandTable, kind: str, sid, t_a: float, t_b: float) -> float:
    if not t_a < t_b:
        raise ValueError(f"empty demand window [{t_a}, {t_b}]")
    v = table._integral_to(kind, sid, t_b) - table._integral_to(kind, sid, t_a)
    return max(v, 0.0)


def rent_demand(table: DemandTable, station, t_a: float, t_b: float) -> float:
    """Expected rental attempts at ``station`` in [t_a, t_b]."""
    return _window(table, "rent", station, t_a, t_b)


def return_demand(table: DemandTable, station, t_a: float, t_b: float) -> float:
    """Expected return attempts at ``station`` in [t_a, t_b]."""
    return _window(table, "return", station, t_a, t_b)


def window_rates(table: DemandTable, station, t_a: float, t_b: float) -> tuple[float, float]:
    """Per-second (return rate, rent rate) averaged over [t_a, t_b].

    A degenerate window falls back to the instantaneous hourly rate.
    """
    if t_b > t_a:
        span = t_b - t_a
        return (return_demand(table, station, t_a, t_b) / span,
                rent_demand(table, station, t_a, t_b) / span)
    return table.rate_at("return", station, t_a), table.rate_at("rent", station, t_a)


def build_demand_table(
    records: Iterable[TripRecord],
    n_days: int,
    stations: Iterable[Hashable] | None = None,
    return_lag: float = 0.0,
    origin_hour: int = 0,
) -> DemandTable:
    """Tally trips into per-hour expected attempts, averaged over ``n_days``.

    Returns are attributed to the hour containing ``rent_hour + return_lag``
    since trip logs carry no return time.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    known = None if stations is None else list(stations)
    ids = known if known is not None else []
    rents = {sid: np.zeros(HOURS) for sid in ids}
    returns = {sid: np.zeros(HOURS) for sid in ids}
    lag_hours = int(math.floor(return_lag / SECONDS_PER_HOUR))
    rejected = 0
    for r in records:
        if known is not None and (r.rent_station not in rents or r.return_station not in rents):
            rejected += 1
            continue
        for sid in (r.rent_station, r.return_station):
            if sid not in rents:
                rents[sid] = np.zeros(HOURS)
                returns[sid] = np.zeros(HOURS)
        h = int(r.hour)
        rents[r.rent_station][h] += 1
        returns[r.return_station][(h + lag_hours) % HOURS] += 1
    if rejected:
        log.warning("demand: rejected %d trips with unknown stations", rejected)
    for sid in rents:
        rents[sid] /= n_days
        returns[sid] /= n_days
    return DemandTable(rents, returns, origin_hour=origin_hour, rejected=rejected)


def read_trips_csv(path) -> list[TripRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"rent_station", "return_station", "day", "hour"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [
            TripRecord(_parse_id(row["rent_station"]), _parse_id(row["return_station"]),
                       row["day"], int(row["hour"]))
            for row in reader
        ]


def write_trips_csv(path, records: Iterable[TripRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rent_station", "return_station", "day", "hour"])
        for r in records:
            w.writerow([r.rent_station, r.return_station, r.day, r.hour])


def write_demand_csv(path, table: DemandTable) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["station", "hour", "rents_per_hour", "returns_per_hour"])
        for sid in table.rents:
            for h in range(HOURS):
                w.writerow([sid, h, repr(float(table.rents[sid][h])), repr(float(table.returns[sid][h]))])


def read_demand_csv(path, origin_hour: int = 0) -> DemandTable:
    rents: dict = {}
    returns: dict = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            sid = _parse_id(row["station"])
            h = int(row["hour"])
            rents.setdefault(sid, np.zeros(HOURS))[h] = float(row["rents_per_hour"])
            returns.setdefault(sid, np.zeros(HOURS))[h] = float(row["returns_per_hour"])
    return DemandTable(rents, returns, origin_hour=origin_hour)


def _parse_id(raw: str):
    """Station ids are ints when they look like ints, strings otherwise."""
    try:
        return int(raw)
    except ValueError:
        return raw


class AlignedDemand:
    """Vectorized demand lookups for stations in a fixed index order."""

    def __init__(self, table: DemandTable, ids):
        self.table = table
        n = len(ids)
        self.rates = {}
        self.cum = {}
        for kind in ("rent", "return"):
            rows = np.zeros((n, HOURS))
            src = table.rents if kind == "rent" else table.returns
            for i, sid in enumerate(ids):
                if sid in src:
                    rows[i] = np.roll(src[sid], -table.origin_hour)
            self.rates[kind] = rows
            self.cum[kind] = np.concatenate([np.zeros((n, 1)), np.cumsum(rows, axis=1)], axis=1)

    def _integral_to(self, kind, idx, t):
        rates, cum = self.rates[kind], self.cum[kind]
        hours = np.asarray(t, dtype=float) / SECONDS_PER_HOUR
        days = np.floor(hours / HOURS)
        rem = hours - days * HOURS
        h = np.minimum(rem.astype(np.int64), HOURS - 1)
        return days * cum[idx, HOURS] + cum[idx, h] + (rem - h) * rates[idx, h]

    def window(self, kind, idx, t_a, t_b):
        """Expected attempts in [t_a, t_b] per job (zero for empty windows)."""
        v = self._integral_to(kind, idx, t_b) - self._integral_to(kind, idx, t_a)
        return np.where(np.asarray(t_b) > np.asarray(t_a), np.maximum(v, 0.0), 0.0)

    def window_rates(self, idx, t_a, t_b):
        """Per-second (return rate, rent rate) arrays; instantaneous for empty windows."""
        t_a = np.asarray(t_a, dtype=float)
        t_b = np.broadcast_to(np.asarray(t_b, dtype=float), np.broadcast(t_a, t_b).shape)
        t_a = np.broadcast_to(t_a, t_b.shape)
        span = t_b - t_a
        ok = span > 0
        safe = np.where(ok, span, 1.0)
        h = (np.floor(t_a / SECONDS_PER_HOUR) % HOURS).astype(np.int64)
        out = []
        for kind in ("return", "rent"):
            avg = self.window(kind, idx, t_a, t_b) / safe
            inst = self.rates[kind][idx, h] / SECONDS_PER_HOUR
            out.append(np.where(ok, avg, inst))
        return out[0], out[1]

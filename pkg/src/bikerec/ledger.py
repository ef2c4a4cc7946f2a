"""Expected future rentals/returns implied by recommendations already issued."""
from __future__ import annotations

import bisect
import csv
import itertools
from dataclasses import dataclass
from typing import Hashable

RENTAL = -1
RETURN = +1


@dataclass(frozen=True)
class ExpectedEvent:
    station_id: Hashable
    arrival_time: float
    delta: int
    user_id: Hashable

    def __post_init__(self):
        if self.delta not in (RENTAL, RETURN):
            raise ValueError(f"delta must be -1 or +1, got {self.delta}")


class ExpectationLedger:
    """Per-station, time-ordered multiset of expected events.

    Equal arrival times keep insertion order.
    """

    def __init__(self):
        self._events: dict[Hashable, list[tuple[float, int, ExpectedEvent]]] = {}
        self._seq = itertools.count()

    def __len__(self):
        return sum(len(v) for v in self._events.values())

    def stations_with_events(self):
        return self._events.keys()

    def events(self, station_id=None) -> list[ExpectedEvent]:
        if station_id is not None:
            return [e for _, _, e in self._events.get(station_id, ())]
        return [e for sid in self._events for _, _, e in self._events[sid]]

    def commit(self, event: ExpectedEvent) -> "ExpectationLedger":
        bucket = self._events.setdefault(event.station_id, [])
        bisect.insort(bucket, (event.arrival_time, next(self._seq), event), key=lambda x: x[:2])
        return self

    def resolve(self, user_id, station_id) -> "ExpectationLedger":
        """Drop ``user_id``'s pending event at ``station_id``; missing is a no-op."""
        bucket = self._events.get(station_id)
        if bucket:
            for k, (_, _, e) in enumerate(bucket):
                if e.user_id == user_id:
                    del bucket[k]
                    break
            if not bucket:
                del self._events[station_id]
        return self

    def changes(self, station_id, t: float, t_exp: float) -> int:
        """Sum of deltas with t < arrival_time <= t_exp."""
        total = 0
        for at, _, e in self._events.get(station_id, ()):
            if at > t_exp:
                break
            if at > t:
                total += e.delta
        return total

    def _extrema_after(self, station_id, t_exp: float) -> tuple[int, int]:
        run = hi = lo = 0
        for at, _, e in self._events.get(station_id, ()):
            if at > t_exp:
                run += e.delta
                hi = max(hi, run)
                lo = min(lo, run)
        return hi, lo

    def committed_slots(self, station_id, t_exp: float) -> int:
        return self._extrema_after(station_id, t_exp)[0]

    def committed_bikes(self, station_id, t_exp: float) -> int:
        return -self._extrema_after(station_id, t_exp)[1]

    def estimated_bikes(self, station_id, bikes: int, t: float, t_exp: float) -> int:
        return bikes + self.changes(station_id, t, t_exp) - self.committed_bikes(station_id, t_exp)

    def estimated_slots(self, station_id, slots: int, t: float, t_exp: float) -> int:
        return slots - self.changes(station_id, t, t_exp) - self.committed_slots(station_id, t_exp)

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["station", "arrival_time", "delta", "user"])
            for e in self.events():
                w.writerow([e.station_id, repr(e.arrival_time), e.delta, e.user_id])

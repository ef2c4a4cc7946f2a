"""Domain types, geometry and travel-time arithmetic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Hashable

import numpy as np

EARTH_RADIUS_M = 6371000.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass
class Station:
    """A dock with fixed capacity. ``bikes`` is the only mutable field."""

    id: Hashable
    location: GeoPoint
    capacity: int
    bikes: int
    active: bool = True

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"station {self.id}: capacity must be >= 1")
        if not 0 <= self.bikes <= self.capacity:
            raise ValueError(f"station {self.id}: bikes {self.bikes} outside [0, {self.capacity}]")

    @property
    def slots(self) -> int:
        return self.capacity - self.bikes


@dataclass(frozen=True)
class RentRequest:
    user_id: Hashable
    origin: GeoPoint
    issued_at: float
    max_walk: float

    def __post_init__(self):
        if self.max_walk < 0:
            raise ValueError("max_walk must be >= 0")


@dataclass(frozen=True)
class ReturnRequest:
    user_id: Hashable
    current: GeoPoint
    destination: GeoPoint
    issued_at: float


@dataclass(frozen=True)
class MobilityProfile:
    walk_speed: float = 1.4
    bike_speed: float = 4.0
    velocity_factor: float = 0.614

    def __post_init__(self):
        if min(self.walk_speed, self.bike_speed, self.velocity_factor) <= 0:
            raise ValueError("speeds and velocity factor must be > 0")

    @property
    def effective_walk_speed(self) -> float:
        return self.walk_speed * self.velocity_factor

    @property
    def effective_bike_speed(self) -> float:
        return self.bike_speed * self.velocity_factor


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters. Accepts scalars or numpy arrays."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.minimum(a, 1.0)))


def distance(a: GeoPoint, b: GeoPoint) -> float:
    if a == b:
        return 0.0
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(min(h, 1.0)))


def walk_time(a: GeoPoint, b: GeoPoint, profile: MobilityProfile) -> float:
    return distance(a, b) / profile.effective_walk_speed


def bike_time(a: GeoPoint, b: GeoPoint, profile: MobilityProfile) -> float:
    return distance(a, b) / profile.effective_bike_speed


def offset_point(origin: GeoPoint, north_m: float, east_m: float) -> GeoPoint:
    """Point displaced by local metric offsets (small-distance approximation)."""
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    dlon = math.degrees(east_m / (EARTH_RADIUS_M * math.cos(math.radians(origin.lat))))
    return GeoPoint(origin.lat + dlat, origin.lon + dlon)


@dataclass
class Network:
    """Active stations plus the array views strategies and the simulator share.

    ``bikes`` is a numpy mirror of ``Station.bikes``; mutate through
    :meth:`take_bike` / :meth:`return_bike` so both stay in step.
    """

    stations: list[Station]
    profile: MobilityProfile = field(default_factory=MobilityProfile)

    def __post_init__(self):
        ids = [s.id for s in self.stations]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate station ids")
        # private copies: a run must never mutate the scenario's stations
        self.stations = [replace(s) for s in self.stations if s.active]
        self.index = {s.id: i for i, s in enumerate(self.stations)}
        self.ids = [s.id for s in self.stations]
        self.lat = np.array([s.location.lat for s in self.stations], dtype=float)
        self.lon = np.array([s.location.lon for s in self.stations], dtype=float)
        self.capacity = np.array([s.capacity for s in self.stations], dtype=np.int64)
        self.bikes = np.array([s.bikes for s in self.stations], dtype=np.int64)
        # tie-break rank: position of each station id in ascending id order
        order = sorted(range(len(ids := self.ids)), key=lambda i: ids[i])
        self.id_rank = np.empty(len(order), dtype=np.int64)
        self.id_rank[order] = np.arange(len(order))
        self.dist = haversine(self.lat[:, None], self.lon[:, None], self.lat[None, :], self.lon[None, :])
        np.fill_diagonal(self.dist, 0.0)

    def __len__(self):
        return len(self.stations)

    @property
    def slots(self) -> np.ndarray:
        return self.capacity - self.bikes

    def distances_from(self, p: GeoPoint) -> np.ndarray:
        return haversine(p.lat, p.lon, self.lat, self.lon)

    def walk_seconds(self, meters):
        return meters / self.profile.effective_walk_speed

    def bike_seconds(self, meters):
        return meters / self.profile.effective_bike_speed

    def take_bike(self, i: int) -> bool:
        if self.bikes[i] <= 0:
            return False
        self.bikes[i] -= 1
        self.stations[i].bikes -= 1
        return True

    def return_bike(self, i: int) -> bool:
        if self.bikes[i] >= self.capacity[i]:
            return False
        self.bikes[i] += 1
        self.stations[i].bikes += 1
        return True

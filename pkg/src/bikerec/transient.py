"""Transient M/M/1/K analysis of a station's bike count.

State j is the number of docked bikes. Returns arrive at rate ``lam``,
rentals are served at rate ``mu`` (both per second).
"""
from __future__ import annotations

import collections
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .demand import DemandTable, rent_demand, return_demand, window_rates
from .ledger import ExpectationLedger
from .model import MobilityProfile, RentRequest, ReturnRequest, Station, bike_time, walk_time

log = logging.getLogger(__name__)

# counters for conditions worth a look but not an error
DIAGNOSTICS: collections.Counter = collections.Counter()

EMPTY = "empty"
FULL = "full"
RENT = "rent"
RETURN = "return"


@dataclass(frozen=True)
class QueueRates:
    lam: float
    mu: float

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError("rates must be >= 0")


@dataclass(frozen=True)
class ImpactPair:
    ehf_delta: float
    erf_delta: float


@dataclass(frozen=True)
class SolverConfig:
    step_cap: float = 5.0
    min_steps: int = 50
    renorm_tol: float = 1e-12
    # h * (lam + mu) bound; keeps RK4 well inside its stability region
    stability: float = 0.5
    # Euler-Maclaurin endpoint term on the trapezoid averages (False: plain trapezoid)
    end_correction: bool = True

    def step(self, duration: float, rate_sum: float = 0.0) -> float:
        """RK4 step: min(step_cap, duration / min_steps, stability / (lam + mu))."""
        h = self.step_cap if duration <= 0 else min(self.step_cap, duration / max(self.min_steps, 2))
        if rate_sum > 0:
            h = min(h, self.stability / rate_sum)
        return h


DEFAULT_SOLVER = SolverConfig()


def check_distribution(pi, tol: float = 1e-9) -> np.ndarray:
    pi = np.asarray(pi, dtype=float)
    if pi.ndim != 1 or pi.size < 1:
        raise ValueError("distribution must be a non-empty vector")
    if (pi < -tol).any() or (pi > 1 + tol).any() or abs(pi.sum() - 1.0) > tol:
        raise ValueError(f"not a probability vector (sum={pi.sum()!r})")
    return pi


def kolmogorov_rhs(pi, rates: QueueRates) -> np.ndarray:
    return kernels.rhs(np.ascontiguousarray(pi, dtype=float), rates.lam, rates.mu)


def _finish(p: np.ndarray) -> np.ndarray:
    worst = p.min()
    if worst < -1e-12:
        DIAGNOSTICS["negative_mass"] += 1
        log.debug("evolve: component %.3g below zero", worst)
    np.clip(p, 0.0, None, out=p)
    return p


def evolve(pi0, rates: QueueRates, duration: float, step: float | None = None,
           cfg: SolverConfig = DEFAULT_SOLVER) -> np.ndarray:
    """RK4-integrate the forward equations over ``duration`` seconds."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    h = cfg.step(duration, rates.lam + rates.mu) if step is None else step
    if h <= 0:
        raise ValueError("step must be > 0")
    p = kernels.evolve(np.ascontiguousarray(pi0, dtype=float), rates.lam, rates.mu,
                       float(duration), float(h), cfg.renorm_tol)
    return _finish(p)


def point_mass(capacity: int, index: int) -> np.ndarray:
    p = np.zeros(capacity + 1)
    p[index] = 1.0
    return p


def clamp_index(j: int, capacity: int) -> int:
    if j < 0 or j > capacity:
        DIAGNOSTICS["initial_index_clamped"] += 1
        return 0 if j < 0 else capacity
    return j


def initial_distribution(station: Station, ledger: ExpectationLedger, t: float, t_exp: float) -> np.ndarray:
    """Point mass at bikes(t) + changes(t, t_exp), clamped into [0, K]."""
    j = station.bikes + ledger.changes(station.id, t, t_exp)
    return point_mass(station.capacity, clamp_index(j, station.capacity))


def _arrival_distribution(station, ledger, demand, t, t_exp, cfg):
    pi0 = initial_distribution(station, ledger, t, t_exp)
    lam, mu = window_rates(demand, station.id, t, t_exp)
    return evolve(pi0, QueueRates(lam, mu), t_exp - t, cfg=cfg)


def bike_prob(station: Station, req: RentRequest, ledger: ExpectationLedger, demand: DemandTable,
              profile: MobilityProfile = MobilityProfile(), cfg: SolverConfig = DEFAULT_SOLVER) -> float:
    """P(at least 1 + committed bikes docked when the user arrives)."""
    t = req.issued_at
    t_exp = t + walk_time(req.origin, station.location, profile)
    pi = _arrival_distribution(station, ledger, demand, t, t_exp, cfg)
    lo = 1 + ledger.committed_bikes(station.id, t_exp)
    return float(pi[lo:].sum()) if lo <= station.capacity else 0.0


def slot_prob(station: Station, req: ReturnRequest, ledger: ExpectationLedger, demand: DemandTable,
              profile: MobilityProfile = MobilityProfile(), cfg: SolverConfig = DEFAULT_SOLVER) -> float:
    """P(at least 1 + committed slots free when the user arrives)."""
    t = req.issued_at
    t_exp = t + bike_time(req.current, station.location, profile)
    pi = _arrival_distribution(station, ledger, demand, t, t_exp, cfg)
    hi = station.capacity - (1 + ledger.committed_slots(station.id, t_exp))
    return float(pi[: hi + 1].sum()) if hi >= 0 else 0.0


def avg_boundary_prob(pi0, rates: QueueRates, t_a: float, t_b: float, boundary: str,
                      step: float | None = None, cfg: SolverConfig = DEFAULT_SOLVER) -> float:
    """Time-average of P(empty) or P(full) over [t_a, t_b], trapezoid on RK4 samples."""
    if not t_b > t_a:
        raise ValueError(f"need t_b > t_a, got [{t_a}, {t_b}]")
    if boundary not in (EMPTY, FULL):
        raise ValueError(f"boundary must be {EMPTY!r} or {FULL!r}")
    span = t_b - t_a
    h = cfg.step(span, rates.lam + rates.mu) if step is None else step
    _, a0, aK = kernels.evolve_average(np.ascontiguousarray(pi0, dtype=float), rates.lam, rates.mu,
                                       float(span), float(h), cfg.renorm_tol, cfg.end_correction)
    return a0 if boundary == EMPTY else aK


def _boundary_averages(pi0, lam, mu, span, cfg):
    _, a0, aK = kernels.evolve_average(np.ascontiguousarray(pi0, dtype=float), lam, mu,
                                       float(span), float(cfg.step(span, lam + mu)), cfg.renorm_tol,
                                       cfg.end_correction)
    return a0, aK


def expected_failures(station: Station, t_a: float, t_b: float, pi0, demand: DemandTable,
                      cfg: SolverConfig = DEFAULT_SOLVER) -> tuple[float, float]:
    """(expected failed rentals, expected failed returns) in [t_a, t_b]."""
    rents = rent_demand(demand, station.id, t_a, t_b)
    returns = return_demand(demand, station.id, t_a, t_b)
    span = t_b - t_a
    a0, aK = _boundary_averages(pi0, returns / span, rents / span, span, cfg)
    return a0 * rents, aK * returns


def shift_distribution(pi, action: str) -> np.ndarray:
    """Distribution after one bike is taken (``rent``) or docked (``return``)."""
    pi = np.asarray(pi, dtype=float)
    out = np.zeros_like(pi)
    if pi.size == 1:
        return pi.copy()
    if action == RENT:
        out[0] = pi[0] + pi[1]
        out[1:-1] = pi[2:]
    elif action == RETURN:
        out[-1] = pi[-1] + pi[-2]
        out[1:-1] = pi[:-2]
    else:
        raise ValueError(f"action must be {RENT!r} or {RETURN!r}")
    return out


def impact_from_rates(pi_arrival, rents: float, returns: float, tf: float, action: str,
                      cfg: SolverConfig = DEFAULT_SOLVER) -> ImpactPair:
    """Impact of one action given expected attempt counts over the next ``tf`` seconds."""
    if rents == 0.0 and returns == 0.0:
        return ImpactPair(0.0, 0.0)
    lam, mu = returns / tf, rents / tf
    base0, baseK = _boundary_averages(pi_arrival, lam, mu, tf, cfg)
    sh0, shK = _boundary_averages(shift_distribution(pi_arrival, action), lam, mu, tf, cfg)
    return ImpactPair((sh0 - base0) * rents, (shK - baseK) * returns)


def action_impact(station: Station, pi_arrival, t_exp: float, tf: float, action: str,
                  demand: DemandTable, cfg: SolverConfig = DEFAULT_SOLVER) -> ImpactPair:
    """Change in expected failures over [t_exp, t_exp + tf] caused by one rent/return."""
    if not tf > 0:
        raise ValueError("tf must be > 0")
    rents = rent_demand(demand, station.id, t_exp, t_exp + tf)
    returns = return_demand(demand, station.id, t_exp, t_exp + tf)
    return impact_from_rates(pi_arrival, rents, returns, tf, action, cfg)


def stationary_distribution(capacity: int, rates: QueueRates) -> np.ndarray:
    """Closed-form M/M/1/K stationary law (used as a reference)."""
    if rates.mu == 0:
        return point_mass(capacity, capacity) if rates.lam > 0 else None
    rho = rates.lam / rates.mu
    j = np.arange(capacity + 1)
    if math.isclose(rho, 1.0, rel_tol=1e-12):
        return np.full(capacity + 1, 1.0 / (capacity + 1))
    # log-space avoids overflow for large rho ** K
    logw = j * math.log(rho) if rho > 0 else np.where(j == 0, 0.0, -np.inf)
    w = np.exp(logw - np.max(logw))
    return w / w.sum()

"""Station recommendation strategies.

Each strategy maps a rent or return request plus a system snapshot to a
ranking of station ids, best first. Ties on the sort key break by ascending
station id.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import kernels
from .demand import AlignedDemand, DemandTable
from .ledger import ExpectationLedger
from .model import Network, RentRequest, ReturnRequest
from .transient import (DEFAULT_SOLVER, RENT, RETURN, SolverConfig, clamp_index,
                        point_mass, _finish)

KINDS = ("SD", "ISD", "DR", "DER", "EC", "ECFI")


@dataclass
class StrategyConfig:
    kind: str = "SD"
    md: float = 600.0
    MD: float = 500.0
    rent_fail_cost: float = 3000.0
    return_fail_cost: float = 2000.0
    f_rent_fc: float = 3000.0
    f_return_fc: float = 1000.0
    tf: float = 3600.0
    f: float = 1.0

    def __post_init__(self):
        self.kind = self.kind.upper()
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {KINDS}")
        costs = (self.rent_fail_cost, self.return_fail_cost, self.f_rent_fc, self.f_return_fc)
        if min(costs) < 0:
            raise ValueError("fail costs must be >= 0")
        if self.md < 0 or self.MD < 0:
            raise ValueError("distances must be >= 0")
        if self.f < 0:
            raise ValueError("f must be >= 0")
        if self.kind == "ECFI" and not self.tf > 0:
            raise ValueError("tf must be > 0 for ECFI")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def label(self) -> str:
        if self.kind == "EC":
            return f"EC({self.rent_fail_cost:g}/{self.return_fail_cost:g})"
        if self.kind == "ECFI":
            return (f"ECFI({self.rent_fail_cost:g}/{self.return_fail_cost:g}/{self.f_rent_fc:g}/"
                    f"{self.f_return_fc:g},tf={self.tf:g},f={self.f:g})")
        return self.kind


@dataclass
class Snapshot:
    """What a strategy sees at recommendation time. Strategies never mutate it."""

    network: Network
    ledger: ExpectationLedger
    demand: DemandTable
    clock: float = 0.0
    solver: SolverConfig = DEFAULT_SOLVER
    _aligned: AlignedDemand | None = field(default=None, repr=False)

    @property
    def aligned(self) -> AlignedDemand:
        if self._aligned is None or self._aligned.table is not self.demand:
            self._aligned = AlignedDemand(self.demand, self.network.ids)
        return self._aligned


def _order(net: Network, idx: np.ndarray, key: np.ndarray) -> list:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return []
    perm = np.lexsort((net.id_rank[idx], key))
    return [net.ids[i] for i in idx[perm]]


# ---------------------------------------------------------------- baselines

def rank_rent_sd(req: RentRequest, snap: Snapshot) -> list:
    net = snap.network
    d = net.distances_from(req.origin)
    cand = np.flatnonzero(d <= req.max_walk)
    return _order(net, cand, d[cand])


def rank_return_sd(req: ReturnRequest, snap: Snapshot) -> list:
    net = snap.network
    d = net.distances_from(req.destination)
    return _order(net, np.arange(len(net)), d)


def rank_rent_isd(req: RentRequest, snap: Snapshot) -> list:
    net = snap.network
    d = net.distances_from(req.origin)
    cand = np.flatnonzero((d <= req.max_walk) & (net.bikes > 0))
    return _order(net, cand, d[cand])


def rank_return_isd(req: ReturnRequest, snap: Snapshot) -> list:
    net = snap.network
    d = net.distances_from(req.destination)
    cand = np.flatnonzero(net.slots > 0)
    return _order(net, cand, d[cand])


def rank_rent_dr(req: RentRequest, snap: Snapshot) -> list:
    net = snap.network
    d = net.distances_from(req.origin)
    cand = np.flatnonzero((d <= req.max_walk) & (net.bikes > 0))
    return _order(net, cand, d[cand] / net.bikes[cand])


def rank_return_dr(req: ReturnRequest, snap: Snapshot) -> list:
    net = snap.network
    d = net.distances_from(req.destination)
    slots = net.slots
    cand = np.flatnonzero(slots > 0)
    return _order(net, cand, d[cand] / slots[cand])


# ------------------------------------------------- ledger-based estimates

def _ledger_terms(snap: Snapshot, idx, t, t_exp):
    """Per job: changes(t, t_exp), committed bikes and slots at t_exp."""
    ledger, ids = snap.ledger, snap.network.ids
    m = len(idx)
    ch = np.zeros(m, dtype=np.int64)
    cb = np.zeros(m, dtype=np.int64)
    cs = np.zeros(m, dtype=np.int64)
    busy = ledger.stations_with_events()
    if not busy:
        return ch, cb, cs
    t = np.broadcast_to(np.asarray(t, dtype=float), (m,))
    for k in range(m):
        sid = ids[idx[k]]
        if sid in busy:
            ch[k] = ledger.changes(sid, t[k], t_exp[k])
            cb[k] = ledger.committed_bikes(sid, t_exp[k])
            cs[k] = ledger.committed_slots(sid, t_exp[k])
    return ch, cb, cs


def estimated_bikes(snap: Snapshot, idx, t_exp) -> np.ndarray:
    ch, cb, _ = _ledger_terms(snap, idx, snap.clock, t_exp)
    return snap.network.bikes[idx] + ch - cb


def estimated_slots(snap: Snapshot, idx, t_exp) -> np.ndarray:
    ch, _, cs = _ledger_terms(snap, idx, snap.clock, t_exp)
    return snap.network.slots[idx] - ch - cs


def rank_rent_der(req: RentRequest, snap: Snapshot) -> list:
    net = snap.network
    d = net.distances_from(req.origin)
    cand = np.flatnonzero(d <= req.max_walk)
    est = estimated_bikes(snap, cand, req.issued_at + net.walk_seconds(d[cand]))
    keep = est > 0
    cand, est = cand[keep], est[keep]
    return _order(net, cand, d[cand] / est)


def rank_return_der(req: ReturnRequest, snap: Snapshot) -> list:
    net = snap.network
    cand = np.arange(len(net))
    t_exp = req.issued_at + net.bike_seconds(net.distances_from(req.current))
    est = estimated_slots(snap, cand, t_exp)
    keep = est > 0
    cand, est = cand[keep], est[keep]
    d = net.distances_from(req.destination)
    return _order(net, cand, d[cand] / est)


# ------------------------------------------------------- queue-based costs

def _steps(cfg: SolverConfig, dur, rate_sum) -> np.ndarray:
    """Vectorised SolverConfig.step."""
    h = np.minimum(cfg.step_cap, np.where(dur > 0, dur / max(cfg.min_steps, 2), cfg.step_cap))
    return np.where(rate_sum > 0, np.minimum(h, cfg.stability / np.where(rate_sum > 0, rate_sum, 1.0)), h)


def arrival_probs(snap: Snapshot, idx, t_exp, kind: str, t0=None) -> np.ndarray:
    """bike_prob (kind='bike') or slot_prob (kind='slot') for each (station, arrival time).

    The chain starts at ``t0`` (default: snapshot clock) from the ledger-adjusted
    point mass and runs to ``t_exp`` under the window-averaged demand rates.
    """
    net = snap.network
    idx = np.asarray(idx, dtype=np.int64)
    m = idx.size
    if m == 0:
        return np.zeros(0)
    t0 = snap.clock if t0 is None else t0
    t_exp = np.asarray(t_exp, dtype=float)
    t0v = np.broadcast_to(np.asarray(t0, dtype=float), (m,))
    ch, cb, cs = _ledger_terms(snap, idx, t0v, t_exp)
    cap = net.capacity[idx]
    start = net.bikes[idx] + ch
    if (start < 0).any() or (start > cap).any():
        start = np.array([clamp_index(int(s), int(c)) for s, c in zip(start, cap)], dtype=np.int64)
    lam, mu = snap.aligned.window_rates(idx, t0v, t_exp)
    dur = np.maximum(t_exp - t0v, 0.0)
    cfg = snap.solver
    h = _steps(cfg, dur, lam + mu)
    if kind == "bike":
        lo, hi = 1 + cb, cap
    else:
        lo, hi = np.zeros(m, dtype=np.int64), cap - 1 - cs
    return kernels.point_mass_probs(
        np.ascontiguousarray(cap, dtype=np.int64), np.ascontiguousarray(start, dtype=np.int64),
        np.ascontiguousarray(lam), np.ascontiguousarray(mu), np.ascontiguousarray(dur),
        np.ascontiguousarray(h), np.ascontiguousarray(lo, dtype=np.int64),
        np.ascontiguousarray(hi, dtype=np.int64), cfg.renorm_tol)


def arrival_distribution(snap: Snapshot, i: int, t_exp: float) -> np.ndarray:
    """Full state distribution of station index ``i`` at ``t_exp``."""
    net = snap.network
    t = snap.clock
    sid = net.ids[i]
    cap = int(net.capacity[i])
    start = clamp_index(int(net.bikes[i]) + snap.ledger.changes(sid, t, t_exp), cap)
    dur = t_exp - t
    p = point_mass(cap, start)
    if dur <= 0:
        return p
    lam, mu = snap.aligned.window_rates(np.array([i]), np.array([t]), np.array([t_exp]))
    lam, mu = float(lam[0]), float(mu[0])
    h = snap.solver.step(dur, lam + mu)
    return _finish(kernels.evolve(p, lam, mu, dur, h, snap.solver.renorm_tol))


def local_rent_cost(walk_s, prob, fail_cost):
    """Walking time plus the expected penalty of finding no bike."""
    return walk_s + (1.0 - prob) * fail_cost


def local_return_cost(bike_s, walk_dest_s, prob, fail_cost):
    """Cycling time plus expected walk-or-penalty; clamped when the walk alone exceeds the penalty."""
    cost = bike_s + prob * walk_dest_s + (1.0 - prob) * fail_cost
    return np.where(walk_dest_s > fail_cost, bike_s + walk_dest_s, cost)


def local_rent_costs(req: RentRequest, snap: Snapshot, cfg: StrategyConfig, idx=None):
    net = snap.network
    d = net.distances_from(req.origin)
    if idx is None:
        idx = np.flatnonzero(d <= req.max_walk)
    walk = net.walk_seconds(d[idx])
    t_exp = req.issued_at + walk
    p = arrival_probs(snap, idx, t_exp, "bike", t0=req.issued_at)
    return idx, local_rent_cost(walk, p, cfg.rent_fail_cost), p, t_exp


def local_return_costs(req: ReturnRequest, snap: Snapshot, cfg: StrategyConfig, idx=None):
    net = snap.network
    if idx is None:
        idx = np.arange(len(net))
    ride = net.bike_seconds(net.distances_from(req.current)[idx])
    walk_dest = net.walk_seconds(net.distances_from(req.destination)[idx])
    t_exp = req.issued_at + ride
    p = arrival_probs(snap, idx, t_exp, "slot", t0=req.issued_at)
    return idx, local_return_cost(ride, walk_dest, p, cfg.return_fail_cost), p, t_exp


def rank_rent_ec(req: RentRequest, snap: Snapshot, cfg: StrategyConfig) -> list:
    idx, cost, _, _ = local_rent_costs(req, snap, cfg)
    return _order(snap.network, idx, cost)


def rank_return_ec(req: ReturnRequest, snap: Snapshot, cfg: StrategyConfig) -> list:
    idx, cost, _, _ = local_return_costs(req, snap, cfg)
    return _order(snap.network, idx, cost)


# ------------------------------------------------------------ future impact

def _neighbors(net: Network, i: int, radius: float) -> np.ndarray:
    row = net.dist[i]
    nb = np.flatnonzero(row <= radius)
    return nb[nb != i]


def neighborhood_costs(snap: Snapshot, cfg: StrategyConfig, centers, t_mid, need_rent=None, need_return=None):
    """Cheapest alternative (rent cost, return cost) around each centre station.

    A hypothetical user stands at the centre station at ``t_mid`` and is
    priced with the future fail costs. No neighbour within MD gives the
    bare future fail cost.
    """
    net = snap.network
    centers = np.asarray(centers, dtype=np.int64)
    n = centers.size
    need_rent = np.ones(n, bool) if need_rent is None else need_rent
    need_return = np.ones(n, bool) if need_return is None else need_return
    rent_cost = np.full(n, float(cfg.f_rent_fc))
    return_cost = np.full(n, float(cfg.f_return_fc))
    owners, nbs = [], []
    for k, i in enumerate(centers):
        if need_rent[k] or need_return[k]:
            nb = _neighbors(net, int(i), cfg.MD)
            owners.append(np.full(nb.size, k))
            nbs.append(nb)
    if not nbs:
        return rent_cost, return_cost
    owner = np.concatenate(owners)
    nb = np.concatenate(nbs)
    if nb.size == 0:
        return rent_cost, return_cost
    d = net.dist[centers[owner], nb]
    t_mid = np.asarray(t_mid, dtype=float)[owner]
    rent_rows = need_rent[owner]
    ret_rows = need_return[owner]
    if rent_rows.any():
        o, j = owner[rent_rows], nb[rent_rows]
        walk = net.walk_seconds(d[rent_rows])
        p = arrival_probs(snap, j, t_mid[rent_rows] + walk, "bike")
        c = local_rent_cost(walk, p, cfg.f_rent_fc)
        best = np.full(n, np.inf)
        np.minimum.at(best, o, c)
        rent_cost = np.where(np.isfinite(best), best, rent_cost)
    if ret_rows.any():
        o, j = owner[ret_rows], nb[ret_rows]
        ride = net.bike_seconds(d[ret_rows])
        walk_back = net.walk_seconds(d[ret_rows])
        p = arrival_probs(snap, j, t_mid[ret_rows] + ride, "slot")
        c = local_return_cost(ride, walk_back, p, cfg.f_return_fc)
        best = np.full(n, np.inf)
        np.minimum.at(best, o, c)
        return_cost = np.where(np.isfinite(best), best, return_cost)
    return rent_cost, return_cost


def future_impacts(snap: Snapshot, cfg: StrategyConfig, idx, t_exp, action: str):
    """(ehf_delta, erf_delta) per candidate for one rent/return at ``t_exp``.

    Batched equivalent of arrival_distribution followed by impact_from_rates.
    """
    net = snap.network
    idx = np.asarray(idx, dtype=np.int64)
    m = idx.size
    t_exp = np.asarray(t_exp, dtype=float)
    aligned = snap.aligned
    rents = aligned.window("rent", idx, t_exp, t_exp + cfg.tf)
    returns = aligned.window("return", idx, t_exp, t_exp + cfg.tf)
    t0 = np.full(m, float(snap.clock))
    ch, _, _ = _ledger_terms(snap, idx, t0, t_exp)
    cap = net.capacity[idx]
    start = net.bikes[idx] + ch
    if (start < 0).any() or (start > cap).any():
        start = np.array([clamp_index(int(s), int(c)) for s, c in zip(start, cap)], dtype=np.int64)
    lam1, mu1 = aligned.window_rates(idx, t0, t_exp)
    dur1 = np.maximum(t_exp - t0, 0.0)
    solver = snap.solver
    lam2, mu2 = returns / cfg.tf, rents / cfg.tf
    out = kernels.arrival_impacts(
        np.ascontiguousarray(cap, dtype=np.int64), np.ascontiguousarray(start, dtype=np.int64),
        np.ascontiguousarray(lam1), np.ascontiguousarray(mu1), np.ascontiguousarray(dur1),
        np.ascontiguousarray(_steps(solver, dur1, lam1 + mu1)),
        np.ascontiguousarray(lam2), np.ascontiguousarray(mu2), float(cfg.tf),
        np.ascontiguousarray(_steps(solver, np.full(m, float(cfg.tf)), lam2 + mu2)),
        -1 if action == RENT else 1, solver.renorm_tol, solver.end_correction)
    return (out[2] - out[0]) * rents, (out[3] - out[1]) * returns


def global_costs(snap: Snapshot, cfg: StrategyConfig, idx, local, prob, t_exp, action: str):
    """Local cost plus f * success probability * priced future impact."""
    if cfg.f == 0 or idx.size == 0:
        return local.copy()
    live = np.flatnonzero(prob != 0.0)
    ehf = np.zeros(idx.size)
    erf = np.zeros(idx.size)
    if live.size:
        ehf[live], erf[live] = future_impacts(snap, cfg, idx[live], np.asarray(t_exp)[live], action)
    need_rent = ehf != 0.0
    need_return = erf != 0.0
    rent_cost, return_cost = neighborhood_costs(snap, cfg, idx, t_exp + cfg.tf / 2, need_rent, need_return)
    impact = np.where(need_rent, ehf * rent_cost, 0.0) + np.where(need_return, erf * return_cost, 0.0)
    return local + cfg.f * prob * impact


def global_rent_costs(req: RentRequest, snap: Snapshot, cfg: StrategyConfig, idx=None):
    idx, local, p, t_exp = local_rent_costs(req, snap, cfg, idx)
    return idx, global_costs(snap, cfg, idx, local, p, t_exp, RENT)


def global_return_costs(req: ReturnRequest, snap: Snapshot, cfg: StrategyConfig, idx=None):
    idx, local, p, t_exp = local_return_costs(req, snap, cfg, idx)
    return idx, global_costs(snap, cfg, idx, local, p, t_exp, RETURN)


def rank_rent_ecfi(req: RentRequest, snap: Snapshot, cfg: StrategyConfig) -> list:
    idx, cost = global_rent_costs(req, snap, cfg)
    return _order(snap.network, idx, cost)


def rank_return_ecfi(req: ReturnRequest, snap: Snapshot, cfg: StrategyConfig) -> list:
    idx, cost = global_return_costs(req, snap, cfg)
    return _order(snap.network, idx, cost)


_RENT = {"SD": rank_rent_sd, "ISD": rank_rent_isd, "DR": rank_rent_dr, "DER": rank_rent_der}
_RETURN = {"SD": rank_return_sd, "ISD": rank_return_isd, "DR": rank_return_dr, "DER": rank_return_der}
_RENT_COST = {"EC": rank_rent_ec, "ECFI": rank_rent_ecfi}
_RETURN_COST = {"EC": rank_return_ec, "ECFI": rank_return_ecfi}


class Strategy:
    """Dispatch a :class:`StrategyConfig` to its rent/return rankers."""

    def __init__(self, cfg: StrategyConfig):
        self.cfg = cfg

    def rank_rent(self, req: RentRequest, snap: Snapshot) -> list:
        k = self.cfg.kind
        if k in _RENT:
            return _RENT[k](req, snap)
        return _RENT_COST[k](req, snap, self.cfg)

    def rank_return(self, req: ReturnRequest, snap: Snapshot) -> list:
        k = self.cfg.kind
        if k in _RETURN:
            return _RETURN[k](req, snap)
        return _RETURN_COST[k](req, snap, self.cfg)

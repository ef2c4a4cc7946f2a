"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (``pytest tests/test_acceptance.py``), then asserts it.
"""
import statistics
import time

import numpy as np
import pytest

from bikerec.demand import DemandTable
from bikerec.ledger import RENTAL, RETURN, ExpectationLedger, ExpectedEvent
from bikerec.model import GeoPoint, MobilityProfile, Station, offset_point
from bikerec.scenario import Scenario, synthetic_scenario
from bikerec.sim import UserScript, run
from bikerec.strategies import KINDS, StrategyConfig
from bikerec.transient import (EMPTY, FULL, RENT, RETURN as RETURN_ACTION, DEFAULT_SOLVER, QueueRates,
                               action_impact, avg_boundary_prob, evolve)

from conftest import ACCEPTANCE
from oracles import stationary


def verdict(n, ok, detail):
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def inversions(seq, direction):
    """Adjacent pairs that break a non-increasing (-1) or non-decreasing (+1) order."""
    return sum(1 for a, b in zip(seq, seq[1:]) if direction * (b - a) < 0)


# ---------------------------------------------------------------- 1

@pytest.mark.xfail(strict=True, reason="t = 50/(lam+mu) is shorter than the relaxation time set by the "
                                       "spectral gap for K near 30 and rho near 1; see decisions ledger")
def test_c1_stationary_limit():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        K = int(rng.integers(1, 31))
        rho = float(rng.uniform(0.2, 5.0))
        mu = float(rng.uniform(1e-4, 1e-2))
        lam = rho * mu
        pi0 = rng.dirichlet(np.ones(K + 1))
        p = evolve(pi0, QueueRates(lam, mu), 50.0 / (lam + mu))
        worst = max(worst, float(np.abs(p - stationary(K, rho)).max()))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 1.0
    verdict(1, ok, f"max-norm {worst:.2e} (tol 1e-5), {elapsed:.2f}s (< 1s)")
    assert ok


# ---------------------------------------------------------------- 2

def gillespie(pi0, lam, mu, t, n, rng):
    K = len(pi0) - 1
    s = rng.choice(K + 1, size=n, p=pi0)
    clock = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    while alive.any():
        up = lam * (s < K)
        down = mu * (s > 0)
        rate = up + down
        alive &= rate > 0
        with np.errstate(divide="ignore"):
            clock = np.where(alive, clock + rng.exponential(1.0, n) / np.where(rate > 0, rate, 1.0), clock)
        alive &= clock <= t
        birth = rng.random(n) * np.where(rate > 0, rate, 1.0) < up
        s = np.where(alive, s + np.where(birth, 1, -1), s)
    return np.bincount(s, minlength=K + 1) / n


def test_c2_monte_carlo():
    rng = np.random.default_rng(7)
    n = 100_000
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(5):
        K = int(rng.integers(1, 6))
        lam, mu = rng.uniform(1e-3, 1e-2, 2)
        t = float(rng.uniform(120, 900))
        pi0 = rng.dirichlet(np.ones(K + 1))
        want = evolve(pi0, QueueRates(lam, mu), t)
        emp = gillespie(pi0, lam, mu, t, n, rng)
        se = np.sqrt(np.maximum(want * (1 - want), 1e-300) / n)
        worst = max(worst, float((np.abs(emp - want) / se).max()))
    elapsed = time.perf_counter() - t0
    ok = worst <= 3.0 and elapsed < 30.0
    verdict(2, ok, f"worst deviation {worst:.2f} SE (<= 3), {elapsed:.1f}s (< 30s)")
    assert ok


# ---------------------------------------------------------------- 3

def test_c3_quadrature():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(10):
        K = int(rng.integers(1, 31))
        lam, mu = rng.uniform(0, 0.02, 2)
        span = float(rng.uniform(300, 7200))
        pi0 = rng.dirichlet(np.ones(K + 1))
        rates = QueueRates(lam, mu)
        h = DEFAULT_SOLVER.step(span, lam + mu)
        for b in (EMPTY, FULL):
            coarse = avg_boundary_prob(pi0, rates, 0.0, span, b)
            ref = avg_boundary_prob(pi0, rates, 0.0, span, b, step=h / 100)
            worst = max(worst, abs(coarse - ref))
    ok = worst < 1e-5
    verdict(3, ok, f"max |default - step/100| {worst:.2e} (< 1e-5)")
    assert ok


# ---------------------------------------------------------------- 4

def test_c4_figure_one():
    led = ExpectationLedger()
    for k, d in enumerate([RENTAL, RETURN, RENTAL]):
        led.commit(ExpectedEvent("s", 10.0 + 20 * k, d, f"b{k}"))
    for k, d in enumerate([RENTAL, RENTAL, RETURN, RETURN, RETURN, RETURN, RETURN]):
        led.commit(ExpectedEvent("s", 105.0 + 10 * k, d, f"a{k}"))
    slots, bikes = led.committed_slots("s", 100.0), led.committed_bikes("s", 100.0)
    ok = (slots, bikes) == (3, 2)
    verdict(4, ok, f"committed_slots={slots} committed_bikes={bikes} (want 3, 2)")
    assert ok


# ---------------------------------------------------------------- 5

def test_c5_der_exact():
    fh = fr = 0
    for seed in range(3):
        m = run(synthetic_scenario(user_seed=seed), StrategyConfig("DER")).metrics
        fh, fr = fh + m.failed_rents, fr + m.failed_returns
    ok = fh == 0 and fr == 0
    verdict(5, ok, f"DER #fh={fh} #fr={fr} over 3 congested scenarios (want 0/0)")
    assert ok


# ---------------------------------------------------------------- 6

EC_6 = dict(rent_fail_cost=3000, return_fail_cost=2500)
ECFI_6 = dict(EC_6, f_rent_fc=3000, f_return_fc=1000, tf=1200, f=1)


@pytest.mark.slow
def test_c6_strategy_ordering():
    t0 = time.perf_counter()
    runs = {k: [] for k in ("SD", "ISD", "DR", "DER", "EC", "ECFI")}
    for seed in range(5):
        sc = synthetic_scenario(user_seed=seed)
        assert len(sc.users) >= 2000
        for kind in runs:
            kw = EC_6 if kind == "EC" else ECFI_6 if kind == "ECFI" else {}
            runs[kind].append(run(sc, StrategyConfig(kind, **kw)).metrics)
    elapsed = time.perf_counter() - t0
    ab = {k: statistics.median(m.abandons for m in v) for k, v in runs.items()}
    tt = {k: statistics.median(m.avg_total_time for m in v) for k, v in runs.items()}
    ordered = ab["SD"] > ab["ISD"] > ab["DR"] > ab["DER"]
    ecfi = ab["ECFI"] < ab["EC"] and tt["ECFI"] <= 1.05 * tt["EC"]
    ok = ordered and ecfi and elapsed < 600
    verdict(6, ok, "median abandons " + " ".join(f"{k}={v:g}" for k, v in ab.items())
            + f"; tt EC={tt['EC']:.2f} ECFI={tt['ECFI']:.2f} min; {elapsed:.0f}s (< 600s)")
    assert ok


# ---------------------------------------------------------------- 7

@pytest.mark.slow
def test_c7_sweep_monotonicity():
    grid = [250, 500, 1000, 2000, 3000, 5000, 7000]
    scen = [synthetic_scenario(user_seed=s) for s in range(5)]
    ab, tt = [], []
    for c in grid:
        ms = [run(sc, StrategyConfig("EC", rent_fail_cost=c, return_fail_cost=2000)).metrics for sc in scen]
        ab.append(statistics.median(m.abandons_pct for m in ms))
        tt.append(statistics.median(m.avg_total_time for m in ms))
    inv_a, inv_t = inversions(ab, -1), inversions(tt, +1)
    ok = inv_a <= 1 and inv_t <= 1
    verdict(7, ok, f"abandon% {[round(a, 2) for a in ab]} ({inv_a} inversions), "
            f"tt {[round(t, 2) for t in tt]} ({inv_t} inversions); allowed 1 each")
    assert ok


# ---------------------------------------------------------------- 8

def test_c8_impact_signs():
    rng = np.random.default_rng(8)
    bad = []
    for k in range(1000):
        cap = int(rng.integers(1, 41))
        st = Station("s", GeoPoint(40.4, -3.7), cap, int(rng.integers(0, cap + 1)))
        if rng.random() < 0.2:
            pi = np.eye(cap + 1)[int(rng.integers(0, cap + 1))]
        else:
            pi = rng.dirichlet(np.full(cap + 1, rng.uniform(0.1, 3)))
        rents = rng.uniform(0, 30, 24) * (rng.random(24) < 0.8)
        rets = rng.uniform(0, 30, 24) * (rng.random(24) < 0.8)
        demand = DemandTable({"s": rents}, {"s": rets})
        t_exp = float(rng.uniform(0, 86400))
        tf = float(rng.uniform(60, 7200))
        r = action_impact(st, pi, t_exp, tf, RENT, demand)
        d = action_impact(st, pi, t_exp, tf, RETURN_ACTION, demand)
        if not (r.ehf_delta >= 0 >= r.erf_delta and d.erf_delta >= 0 >= d.ehf_delta):
            bad.append((k, r, d))
    ok = not bad
    verdict(8, ok, f"{1000 - len(bad)}/1000 impact evaluations with the expected signs")
    assert ok, bad[:3]


# ---------------------------------------------------------------- 9

def random_scenario(rng):
    o = GeoPoint(40.4168, -3.7038)
    n_st = int(rng.integers(2, 16))
    stations = []
    for k in range(n_st):
        cap = int(rng.integers(1, 12))
        loc = offset_point(o, *rng.uniform(-1500, 1500, 2))
        stations.append(Station(k, loc, cap, int(rng.integers(0, cap + 1))))
    horizon = 3600.0 * int(rng.integers(1, 4))
    users = [UserScript(k, float(rng.uniform(0, horizon)), offset_point(o, *rng.uniform(-1500, 1500, 2)),
                        offset_point(o, *rng.uniform(-1500, 1500, 2))) for k in range(int(rng.integers(0, 80)))]
    demand = DemandTable({s.id: rng.uniform(0, 8, 24) for s in stations},
                         {s.id: rng.uniform(0, 8, 24) for s in stations})
    return Scenario(stations, users, demand, MobilityProfile(), horizon)


def replay_ok(sc, log):
    """Independent bookkeeping over the event log."""
    bikes = {s.id: s.bikes for s in sc.stations}
    cap = {s.id: s.capacity for s in sc.stations}
    total, riding = sum(bikes.values()), 0
    for r in log:
        if r["kind"] == "rent":
            bikes[r["station"]] -= 1
            riding += 1
        elif r["kind"] == "return":
            bikes[r["station"]] += 1
            riding -= 1
        if r["kind"] in ("rent", "return") and bikes[r["station"]] != r["detail"]["bikes"]:
            return False
        if not all(0 <= bikes[s] <= cap[s] for s in bikes) or sum(bikes.values()) + riding != total:
            return False
    return riding == 0


def test_c9_conservation_suite():
    rng = np.random.default_rng(99)
    failures = []
    for k in range(100):
        sc = random_scenario(rng)
        kind = KINDS[k % len(KINDS)]
        noise = 0.25 if k % 3 == 0 else 0.0
        cfg = StrategyConfig(kind, tf=1200)
        try:
            a = run(sc, cfg, seed=k, travel_noise=noise, check_invariants=True)
        except Exception as exc:  # InvariantError covers bounds, conservation and the final ledger
            failures.append((k, kind, repr(exc)))
            continue
        b = run(sc, cfg, seed=k, travel_noise=noise)
        if a.log != b.log:
            failures.append((k, kind, "replay differs"))
        elif not replay_ok(sc, a.log):
            failures.append((k, kind, "log replay broke conservation or bounds"))
    ok = not failures
    verdict(9, ok, f"{100 - len(failures)}/100 random scenarios: conservation, bounds, replay, empty ledger")
    assert ok, failures[:3]


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

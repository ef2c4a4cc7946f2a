import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bikerec.demand import DemandTable
from bikerec.ledger import RENTAL, ExpectationLedger, ExpectedEvent
from bikerec.model import (GeoPoint, MobilityProfile, RentRequest, ReturnRequest, Station, bike_time,
                           offset_point, walk_time)
from bikerec.transient import (DEFAULT_SOLVER, DIAGNOSTICS, EMPTY, FULL, RENT, RETURN, QueueRates,
                               SolverConfig, action_impact, avg_boundary_prob, bike_prob, evolve,
                               expected_failures, impact_from_rates, initial_distribution, kolmogorov_rhs,
                               shift_distribution, slot_prob, stationary_distribution)

from oracles import exact, fine_average, generator, stationary, uniformization

HERE = GeoPoint(40.4168, -3.7038)


def flat_demand(sid, rents_per_hour, returns_per_hour):
    return DemandTable({sid: np.full(24, float(rents_per_hour))}, {sid: np.full(24, float(returns_per_hour))})


def test_rhs_examples():
    assert not kolmogorov_rhs(np.array([0.2, 0.8]), QueueRates(0, 0)).any()
    assert kolmogorov_rhs(np.array([1.0, 0.0]), QueueRates(1.0, 0.0)).tolist() == [-1.0, 1.0]


def test_rhs_matches_generator_product():
    rng = np.random.default_rng(0)
    for K in (1, 2, 7, 30):
        pi = rng.dirichlet(np.ones(K + 1))
        lam, mu = rng.uniform(0, 2, 2)
        d = kolmogorov_rhs(pi, QueueRates(lam, mu))
        assert d == pytest.approx(generator(K, lam, mu).T @ pi, abs=1e-14)
        assert abs(d.sum()) < 1e-14


def test_evolve_zero_duration():
    pi = np.array([0.1, 0.6, 0.3])
    assert evolve(pi, QueueRates(1, 1), 0.0).tolist() == pi.tolist()


def test_evolve_uniform_limit():
    out = evolve(np.array([1.0, 0.0, 0.0]), QueueRates(0.01, 0.01), 5000.0)
    assert out == pytest.approx([1 / 3] * 3, abs=1e-9)


def test_evolve_stationary_rho_two():
    mu = 0.005
    out = evolve(np.eye(6)[0], QueueRates(2 * mu, mu), 20000.0)
    assert np.abs(out - stationary(5, 2.0)).max() < 1e-6
    assert np.abs(stationary_distribution(5, QueueRates(2 * mu, mu)) - stationary(5, 2.0)).max() < 1e-12


def test_evolve_against_matrix_exponential():
    rng = np.random.default_rng(1)
    for _ in range(20):
        K = int(rng.integers(1, 31))
        lam, mu = rng.uniform(0, 30, 2) / 3600
        pi = rng.dirichlet(np.ones(K + 1))
        T = rng.uniform(60, 3600)
        # short windows use h = T/50, so RK4 truncation sits near 1e-9
        assert np.abs(evolve(pi, QueueRates(lam, mu), T) - exact(pi, lam, mu, T)).max() < 1e-8


def test_stationary_at_gap_time():
    # relaxation is governed by the spectral gap, not by lam + mu
    rng = np.random.default_rng(7)
    for _ in range(20):
        K = int(rng.integers(1, 31))
        rho = float(np.exp(rng.uniform(np.log(0.2), np.log(5))))
        mu = 1.0
        lam = rho * mu
        gap = lam + mu - 2 * np.sqrt(lam * mu) * np.cos(np.pi / (K + 1))
        pi0 = np.eye(K + 1)[rng.integers(K + 1)]
        out = evolve(pi0, QueueRates(lam, mu), 50.0 / gap)
        assert np.abs(out - stationary(K, rho)).max() < 1e-5


def test_fourth_order_convergence():
    pi = np.eye(6)[2]
    rates = QueueRates(0.05, 0.03)
    ref = exact(pi, 0.05, 0.03, 200.0)
    e1 = np.abs(evolve(pi, rates, 200.0, step=10.0) - ref).max()
    e2 = np.abs(evolve(pi, rates, 200.0, step=5.0) - ref).max()
    assert 12 < e1 / e2 < 20


def test_evolve_rejects_bad_args():
    with pytest.raises(ValueError):
        evolve(np.array([1.0]), QueueRates(0, 0), -1)
    with pytest.raises(ValueError):
        evolve(np.array([1.0, 0.0]), QueueRates(0, 0), 5, step=0)
    with pytest.raises(ValueError):
        QueueRates(-1, 0)


def test_solver_step_rule():
    cfg = SolverConfig()
    assert cfg.step(3600) == 5.0
    assert cfg.step(100) == 2.0
    assert cfg.step(3600, rate_sum=0.5) == 1.0


def test_initial_distribution():
    st_ = Station("s", HERE, 10, 4)
    led = ExpectationLedger().commit(ExpectedEvent("s", 50.0, RENTAL, 1))
    assert initial_distribution(st_, led, 0.0, 100.0).tolist() == np.eye(11)[3].tolist()
    assert initial_distribution(Station("s", HERE, 10, 0), ExpectationLedger(), 0, 1)[0] == 1.0


def test_initial_distribution_clamps_with_diagnostic():
    before = DIAGNOSTICS["initial_index_clamped"]
    led = ExpectationLedger().commit(ExpectedEvent("s", 5.0, RENTAL, 1))
    p = initial_distribution(Station("s", HERE, 3, 0), led, 0.0, 10.0)
    assert p[0] == 1.0
    assert DIAGNOSTICS["initial_index_clamped"] == before + 1


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(0, 30), st.lists(st.sampled_from([-1, 1]), max_size=12))
def test_initial_distribution_is_point_mass(K, bikes, deltas):
    bikes = min(bikes, K)
    led = ExpectationLedger()
    for k, d in enumerate(deltas):
        led.commit(ExpectedEvent("s", 1.0 + k, d, k))
    p = initial_distribution(Station("s", HERE, K, bikes), led, 0.0, 100.0)
    assert sorted(p.tolist())[-1] == 1.0 and p.sum() == 1.0


def test_bike_prob_zero_rates():
    dem = flat_demand("s", 0, 0)
    req = RentRequest(1, HERE, 0.0, 600)
    assert bike_prob(Station("s", HERE, 5, 3), req, ExpectationLedger(), dem) == 1.0
    assert bike_prob(Station("s", HERE, 5, 0), req, ExpectationLedger(), dem) == 0.0


def test_bike_prob_uniformization_oracle():
    dem = flat_demand("s", 60, 60)  # 1/60 per second each way
    origin = offset_point(HERE, 300 * 0.8596, 0)  # roughly 300 s of walking
    st_ = Station("s", HERE, 2, 1)
    req = RentRequest(1, origin, 0.0, 600)
    T = walk_time(origin, HERE, MobilityProfile())
    want = uniformization(np.eye(3)[1], 1 / 60, 1 / 60, T)[1:].sum()
    assert bike_prob(st_, req, ExpectationLedger(), dem) == pytest.approx(want, abs=1e-6)


def test_slot_prob_examples():
    dem = flat_demand("s", 0, 0)
    req = ReturnRequest(1, HERE, HERE, 0.0)
    assert slot_prob(Station("s", HERE, 4, 4), req, ExpectationLedger(), dem) == 0.0
    assert slot_prob(Station("s", HERE, 4, 0), req, ExpectationLedger(), dem) == 1.0


def test_slot_prob_is_complement_of_full():
    rng = np.random.default_rng(3)
    for _ in range(10):
        K = int(rng.integers(1, 20))
        b = int(rng.integers(0, K + 1))
        dem = flat_demand("s", *rng.uniform(0, 30, 2))
        cur = offset_point(HERE, rng.uniform(100, 3000), 0)
        st_ = Station("s", HERE, K, b)
        T = bike_time(cur, HERE, MobilityProfile())
        lam, mu = dem.returns["s"][0] / 3600, dem.rents["s"][0] / 3600
        pi = evolve(np.eye(K + 1)[b], QueueRates(lam, mu), T)
        got = slot_prob(st_, ReturnRequest(1, cur, HERE, 0.0), ExpectationLedger(), dem)
        assert got == pytest.approx(1 - pi[K], abs=1e-12)


def test_committed_bikes_raise_threshold():
    dem = flat_demand("s", 0, 0)
    led = ExpectationLedger()
    led.commit(ExpectedEvent("s", 5000.0, RENTAL, 8)).commit(ExpectedEvent("s", 5001.0, RENTAL, 9))
    req = RentRequest(1, HERE, 0.0, 600)
    assert bike_prob(Station("s", HERE, 5, 2), req, led, dem) == 0.0
    assert bike_prob(Station("s", HERE, 5, 3), req, led, dem) == 1.0


def test_avg_boundary_trivial():
    assert avg_boundary_prob(np.eye(4)[0], QueueRates(0, 0), 0, 600, EMPTY) == pytest.approx(1.0)
    p = np.eye(6)[2]
    assert avg_boundary_prob(p, QueueRates(0, 0), 0, 600, EMPTY) == 0.0
    assert avg_boundary_prob(p, QueueRates(0, 0), 0, 600, FULL) == 0.0
    with pytest.raises(ValueError):
        avg_boundary_prob(p, QueueRates(0, 0), 5, 5, EMPTY)


def test_avg_boundary_refinement_and_exact():
    rng = np.random.default_rng(9)
    for _ in range(5):
        K = int(rng.integers(2, 12))
        r = rng.uniform(2, 20) / 3600
        span = rng.uniform(600, 3600)
        pi = np.eye(K + 1)[rng.integers(K + 1)]
        h = DEFAULT_SOLVER.step(span, 2 * r)
        for b in (EMPTY, FULL):
            coarse = avg_boundary_prob(pi, QueueRates(r, r), 0, span, b)
            fine = avg_boundary_prob(pi, QueueRates(r, r), 0, span, b, step=h / 100)
            assert abs(coarse - fine) < 1e-5
        w0, wK = fine_average(pi, r, r, span)
        assert avg_boundary_prob(pi, QueueRates(r, r), 0, span, EMPTY) == pytest.approx(w0, abs=1e-5)
        assert avg_boundary_prob(pi, QueueRates(r, r), 0, span, FULL) == pytest.approx(wK, abs=1e-5)


def test_plain_trapezoid_is_second_order():
    # the uncorrected rule is the literal averaged-endpoint sum; its error shrinks 4x per halving
    pi = np.eye(12)[10]
    rates = QueueRates(20 / 3600, 20 / 3600)
    plain = SolverConfig(end_correction=False)
    _, wK = fine_average(pi, rates.lam, rates.mu, 680.0)
    e1 = avg_boundary_prob(pi, rates, 0, 680.0, FULL, step=5.0, cfg=plain) - wK
    e2 = avg_boundary_prob(pi, rates, 0, 680.0, FULL, step=2.5, cfg=plain) - wK
    assert 3.5 < e1 / e2 < 4.5
    assert abs(avg_boundary_prob(pi, rates, 0, 680.0, FULL, step=5.0) - wK) < 1e-7


def test_expected_failures_trivial():
    st_ = Station("s", HERE, 5, 0)
    ehf, erf = expected_failures(st_, 0, 3600, np.eye(6)[0], flat_demand("s", 5, 0))
    assert ehf == pytest.approx(5.0) and erf == 0.0
    ehf, _ = expected_failures(st_, 0, 3600, np.eye(6)[0], flat_demand("s", 0, 3))
    assert ehf == 0.0


def test_shift_examples():
    assert shift_distribution(np.eye(6)[3], RENT).tolist() == np.eye(6)[2].tolist()
    assert shift_distribution(np.eye(6)[0], RENT).tolist() == np.eye(6)[0].tolist()
    assert shift_distribution(np.eye(6)[5], RETURN).tolist() == np.eye(6)[5].tolist()
    with pytest.raises(ValueError):
        shift_distribution(np.eye(2)[0], "borrow")


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_shift_matches_index_oracle(K, seed):
    pi = np.random.default_rng(seed).dirichlet(np.ones(K + 1))
    want_rent = np.zeros(K + 1)
    want_ret = np.zeros(K + 1)
    for j, p in enumerate(pi):
        want_rent[max(j - 1, 0)] += p
        want_ret[min(j + 1, K)] += p
    assert shift_distribution(pi, RENT) == pytest.approx(want_rent, abs=1e-15)
    assert shift_distribution(pi, RETURN) == pytest.approx(want_ret, abs=1e-15)
    assert shift_distribution(pi, RENT).sum() == pytest.approx(1.0)


def test_impact_zero_demand():
    imp = action_impact(Station("s", HERE, 5, 1), np.eye(6)[1], 0.0, 3600.0, RENT, flat_demand("s", 0, 0))
    assert (imp.ehf_delta, imp.erf_delta) == (0.0, 0.0)
    with pytest.raises(ValueError):
        action_impact(Station("s", HERE, 5, 1), np.eye(6)[1], 0.0, 0.0, RENT, flat_demand("s", 0, 0))


def test_impact_near_empty_rent():
    imp = action_impact(Station("s", HERE, 5, 1), np.eye(6)[1], 0.0, 3600.0, RENT, flat_demand("s", 4, 1))
    assert imp.ehf_delta > 0 >= imp.erf_delta


def test_impact_against_exact_two_trajectories():
    rng = np.random.default_rng(21)
    for _ in range(10):
        K = int(rng.integers(1, 25))
        pi = rng.dirichlet(np.ones(K + 1))
        rents, returns = rng.uniform(0, 20, 2)
        tf = rng.uniform(600, 3600)
        for action in (RENT, RETURN):
            imp = impact_from_rates(pi, rents, returns, tf, action)
            lam, mu = returns / tf, rents / tf
            b0, bK = fine_average(pi, lam, mu, tf, 4000)
            s0, sK = fine_average(shift_distribution(pi, action), lam, mu, tf, 4000)
            assert imp.ehf_delta == pytest.approx((s0 - b0) * rents, abs=1e-5)
            assert imp.erf_delta == pytest.approx((sK - bK) * returns, abs=1e-5)

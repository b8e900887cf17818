import math

import mpmath
import numpy as np
import pytest

from conftest import random_instance
from ensemblefolio.ensemble import (Engine, Partition, SupportMask, WealthLedger, allocation_distribution,
                                    constant_combo_portfolio, fl_portfolio, grid_allocation, inner_weights,
                                    leader_index, mixture_weights, representative_portfolio,
                                    representative_portfolios, support_losers, support_size, support_winners,
                                    uc_large_portfolio, uc_portfolio, update_ledger, wae_portfolio)
from ensemblefolio.errors import ConfigError, DataError, PartitionError, SupportError
from ensemblefolio.simplex_grid import enumerate_grid

E = math.e


def ledger(wealths, period=1):
    return WealthLedger(np.log(np.asarray(wealths, dtype=float)), period)


# --- constant combinations and ledgers ---

def test_constant_combo_examples():
    comps = np.array([[0.2, 0.8], [0.7, 0.3]])
    np.testing.assert_array_equal(constant_combo_portfolio([0, 1], comps), comps[1])
    same = np.array([[0.4, 0.6]] * 3)
    np.testing.assert_allclose(constant_combo_portfolio([0.2, 0.3, 0.5], same), [0.4, 0.6], atol=1e-15)
    np.testing.assert_array_equal(constant_combo_portfolio([0.5, 0.5], np.eye(2)), [0.5, 0.5])


def test_ledger_identity_and_product():
    led = WealthLedger.fresh(3)
    led = update_ledger(led, np.ones(3))
    assert led.period == 1 and np.all(led.log_wealth == 0)
    one = update_ledger(update_ledger(WealthLedger.fresh(1), [2.0]), [2.0])
    assert one.log_wealth[0] == pytest.approx(math.log(4), abs=1e-15)


def test_ledger_matches_extended_precision_product():
    rng = np.random.default_rng(0)
    r = rng.uniform(0.9, 1.1, size=(1000, 3))
    led = WealthLedger.fresh(3)
    for row in r:
        led = update_ledger(led, row)
    mpmath.mp.dps = 50
    for j in range(3):
        exact = mpmath.fprod(mpmath.mpf(float(v)) for v in r[:, j])
        assert abs(led.wealth[j] / float(exact) - 1) <= 1e-10


def test_ledger_rejects_non_positive():
    with pytest.raises(DataError):
        update_ledger(WealthLedger.fresh(2), [1.0, 0.0])


def test_mixture_weights_are_stable():
    w = mixture_weights(np.array([1000.0, 1000.0, 0.0]))
    np.testing.assert_allclose(w, [0.5, 0.5, 0.0], atol=1e-300)


# --- universal combination ---

def test_uc_first_period_is_component_average():
    comps = np.array([[0.1, 0.9], [0.5, 0.5], [0.8, 0.2]])
    g = enumerate_grid(3, 6)
    b = uc_portfolio(g, WealthLedger.fresh(len(g)), comps)
    np.testing.assert_allclose(b, comps.sum(axis=0) / 3, atol=1e-15)


def test_uc_equal_wealth_is_grid_average():
    rng = np.random.default_rng(1)
    comps = rng.dirichlet(np.ones(4), size=3)
    g = enumerate_grid(3, 5)
    b = uc_portfolio(g, ledger(np.full(len(g), 2.0)), comps)
    direct = np.mean([constant_combo_portfolio(lam, comps) for lam in g.points], axis=0)
    np.testing.assert_allclose(b, direct, atol=1e-15)


def test_uc_hand_weighted_case():
    # grid {(1,0),(0.5,0.5),(0,1)} with wealths {e,1,1}: weights e/(e+2), 1/(e+2), 1/(e+2)
    g = enumerate_grid(2, 2)
    b = uc_portfolio(g, ledger([E, 1.0, 1.0]), np.eye(2))
    w0 = (E + 0.5) / (E + 2)
    np.testing.assert_allclose(b, [w0, 1 - w0], atol=1e-15)


def test_support_rules():
    assert support_winners(ledger([3, 2, 1]), 0.3).included.tolist() == [0]
    assert support_winners(ledger([1, 1, 1]), 0.5).included.tolist() == [0, 1]
    assert support_losers(ledger([3, 2, 1]), 0.3).included.tolist() == [2]
    assert support_losers(ledger([5, 5, 1, 1]), 0.5).included.tolist() == [2, 3]
    for rule in (support_winners, support_losers):
        assert rule(ledger([4, 3, 2, 1]), 1.0).included.tolist() == [0, 1, 2, 3]
        # period 1: nothing has been observed, full grid
        assert rule(ledger([4, 3, 2, 1], period=0), 0.25).included.tolist() == [0, 1, 2, 3]


def test_support_size_ceiling():
    assert support_size(10, 0.3) == 3
    assert support_size(3, 0.5) == 2
    assert support_size(7, 1e-9) == 1
    with pytest.raises(ConfigError):
        support_size(3, 0.0)
    with pytest.raises(SupportError):
        SupportMask(np.array([], dtype=int), 0.5)


def test_masked_allocation_uses_only_support():
    g = enumerate_grid(2, 2)
    led = ledger([E, 1.0, 1.0])
    a = grid_allocation(g, led, support_losers(led, 0.5))
    np.testing.assert_allclose(a, [0.25, 0.75], atol=1e-15)


# --- representatives and the large-scale variant ---

def test_partition_validation():
    with pytest.raises(PartitionError):
        Partition(((0, 1), (1, 2)))
    with pytest.raises(PartitionError):
        Partition(((0, 2),))
    with pytest.raises(PartitionError):
        Partition(((0, 1),), (np.array([0.5, 0.6]),))
    p = Partition(((0, 1), (2, 3, 4)))
    assert p.k == 5 and p.N == 2
    np.testing.assert_allclose(p.mass_of(), [0.5, 0.5, 1 / 3, 1 / 3, 1 / 3])


def test_representative_examples():
    comps = np.array([[0.1, 0.9], [0.6, 0.4], [0.3, 0.7]])
    np.testing.assert_array_equal(representative_portfolio([1], [1.0], ledger([2, 3, 4]), comps), comps[1])
    avg = representative_portfolio([0, 2], [0.5, 0.5], ledger([2, 9, 2]), comps)
    np.testing.assert_allclose(avg, (comps[0] + comps[2]) / 2, atol=1e-15)
    two = representative_portfolio([0, 1], [0.5, 0.5], ledger([E, 1, 1]), comps)
    np.testing.assert_allclose(two, (E * comps[0] + comps[1]) / (E + 1), atol=1e-15)


def test_uc_large_singletons_equal_uc():
    rng = np.random.default_rng(4)
    comps = rng.dirichlet(np.ones(3), size=3)
    g = enumerate_grid(3, 7)
    gl = ledger(rng.uniform(0.5, 2, len(g)))
    cl = ledger(rng.uniform(0.5, 2, 3))
    part = Partition.singletons(3)
    reps = representative_portfolios(part, cl, comps)
    np.testing.assert_allclose(uc_large_portfolio(g, gl, reps), uc_portfolio(g, gl, comps), atol=1e-15)
    np.testing.assert_allclose(allocation_distribution(g, gl, cl, part), grid_allocation(g, gl), atol=1e-15)


def test_uc_large_first_period_is_rep_average():
    comps = np.random.default_rng(5).dirichlet(np.ones(4), size=5)
    part = Partition(((0, 1), (2, 3, 4)))
    g = enumerate_grid(2, 4)
    reps = representative_portfolios(part, WealthLedger.fresh(5), comps)
    b = uc_large_portfolio(g, WealthLedger.fresh(len(g)), reps)
    np.testing.assert_allclose(b, reps.mean(axis=0), atol=1e-15)


def test_uc_large_two_sets_hand_formula():
    # N=2, grid {(1,0),(0.5,0.5),(0,1)}, grid wealths {1,2,1}
    comps = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    part = Partition(((0, 1), (2,)))
    cl = ledger([1.0, 3.0, 1.0])
    reps = representative_portfolios(part, cl, comps)
    np.testing.assert_allclose(reps[0], [0.25, 0.75, 0])
    g = enumerate_grid(2, 2)
    b = uc_large_portfolio(g, ledger([1.0, 2.0, 1.0]), reps)
    lam0 = (1 * 1 + 2 * 0.5 + 1 * 0) / 4
    np.testing.assert_allclose(b, [lam0 * 0.25, lam0 * 0.75, 1 - lam0], atol=1e-15)


def test_allocation_distribution_brute_force():
    rng = np.random.default_rng(6)
    part = Partition(((0, 3), (1,), (2, 4, 5)), (np.array([0.3, 0.7]), np.array([1.0]), np.array([0.2, 0.3, 0.5])))
    g = enumerate_grid(3, 5)
    gw = rng.uniform(0.5, 2.0, len(g))
    cw = rng.uniform(0.5, 2.0, 6)
    P = allocation_distribution(g, ledger(gw), ledger(cw), part)
    oracle = np.zeros(6)
    for lam, w in zip(g.points, gw):
        for i, (s, m) in enumerate(zip(part.base_sets, part.masses)):
            z = sum(m[j] * cw[a] for j, a in enumerate(s))
            for j, a in enumerate(s):
                oracle[a] += w * lam[i] * m[j] * cw[a] / z
    oracle /= gw.sum()
    np.testing.assert_allclose(P, oracle, atol=1e-14)


def test_allocation_first_period_scaled_by_masses():
    part = Partition(((0, 1), (2,)), (np.array([0.25, 0.75]), np.array([1.0])))
    g = enumerate_grid(2, 4)
    P = allocation_distribution(g, WealthLedger.fresh(len(g)), WealthLedger.fresh(3), part)
    np.testing.assert_allclose(P, [0.5 * 0.25, 0.5 * 0.75, 0.5], atol=1e-15)


def test_inner_weights_rows_sum_to_one():
    part = Partition(((0, 2), (1,)))
    V = inner_weights(part, ledger([1, 2, 3]))
    np.testing.assert_allclose(V.sum(axis=1), 1)
    np.testing.assert_allclose(V[0], [0.25, 0, 0.75])


# --- WAE and follow-the-leader ---

def test_wae_examples():
    comps = np.array([[0.2, 0.8], [0.6, 0.4]])
    np.testing.assert_allclose(wae_portfolio(WealthLedger.fresh(2), comps), [0.4, 0.6])
    np.testing.assert_allclose(wae_portfolio(ledger([3, 3]), comps), [0.4, 0.6])
    np.testing.assert_allclose(wae_portfolio(ledger([E, 1]), np.eye(2)), [E / (E + 1), 1 / (E + 1)], atol=1e-15)


def test_fl_examples():
    comps = np.array([[0.2, 0.8], [0.6, 0.4]])
    np.testing.assert_array_equal(fl_portfolio(ledger([2, 1]), comps), comps[0])
    np.testing.assert_array_equal(fl_portfolio(ledger([1, 1]), comps), comps[0])
    assert leader_index(ledger([1, 5, 5])) == 1
    c4 = np.random.default_rng(0).dirichlet(np.ones(3), size=4)
    np.testing.assert_allclose(fl_portfolio(WealthLedger.fresh(4), c4), c4.mean(axis=0))


# --- engine ---

def test_engine_matches_direct_recursion():
    rng = np.random.default_rng(7)
    C, X = random_instance(rng, m=3, k=3, T=60)
    g = enumerate_grid(3, 6)
    run = Engine(C, X).add_uc(g).add_wae().add_fl().run()
    gl = WealthLedger.fresh(len(g))
    cl = WealthLedger.fresh(3)
    uc_log = wae_log = fl_log = 0.0
    for t in range(60):
        uc_log += math.log(float(uc_portfolio(g, gl, C[t]) @ X[t]))
        wae_log += math.log(float(wae_portfolio(cl, C[t]) @ X[t]))
        fl_log += math.log(float(fl_portfolio(cl, C[t]) @ X[t]))
        r = C[t] @ X[t]
        gl = update_ledger(gl, g.points @ r)
        cl = update_ledger(cl, r)
    assert run.log_wealth["uc"][-1] == pytest.approx(uc_log, abs=1e-12)
    assert run.log_wealth["wae"][-1] == pytest.approx(wae_log, abs=1e-12)
    assert run.log_wealth["fl"][-1] == pytest.approx(fl_log, abs=1e-12)
    R = np.einsum("tkm,tm->tk", C, X)
    best = max(np.log(R @ lam).sum() for lam in g.points)
    assert run.grid_max_log[-1] == pytest.approx(best, abs=1e-12)


def test_engine_wealth_equals_product_of_returns():
    rng = np.random.default_rng(8)
    C, X = random_instance(rng, m=4, k=2, T=300)
    run = Engine(C, X).add_uc(enumerate_grid(2, 10)).add_wae().add_fl().run()
    for name in run.names + run.component_names:
        prod = float(mpmath.fprod(mpmath.mpf(float(v)) for v in run.returns[name]))
        assert abs(math.exp(run.log_wealth[name][-1]) / prod - 1) <= 1e-10


def test_engine_singleton_large_equals_uc():
    rng = np.random.default_rng(9)
    C, X = random_instance(rng, m=3, k=3, T=200)
    g = enumerate_grid(3, 8)
    run = Engine(C, X).add_uc(g).add_uc_large(Partition.singletons(3), enumerate_grid(3, 8)).run()
    np.testing.assert_allclose(run.log_wealth["uc-large"], run.log_wealth["uc"], rtol=0, atol=1e-12)


def test_engine_validation():
    C, X = random_instance(np.random.default_rng(0), 2, 2, 5)
    with pytest.raises(ConfigError):
        Engine(C, X[:4])
    with pytest.raises(ConfigError):
        Engine(C, X).add_uc(enumerate_grid(3, 2))
    with pytest.raises(ConfigError):
        Engine(C, X).add_wae().add_wae().run()
    with pytest.raises(PartitionError):
        Engine(C, X).add_uc_large(Partition.singletons(3), enumerate_grid(3, 2))


def test_engine_large_only_records_support_sizes():
    C, X = random_instance(np.random.default_rng(10), 3, 4, 30)
    part = Partition(((0, 1), (2, 3)))
    g = enumerate_grid(2, 10)
    run = Engine(C, X).add_uc_large(part, g).add_uc_large(part, name="w", support="winners", fraction=0.2).run()
    assert run.support_sizes["uc-large"].tolist() == [11] * 30
    assert run.support_sizes["w"].tolist() == [11] + [3] * 29
    assert run.grid is None and run.rep_grid is g

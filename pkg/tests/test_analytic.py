from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from ranburst import (
    StateSpaceLimitError,
    TrafficClass,
    build_dimensions,
    build_generator,
    enumerate_states,
    kaufman_roberts,
    reachable_states,
    steady_state,
    transient,
)
from ranburst.analytic import mean_counts, occupancy_marginal

from conftest import table2_classes


def erlang_b_exact(servers: int, load) -> float:
    """Direct Erlang-B formula in exact rational arithmetic."""
    a = Fraction(load)
    term = Fraction(1)
    total = Fraction(1)
    for k in range(1, servers + 1):
        term = term * a / k
        total += term
    return float(term / total)


def one_class(load, capacity, demand=1):
    return TrafficClass(1, float(load), 1.0, demand, capacity // demand)


# ---------------------------------------------------------------------------
# Kaufman-Roberts
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("capacity", [1, 2, 5, 31, 62, 100])
@pytest.mark.parametrize("load", [Fraction(1, 2), 1, 15, 30, 100])
def test_single_class_recursion_reproduces_erlang_b(capacity, load):
    dist = kaufman_roberts([one_class(load, capacity)], capacity)
    assert dist.blocking[1] == pytest.approx(erlang_b_exact(capacity, load), abs=1e-12)


def test_erlang_b_example():
    dist = kaufman_roberts([one_class(1, 2)], 2)
    assert dist.blocking[1] == pytest.approx(0.2, abs=1e-12)


def test_video_only_blocking_at_table2_loads():
    # Full-rate video occupies two blocks of the 62-block pool: equivalent to
    # 31 servers. Offered loads 30 and 15.
    v30 = TrafficClass(2, 1 / 20, 1 / 600, 2, 31)
    v15 = TrafficClass(2, 1 / 40, 1 / 600, 2, 31)
    b30 = kaufman_roberts([v30], 62).blocking[2]
    b15 = kaufman_roberts([v15], 62).blocking[2]
    assert b30 == pytest.approx(erlang_b_exact(31, 30), abs=1e-12)
    assert b15 == pytest.approx(erlang_b_exact(31, 15), abs=1e-12)
    assert abs(b30 - 0.11) <= 0.02
    assert b15 < 0.005


def test_occupancy_distribution_properties():
    classes = [
        TrafficClass(1, 2.0, 1.0, 1, 10),
        TrafficClass(2, 3.0, 1.0, 2, 5),
    ]
    dist = kaufman_roberts(classes, 10)
    assert dist.q.shape == (11,)
    assert dist.q.min() >= 0
    assert dist.q.sum() == pytest.approx(1.0, abs=1e-12)


def test_kaufman_roberts_input_validation():
    with pytest.raises(ValueError, match="capacity"):
        kaufman_roberts([one_class(1, 2)], 0)
    with pytest.raises(ValueError, match="non-priority"):
        kaufman_roberts([TrafficClass(1, 1.0, 1.0, 1, 5, "high")], 5)
    with pytest.raises(ValueError, match="non-priority"):
        kaufman_roberts(
            [TrafficClass(1, 1.0, 1.0, 2, 5, adaptive=True, downgraded_demand_blocks=1)],
            10,
        )
    with pytest.raises(ValueError, match="cap"):
        kaufman_roberts([TrafficClass(1, 1.0, 1.0, 1, 3)], 10)


# ---------------------------------------------------------------------------
# State spaces and generators
# ---------------------------------------------------------------------------


def test_generator_mm22_birth_death():
    lam, mu = 0.7, 1.3
    dims = build_dimensions("NC1", [TrafficClass(1, lam, mu, 1, 2)], 2)
    space, q = build_generator("NC1", dims, 2)
    assert len(space) == 3
    dense = q.toarray()
    i0, i1, i2 = (space.index[(k,)] for k in (0, 1, 2))
    assert dense[i0, i1] == pytest.approx(lam)
    assert dense[i1, i2] == pytest.approx(lam)
    assert dense[i1, i0] == pytest.approx(mu)
    assert dense[i2, i1] == pytest.approx(2 * mu)
    assert np.allclose(dense.sum(axis=1), 0.0, atol=1e-14)


def test_generator_rows_sum_to_zero_nc3():
    dims = build_dimensions("NC3", table2_classes("NC3", lam2=1.0), 62)
    space, q = build_generator("NC3", dims, 62)
    sums = np.asarray(q.sum(axis=1)).ravel()
    assert np.abs(sums).max() < 1e-9


def test_nc3_table2_enumeration_matches_triple_loop():
    dims = build_dimensions("NC3", table2_classes("NC3"), 62)
    space = enumerate_states(dims, 62)
    count = 0
    for w1 in range(63):
        for w2 in range(32):
            for w3 in range(63):
                if w1 + 2 * w2 + w3 <= 62:
                    count += 1
    assert len(space) == count
    assert all(w1 + 2 * w2 + w3 <= 62 for (w1, w2, w3) in space.states)


def test_enumeration_cap_raises_with_size():
    dims = build_dimensions("NC3", table2_classes("NC3"), 62)
    with pytest.raises(StateSpaceLimitError) as err:
        enumerate_states(dims, 62, limit=1000)
    assert err.value.size > 1000


def test_nc2_preemption_arc_in_generator():
    classes = [
        TrafficClass(1, 0.5, 1 / 60, 1, 62, "high"),
        TrafficClass(2, 1.0, 1 / 600, 2, 31, "low"),
    ]
    dims = build_dimensions("NC2", classes, 62)
    space, q = build_generator("NC2", dims, 62)
    row = space.index[(0, 31)]
    col = space.index[(1, 30)]
    assert q[row, col] == pytest.approx(0.5)


def test_reachable_states_excludes_armless_dimensions():
    # No priority arrivals at all: only the video-only slice is reachable,
    # and with full-rate admission always preferred nothing ever downgrades.
    dims = build_dimensions("NC3", table2_classes("NC3"), 62)
    space = reachable_states("NC3", dims, 62)
    assert all(s[0] == 0 and s[2] == 0 for s in space.states)
    assert len(space) == 32


# ---------------------------------------------------------------------------
# Steady state
# ---------------------------------------------------------------------------


def test_steady_state_mm11_symmetric():
    dims = build_dimensions("NC1", [TrafficClass(1, 1.0, 1.0, 1, 1)], 1)
    _, q = build_generator("NC1", dims, 1)
    pi = steady_state(q)
    assert pi == pytest.approx([0.5, 0.5], abs=1e-12)


def test_steady_state_birth_death_erlang():
    dims = build_dimensions("NC1", [TrafficClass(1, 1.0, 1.0, 1, 2)], 2)
    space, q = build_generator("NC1", dims, 2)
    pi = steady_state(q)
    expected = {(0,): 0.4, (1,): 0.4, (2,): 0.2}
    for state, value in expected.items():
        assert pi[space.index[state]] == pytest.approx(value, abs=1e-12)


def test_nc3_steady_state_solves_on_three_dimensional_space():
    classes = [
        TrafficClass(1, 1.0, 1 / 60, 1, 30, "high"),
        TrafficClass(2, 1 / 20, 1 / 600, 2, 15, "low", adaptive=True,
                     downgraded_demand_blocks=1),
    ]
    dims = build_dimensions("NC3", classes, 30)
    space, q = build_generator("NC3", dims, 30)
    assert len(space) > 2000
    pi = steady_state(q)
    assert pi.min() >= 0
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.abs(pi @ q).max() < 1e-10
    # heavy priority load pins the pool near its cap
    mean_goose = mean_counts(space, pi)[0]
    assert 25 < mean_goose <= 30


def test_nc1_steady_state_aggregates_to_kaufman_roberts():
    classes = [
        TrafficClass(1, 2.0, 1.0, 1, 10),
        TrafficClass(2, 3.0, 1.0, 2, 5),
    ]
    dims = build_dimensions("NC1", classes, 10)
    space, q = build_generator("NC1", dims, 10)
    pi = steady_state(q)
    marginal = occupancy_marginal(space, pi)
    dist = kaufman_roberts(classes, 10)
    assert np.abs(marginal - dist.q).max() < 1e-8


def test_steady_state_residual_guard():
    q = sp.csr_matrix(np.zeros((2, 2)))
    # An all-zero generator has no unique stationary vector; the solver must
    # refuse rather than return garbage.
    with pytest.raises(Exception):
        steady_state(q)


# ---------------------------------------------------------------------------
# Transients by uniformization
# ---------------------------------------------------------------------------


def pure_death_generator():
    dims = build_dimensions("NC1", [TrafficClass(1, 0.0, 1.0, 1, 1)], 1)
    return build_generator("NC1", dims, 1)


def test_transient_identity_at_zero():
    space, q = pure_death_generator()
    pi0 = np.array([0.25, 0.75])
    assert transient(q, pi0, 0.0) is not pi0
    assert np.array_equal(transient(q, pi0, 0.0), pi0)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0, 3.0])
def test_transient_pure_death_closed_form(t):
    space, q = pure_death_generator()
    pi0 = np.zeros(2)
    pi0[space.index[(1,)]] = 1.0
    pt = transient(q, pi0, t)
    assert pt[space.index[(0,)]] == pytest.approx(1 - np.exp(-t), abs=1e-9)


def test_transient_two_state_closed_form():
    lam, mu = 2.0, 3.0
    q = sp.csr_matrix(np.array([[-lam, lam], [mu, -mu]]))
    pi0 = np.array([1.0, 0.0])
    t = 1 / lam
    pt = transient(q, pi0, t)
    # stationary + decaying mode of the two-state chain
    p1 = lam / (lam + mu) * (1 - np.exp(-(lam + mu) * t))
    assert pt[1] == pytest.approx(p1, abs=1e-8)
    assert pt[0] == pytest.approx(1 - p1, abs=1e-8)


def test_transient_converges_to_steady_state():
    classes = [TrafficClass(1, 1.0, 0.5, 1, 3)]
    dims = build_dimensions("NC1", classes, 3)
    space, q = build_generator("NC1", dims, 3)
    pi = steady_state(q)
    pi0 = np.zeros(len(space))
    pi0[space.index[(0,)]] = 1.0
    t = 50.0 / 0.5  # fifty times the slowest rate
    pt = transient(q, pi0, t)
    assert np.abs(pt - pi).max() < 1e-6


def test_transient_is_probability_vector():
    dims = build_dimensions("NC1", table2_classes("NC1", lam2=1.0), 10)
    space, q = build_generator("NC1", dims, 10)
    pi0 = np.zeros(len(space))
    pi0[space.index[tuple([0, 0])]] = 1.0
    for t in (0.01, 0.3, 2.0, 10.0):
        pt = transient(q, pi0, t, eps=1e-9)
        assert pt.min() > -1e-12
        assert pt.sum() == pytest.approx(1.0, abs=1e-8)


def test_mean_counts_matches_occupancy():
    classes = [TrafficClass(1, 2.0, 1.0, 1, 4)]
    dims = build_dimensions("NC1", classes, 4)
    space, q = build_generator("NC1", dims, 4)
    pi = steady_state(q)
    mean = mean_counts(space, pi)[0]
    expected = 2.0 * (1 - erlang_b_exact(4, 2))  # carried load
    assert mean == pytest.approx(expected, abs=1e-10)

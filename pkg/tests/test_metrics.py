import numpy as np
import pytest

from ranburst import (
    InjectionSchedule,
    Scenario,
    aggregate,
    ratios,
    run_experiment,
    run_replication,
    summarize,
    utilization,
)
from ranburst.metrics import (
    burst_period,
    make_grid,
    session_curves,
)
from ranburst.simulator import Event, TrajectoryRecord
from ranburst.traffic import (
    ARRIVAL_ACCEPTED,
    ARRIVAL_DOWNGRADED,
    ARRIVAL_REJECTED,
    DEPARTURE,
    DOWNGRADE_CASCADE,
)

from conftest import RADIO62, table2_classes


def synthetic(events, initial=(0, 0, 0), end=1000.0, horizon=1000.0,
              t_inject=None, demands=(1, 2, 1), capacity=62):
    return TrajectoryRecord(
        policy="NC3",
        capacity=capacity,
        dim_labels=tuple(f"d{i}" for i in range(len(initial))),
        demands=demands,
        initial_counts=initial,
        events=events,
        end_ms=end,
        horizon_ms=horizon,
        t_inject_ms=t_inject,
        seed=0,
    )


def burst_scenario(policy="NC3", lam2=1 / 20, seed=20260810, reps=1):
    return Scenario(
        policy=policy,
        radio=RADIO62,
        classes=tuple(table2_classes(policy, lam2)),
        injection=InjectionSchedule("poisson", 2000.0, batch_size=52, poisson_rate=4.0),
        horizon_ms=6000.0,
        warmup="stationary_video_start",
        replications=reps,
        time_scale=200.0,
        base_seed=seed,
    )


# ---------------------------------------------------------------------------
# Utilization
# ---------------------------------------------------------------------------


def test_constant_path_utilization():
    traj = synthetic([], initial=(10, 5, 3))
    rho_t, rho_avg = utilization(traj, make_grid(1000.0, 100.0))
    assert rho_avg == pytest.approx(23 / 62)
    assert np.allclose(rho_t, 23 / 62)


def test_empty_trajectory_utilization_is_zero():
    traj = synthetic([], initial=(0, 0, 0))
    rho_t, rho_avg = utilization(traj)
    assert rho_avg == 0.0
    assert np.allclose(rho_t, 0.0)


def test_rho_avg_matches_independent_event_integral():
    sc = burst_scenario()
    rec = run_replication(sc, 909)
    _, rho_avg = utilization(rec)
    # independent route: integrate occupied blocks step by step
    occ = sum(c * d for c, d in zip(rec.initial_counts, rec.demands))
    t_prev, acc = 0.0, 0.0
    for e in rec.events:
        acc += occ * (e.t_ms - t_prev)
        t_prev = e.t_ms
        occ = sum(c * d for c, d in zip(e.counts, rec.demands))
    acc += occ * (rec.end_ms - t_prev)
    direct = acc / (rec.end_ms * rec.capacity)
    assert rho_avg == pytest.approx(direct, abs=1e-12)


def test_session_curves_are_right_continuous():
    events = [
        Event(100.0, ARRIVAL_ACCEPTED, 0, 0, 0, (1, 0, 0)),
        Event(300.0, DEPARTURE, 0, 0, 0, (0, 0, 0)),
    ]
    traj = synthetic(events)
    grid = np.array([0.0, 100.0, 200.0, 300.0, 400.0])
    curves = session_curves(traj, grid)
    assert curves[0].tolist() == [0, 1, 1, 0, 0]


# ---------------------------------------------------------------------------
# Burst period and duration
# ---------------------------------------------------------------------------


def test_burst_period_simple_example():
    events = [
        Event(2000.0, ARRIVAL_ACCEPTED, 0, 0, 0, (1, 0, 0)),
        Event(2500.0, DEPARTURE, 0, 0, 0, (0, 0, 0)),
    ]
    traj = synthetic(events, t_inject=2000.0, end=6000.0, horizon=6000.0)
    period, duration = burst_period(traj)
    assert period == pytest.approx(500.0)
    assert duration == pytest.approx(500.0)


def test_burst_period_absent_without_admissions():
    traj = synthetic([], t_inject=2000.0)
    assert burst_period(traj) == (None, None)


def test_burst_period_censored_at_horizon():
    events = [Event(2100.0, ARRIVAL_ACCEPTED, 0, 0, 0, (1, 0, 0))]
    traj = synthetic(events, t_inject=2000.0, end=6000.0, horizon=6000.0)
    period, duration = burst_period(traj)
    assert period == pytest.approx(4000.0)
    assert duration == pytest.approx(3900.0)


# ---------------------------------------------------------------------------
# Ratios
# ---------------------------------------------------------------------------


def test_ratio_arithmetic_simple():
    events = []
    t = 1.0
    for _ in range(45):
        events.append(Event(t, ARRIVAL_ACCEPTED, 1, 0, 0, (0, 1, 0)))
        t += 1.0
    for _ in range(5):
        events.append(Event(t, ARRIVAL_REJECTED, 1, 0, 0, (0, 1, 0)))
        t += 1.0
    traj = synthetic(events, end=100.0, horizon=100.0)
    r = ratios(traj)
    assert r["n_ga"] == 50
    assert r["r_rj"] == pytest.approx(0.1)
    assert r["r_dw"] == 0.0
    assert r["r_dc"] == 0.0


def test_ratios_absent_without_arrivals():
    r = ratios(synthetic([]))
    assert r["n_ga"] == 0
    assert r["r_rj"] is None and r["r_v"] is None


def test_r_v_counts_only_priority_free_window():
    events = [
        Event(10.0, ARRIVAL_REJECTED, 1, 0, 0, (0, 0, 0)),   # priority-free
        Event(20.0, ARRIVAL_ACCEPTED, 0, 0, 0, (1, 0, 0)),   # priority enters
        Event(30.0, ARRIVAL_REJECTED, 1, 0, 0, (1, 0, 0)),   # not counted
        Event(40.0, ARRIVAL_ACCEPTED, 1, 0, 0, (1, 1, 0)),
        Event(50.0, DEPARTURE, 0, 0, 0, (0, 1, 0)),
        Event(60.0, ARRIVAL_ACCEPTED, 1, 0, 0, (0, 2, 0)),   # priority-free
    ]
    traj = synthetic(events, end=100.0, horizon=100.0)
    r = ratios(traj)
    assert r["counts"]["goose_free_arrivals"] == 2
    assert r["counts"]["goose_free_rejected"] == 1
    assert r["r_v"] == pytest.approx(0.5)
    assert r["r_rj"] == pytest.approx(2 / 4)
    whole = ratios(traj, whole_window_r_v=True)
    assert whole["r_v"] == pytest.approx(2 / 4)


def test_downgrade_bookkeeping_feeds_r_dw_and_r_dc():
    events = [
        Event(10.0, ARRIVAL_ACCEPTED, 1, 0, 0, (0, 1, 0)),
        Event(20.0, ARRIVAL_DOWNGRADED, 1, 1, 0, (0, 1, 1)),
        Event(30.0, DOWNGRADE_CASCADE, 0, 1, 1, (1, 0, 1)),
    ]
    traj = synthetic(events, end=100.0, horizon=100.0)
    r = ratios(traj)
    assert r["n_ga"] == 2
    assert r["r_dw"] == pytest.approx(2 / 2)  # one admit, one cascade conversion
    assert r["r_dc"] == pytest.approx(1 / 2)


@pytest.mark.parametrize("policy", ["NC1", "NC2"])
def test_non_adaptive_policies_never_downgrade(policy):
    sc = burst_scenario(policy=policy, reps=5)
    for rec in run_experiment(sc):
        r = ratios(rec)
        assert r["r_dw"] == 0.0


def test_count_conservation_on_real_run():
    sc = burst_scenario(reps=5)
    for rec in run_experiment(sc):
        c = ratios(rec)["counts"]
        accepted = sum(
            1 for e in rec.events if e.dim == 1 and e.kind == ARRIVAL_ACCEPTED
        )
        downgraded_admits = sum(
            1 for e in rec.events if e.kind == ARRIVAL_DOWNGRADED
        )
        assert c["video_arrivals"] == accepted + downgraded_admits + c["video_rejected"]
        # at every instant: live downgraded sessions plus cumulative discards
        # never exceed the video sessions admitted so far
        admitted_so_far = rec.initial_counts[1]
        discards = 0
        for e in rec.events:
            if e.dim == 1 and e.kind in (ARRIVAL_ACCEPTED, ARRIVAL_DOWNGRADED):
                admitted_so_far += 1
            discards += e.discarded
            assert e.counts[2] + discards <= admitted_so_far


def test_nc3_discards_never_exceed_nc2_under_common_randomness():
    for rep in range(8):
        seed = 7_000 + rep
        nc2 = run_replication(burst_scenario("NC2"), seed, crn=True)
        nc3 = run_replication(burst_scenario("NC3"), seed, crn=True)
        r2, r3 = ratios(nc2), ratios(nc3)
        assert r3["r_dc"] <= r2["r_dc"]


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def test_aggregate_identical_summaries_has_zero_variance():
    sc = burst_scenario()
    rec = run_replication(sc, 42)
    s = summarize(rec)
    agg = aggregate([s, s])
    assert agg.variance["rho_avg"] == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(agg.var_m_t, 0.0)


def test_aggregate_two_point_example():
    sc = burst_scenario()
    a = summarize(run_replication(sc, 1))
    b = summarize(run_replication(sc, 2))
    a.rho_avg, b.rho_avg = 0.4, 0.6
    agg = aggregate([a, b])
    assert agg.mean["rho_avg"] == pytest.approx(0.5)
    assert agg.variance["rho_avg"] == pytest.approx(0.02)


def test_aggregate_rejects_mismatched_grids():
    sc = burst_scenario()
    rec = run_replication(sc, 3)
    a = summarize(rec, grid_ms=10.0)
    b = summarize(rec, grid_ms=20.0)
    with pytest.raises(ValueError, match="grid"):
        aggregate([a, b])


def test_summary_ratio_times_nga_recovers_counts():
    sc = burst_scenario(reps=3)
    for rec in run_experiment(sc):
        s = summarize(rec)
        assert s.r_rj * s.n_ga == pytest.approx(s.counts["video_rejected"])
        assert s.r_dc * s.n_ga == pytest.approx(s.counts["video_discarded"])
        assert s.r_dw * s.n_ga == pytest.approx(s.counts["video_downgraded"])

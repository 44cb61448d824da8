"""Metric extraction from trajectories and cross-replication aggregation.

All integrals are computed exactly from the piecewise-constant sample paths;
the reporting grid only affects the exported curves, never the averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .simulator import TrajectoryRecord
from .traffic import (
    ARRIVAL_ACCEPTED,
    ARRIVAL_DOWNGRADED,
    ARRIVAL_REJECTED,
    DOWNGRADE_CASCADE,
    PREEMPT_DISCARD,
)

_ARRIVAL_KINDS = (
    ARRIVAL_ACCEPTED,
    ARRIVAL_REJECTED,
    ARRIVAL_DOWNGRADED,
    PREEMPT_DISCARD,
    DOWNGRADE_CASCADE,
)

GOOSE_DIM = 0
VIDEO_DIM = 1


def make_grid(horizon_ms: float, grid_ms: float) -> np.ndarray:
    n = int(round(horizon_ms / grid_ms))
    return np.arange(n + 1) * grid_ms


def session_curves(traj: TrajectoryRecord, grid: np.ndarray) -> np.ndarray:
    """Per-dimension session counts sampled on a time grid (right-continuous)."""
    out = np.empty((traj.n_dims, len(grid)), dtype=float)
    counts = traj.initial_counts
    ev = 0
    events = traj.events
    for g, t in enumerate(grid):
        while ev < len(events) and events[ev].t_ms <= t:
            counts = events[ev].counts
            ev += 1
        out[:, g] = counts
    return out


def time_average_counts(traj: TrajectoryRecord) -> np.ndarray:
    """Exact time average of each dimension's count over the observed window."""
    end = traj.end_ms
    acc = np.zeros(traj.n_dims)
    counts = np.asarray(traj.initial_counts, dtype=float)
    t_prev = 0.0
    for e in traj.events:
        t = min(e.t_ms, end)
        if t > t_prev:
            acc += counts * (t - t_prev)
            t_prev = t
        counts = np.asarray(e.counts, dtype=float)
        if e.t_ms >= end:
            break
    if end > t_prev:
        acc += counts * (end - t_prev)
    return acc / end if end > 0 else acc


def utilization(
    traj: TrajectoryRecord, grid: np.ndarray | None = None
) -> tuple[np.ndarray, float]:
    """Block utilization on a grid plus its exact time average.

    Utilization is occupied blocks over capacity; the average integrates the
    piecewise-constant path over the observed window.
    """
    demands = np.asarray(traj.demands, dtype=float)
    mean_counts = time_average_counts(traj)
    rho_avg = float(mean_counts @ demands) / traj.capacity
    if grid is None:
        grid = make_grid(traj.horizon_ms, 10.0)
    curves = session_curves(traj, grid)
    rho_t = (demands @ curves) / traj.capacity
    return rho_t, rho_avg


def goose_presence_window(traj: TrajectoryRecord) -> tuple[float, float] | None:
    """(first time the priority count becomes positive, last time it is).

    Returns None when no priority session was ever present. The upper end is
    the observation end when sessions are still present there.
    """
    first = None
    last = None
    count = traj.initial_counts[GOOSE_DIM]
    if count > 0:
        first = 0.0
    positive = count > 0
    for e in traj.events:
        if e.t_ms > traj.end_ms:
            break
        now = e.counts[GOOSE_DIM]
        if now > 0 and not positive and first is None:
            first = e.t_ms
        if positive and now == 0:
            last = e.t_ms
        positive = now > 0
    if first is None:
        return None
    if positive:
        last = traj.end_ms
    return first, last if last is not None else traj.end_ms


def burst_period(traj: TrajectoryRecord) -> tuple[float | None, float | None]:
    """(burst period, burst duration) in ms; None when never observed.

    The burst period runs from the injection instant to the last time a
    priority session is present; the burst duration from the first priority
    entry to that same instant.
    """
    window = goose_presence_window(traj)
    if window is None:
        return None, None
    first, last = window
    duration = last - first
    if traj.t_inject_ms is None:
        return None, duration
    return last - traj.t_inject_ms, duration


@dataclass
class ReplicationSummary:
    """Scalar metrics plus gridded curves for one replication."""

    replication: int
    seed: int
    rho_avg: float
    burst_period_ms: float | None
    burst_duration_ms: float | None
    r_rj: float | None
    r_dw: float | None
    r_dc: float | None
    r_v: float | None
    n_ga: int
    counts: dict[str, int]
    grid: np.ndarray
    rho_t: np.ndarray
    m_t: np.ndarray  # n_dims x len(grid)


def ratios(traj: TrajectoryRecord, whole_window_r_v: bool = False) -> dict:
    """Loss/downgrade bookkeeping over the observed window.

    ``r_rj``, ``r_dw``, ``r_dc`` divide by the number of video arrivals over
    the whole window; ``r_dw`` counts both cascade downgrades of ongoing
    sessions and downgraded admissions. ``r_v`` is the rejection ratio of
    the priority-free part of the run: video rejections that happen with no
    priority session present, over video arrivals in that same condition
    (set ``whole_window_r_v`` to divide whole-window rejections by all
    arrivals instead).
    """
    video_arrivals = 0
    video_rejected = 0
    downgraded = 0
    discarded = 0
    gf_arrivals = 0
    gf_rejected = 0
    goose_arrivals = 0
    goose_rejected = 0
    pre = 0
    t_inject = traj.t_inject_ms

    goose_before = traj.initial_counts[GOOSE_DIM]
    for e in traj.events:
        if e.t_ms > traj.end_ms:
            break
        if e.kind in _ARRIVAL_KINDS:
            if e.dim == VIDEO_DIM:
                video_arrivals += 1
                if t_inject is not None and e.t_ms < t_inject:
                    pre += 1
                rejected = e.kind == ARRIVAL_REJECTED
                video_rejected += rejected
                if goose_before == 0:
                    gf_arrivals += 1
                    gf_rejected += rejected
            elif e.dim == GOOSE_DIM:
                goose_arrivals += 1
                goose_rejected += e.kind == ARRIVAL_REJECTED
        downgraded += e.downgraded
        discarded += e.discarded
        goose_before = e.counts[GOOSE_DIM]

    n_ga = video_arrivals
    counts = {
        "video_arrivals": video_arrivals,
        "video_rejected": video_rejected,
        "video_downgraded": downgraded,
        "video_discarded": discarded,
        "goose_arrivals": goose_arrivals,
        "goose_rejected": goose_rejected,
        "n_ga_pre_inject": pre,
        "n_ga_post_inject": video_arrivals - pre,
        "goose_free_arrivals": gf_arrivals,
        "goose_free_rejected": gf_rejected,
    }
    if n_ga == 0:
        return {"n_ga": 0, "r_rj": None, "r_dw": None, "r_dc": None,
                "r_v": None, "counts": counts}
    if whole_window_r_v:
        r_v = video_rejected / n_ga
    else:
        r_v = gf_rejected / gf_arrivals if gf_arrivals else None
    return {
        "n_ga": n_ga,
        "r_rj": video_rejected / n_ga,
        "r_dw": downgraded / n_ga,
        "r_dc": discarded / n_ga,
        "r_v": r_v,
        "counts": counts,
    }


def empirical_blocking(traj: TrajectoryRecord) -> dict[int, tuple[int, int]]:
    """Per-dimension (arrivals, outright rejections) over the window."""
    out: dict[int, list[int]] = {}
    for e in traj.events:
        if e.t_ms > traj.end_ms:
            break
        if e.kind in _ARRIVAL_KINDS:
            arr, rej = out.setdefault(e.dim, [0, 0])
            out[e.dim][0] = arr + 1
            out[e.dim][1] = rej + (e.kind == ARRIVAL_REJECTED)
    return {dim: (a, r) for dim, (a, r) in out.items()}


def summarize(
    traj: TrajectoryRecord,
    grid_ms: float = 10.0,
    whole_window_r_v: bool = False,
) -> ReplicationSummary:
    grid = make_grid(traj.horizon_ms, grid_ms)
    rho_t, rho_avg = utilization(traj, grid)
    period, duration = burst_period(traj)
    r = ratios(traj, whole_window_r_v=whole_window_r_v)
    return ReplicationSummary(
        replication=traj.replication,
        seed=traj.seed,
        rho_avg=rho_avg,
        burst_period_ms=period,
        burst_duration_ms=duration,
        r_rj=r["r_rj"],
        r_dw=r["r_dw"],
        r_dc=r["r_dc"],
        r_v=r["r_v"],
        n_ga=r["n_ga"],
        counts=r["counts"],
        grid=grid,
        rho_t=rho_t,
        m_t=session_curves(traj, grid),
    )


SCALAR_METRICS = (
    "rho_avg",
    "burst_period_ms",
    "burst_duration_ms",
    "r_rj",
    "r_dw",
    "r_dc",
    "r_v",
    "n_ga",
)


@dataclass
class ExperimentSummary:
    """Unbiased sample mean/variance per metric and per grid point."""

    n_replications: int
    mean: dict[str, float | None]
    variance: dict[str, float | None]
    grid: np.ndarray
    mean_m_t: np.ndarray
    var_m_t: np.ndarray
    mean_rho_t: np.ndarray
    metric_samples: dict[str, list[float]] = field(default_factory=dict)


def _mean_var(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    var = float(arr.var(ddof=1)) if len(arr) > 1 else float("nan")
    return mean, var


def aggregate(summaries: list[ReplicationSummary]) -> ExperimentSummary:
    """Cross-replication mean and (n-1)-normalized variance.

    Metrics that are absent in a replication (no burst observed, no
    arrivals) are aggregated over the replications where they exist.
    """
    if not summaries:
        raise ValueError("need at least one replication summary")
    grid = summaries[0].grid
    for s in summaries[1:]:
        if len(s.grid) != len(grid) or not np.array_equal(s.grid, grid):
            raise ValueError("replication summaries use different grids")

    mean: dict[str, float | None] = {}
    variance: dict[str, float | None] = {}
    samples: dict[str, list[float]] = {}
    for name in SCALAR_METRICS:
        values = [getattr(s, name) for s in summaries if getattr(s, name) is not None]
        samples[name] = [float(v) for v in values]
        mean[name], variance[name] = _mean_var(samples[name])

    m_stack = np.stack([s.m_t for s in summaries])  # reps x dims x grid
    rho_stack = np.stack([s.rho_t for s in summaries])
    n = len(summaries)
    return ExperimentSummary(
        n_replications=n,
        mean=mean,
        variance=variance,
        grid=grid,
        mean_m_t=m_stack.mean(axis=0),
        var_m_t=m_stack.var(axis=0, ddof=1) if n > 1 else np.full_like(m_stack[0], np.nan),
        mean_rho_t=rho_stack.mean(axis=0),
        metric_samples=samples,
    )

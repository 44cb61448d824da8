"""Shared builders for the test suite."""

import pytest

from ranburst import RadioConfig, TrafficClass

# Default experiment pool: 25 MHz channel, numerology 2, 31 PRBs -> 22320 kHz
# usable, 62 blocks of 360 kHz.
RADIO62 = RadioConfig(25000, 360, 22320, 62)
# Small ten-block pool for exhaustive checks.
RADIO10 = RadioConfig(4000, 360, 3600, 10)


def goose_class(priority="high", arrival_rate=0.0, max_sessions=62):
    return TrafficClass(1, arrival_rate, 1 / 60, 1, max_sessions, priority)


def video_class(priority="low", arrival_rate=1 / 20, adaptive=False, max_sessions=31):
    return TrafficClass(
        2,
        arrival_rate,
        1 / 600,
        2,
        max_sessions,
        priority,
        adaptive=adaptive,
        downgraded_demand_blocks=1 if adaptive else None,
    )


def table2_classes(policy, lam2=1 / 20):
    if policy == "NC1":
        return [goose_class("none"), video_class("none", lam2)]
    if policy == "NC2":
        return [goose_class(), video_class("low", lam2)]
    return [goose_class(), video_class("low", lam2, adaptive=True)]


@pytest.fixture
def radio62():
    return RADIO62


@pytest.fixture
def radio10():
    return RADIO10

"""Shared fixtures: hand-sized flights, quarters, advisories and scenarios."""

import numpy as np
import pytest

from sagdp.data_model import (
    AirportQuarter,
    FlightRecord,
    GdpAdvisory,
    ScopeKind,
    build_scenario,
)

AIRPORT = "APT"


def make_flight(
    fid="F1",
    sched_arr=20,
    enroute=4,
    actual_dep=None,
    distance=500.0,
    center="ZNY",
    origin="ABE",
    dest=AIRPORT,
):
    return FlightRecord(
        flight_id=fid,
        origin=origin,
        dest=dest,
        sched_dep=sched_arr - enroute,
        sched_arr=sched_arr,
        actual_dep=actual_dep,
        enroute_quarters=enroute,
        origin_center=center,
        origin_distance_nm=distance,
    )


def make_quarter(t, arr_rate=10, wind_speed=8.0, runway_count=2, arr_demand=0, dep_demand=0):
    return AirportQuarter(
        t=t,
        arr_rate=arr_rate,
        ceiling_100ft=50.0,
        wind_angle_deg=180,
        wind_speed=wind_speed,
        visibility_sm=9.0,
        runway_count=runway_count,
        sched_arr_demand=arr_demand,
        sched_dep_demand=dep_demand,
    )


def make_advisory(
    release_t=0,
    start_t=5,
    end_t=70,
    kind=ScopeKind.DISTANCE,
    distance=1000.0,
    centers=None,
    airport=AIRPORT,
):
    if kind is ScopeKind.DISTANCE:
        return GdpAdvisory(
            airport=airport,
            release_t=release_t,
            start_t=start_t,
            end_t=end_t,
            scope_kind=kind,
            scope_distance_nm=distance,
        )
    return GdpAdvisory(
        airport=airport,
        release_t=release_t,
        start_t=start_t,
        end_t=end_t,
        scope_kind=kind,
        scope_centers=frozenset(centers or {"ZNY", "ZDC"}),
    )


def make_scenario(flights=(), advisory=None, arr_rate=10, seed=0):
    quarters = [make_quarter(t, arr_rate=arr_rate) for t in range(80)]
    return build_scenario(quarters, flights, advisory or make_advisory(), seed=seed)


@pytest.fixture
def empty_scenario():
    return make_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

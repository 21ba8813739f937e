"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from adaptivefog.mobility import MobilityModel
from adaptivefog.stats import EmpiricalCdf, LatencyModel
from adaptivefog.trace import GridSpec, RttSample, Server, ServiceClass

ORIGIN_LAT = 32.2319
ORIGIN_LON = -110.9501


@pytest.fixture
def grid() -> GridSpec:
    return GridSpec(origin_lat=ORIGIN_LAT, origin_lon=ORIGIN_LON)


def make_sample(
    grid: GridSpec,
    t_ms: int = 0,
    x_m: float = 0.0,
    y_m: float = 0.0,
    speed: float = 0.0,
    network: int = 0,
    server: Server = Server.FOG,
    rtt: float = 80.0,
) -> RttSample:
    lat, lon = grid.latlon_of_xy(x_m, y_m)
    return RttSample(
        timestamp_ms=t_ms,
        lat=lat,
        lon=lon,
        speed_mps=speed,
        network_id=network,
        server=server,
        rtt_ms=rtt,
    )


def service(r: float, w: float, sid: int = 0) -> ServiceClass:
    return ServiceClass(id=sid, max_latency_ms=r, weight=w)


def uniform_mobility(states) -> MobilityModel:
    n = len(states)
    return MobilityModel(
        states=list(states), matrix=np.full((n, n), 1.0 / n), slot_ms=500.0
    )


def model_from_cdfs(grid: GridSpec, entries: dict, min_samples: int = 1) -> LatencyModel:
    """Build a LatencyModel straight from (cell, bin, net, server) -> values."""
    direct = {k: EmpiricalCdf(v) for k, v in entries.items()}
    net_pool: dict[tuple[int, Server], list[float]] = {}
    cell_pool: dict[tuple[tuple[int, int], int, Server], list[float]] = {}
    for (cell, _bin, net, server), values in entries.items():
        net_pool.setdefault((net, server), []).extend(values)
        cell_pool.setdefault((cell, net, server), []).extend(values)
    return LatencyModel(
        grid,
        min_samples,
        direct,
        {k: EmpiricalCdf(v) for k, v in cell_pool.items()},
        {k: EmpiricalCdf(v) for k, v in net_pool.items()},
    )

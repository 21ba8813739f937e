"""Domain types, trace CSV ingestion, and state-space discretization.

A trace file is UTF-8 CSV with the exact header

    timestamp_ms,lat,lon,speed_mps,network_id,server,rtt_ms

where ``server`` is ``fog`` or ``cloud``. Malformed rows are skipped and
counted rather than aborting the parse; field campaigns produce dirty data.

Continuous position and speed are mapped onto a finite state space by
:class:`GridSpec`: a square grid of ``cell_size_m`` cells under a local
equirectangular projection around the grid origin, and half-open speed
bins ``[edge_k, edge_{k+1})`` with the last bin open-ended.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable, NamedTuple

from .errors import ConfigError, TraceFormatError, TraceRangeError

TRACE_HEADER = "timestamp_ms,lat,lon,speed_mps,network_id,server,rtt_ms"

EARTH_RADIUS_M = 6371000.0

DEFAULT_CELL_SIZE_M = 100.0
# Brackets typical low-speed urban driving vs arterial-road driving.
DEFAULT_SPEED_BIN_EDGES = (0.0, 2.5, 7.5, 12.5, 17.5)


class Server(Enum):
    """Compute target a request is served by: edge fog node or cloud DC."""

    FOG = "fog"
    CLOUD = "cloud"


@dataclass(frozen=True)
class RttSample:
    """One timestamped round-trip-time measurement.

    Immutable after construction; invariants are checked eagerly so that
    downstream code never sees a negative RTT or an out-of-range position.
    """

    timestamp_ms: int
    lat: float
    lon: float
    speed_mps: float
    network_id: int
    server: Server
    rtt_ms: float

    def __post_init__(self):
        if not self.rtt_ms > 0:
            raise ValueError(f"rtt_ms must be > 0, got {self.rtt_ms}")
        if self.speed_mps < 0:
            raise ValueError(f"speed_mps must be >= 0, got {self.speed_mps}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat out of range: {self.lat}")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon out of range: {self.lon}")
        if self.network_id < 0:
            raise ValueError(f"network_id must be >= 0, got {self.network_id}")


@dataclass(frozen=True)
class ServiceClass:
    """A service type with its tolerable latency and weight.

    ``weight`` may be read as the probability the service is requested or
    as a pure priority; only ``weight >= 0`` (and a positive sum over a
    service set) is enforced.
    """

    id: int
    max_latency_ms: float
    weight: float

    def __post_init__(self):
        if not self.max_latency_ms > 0:
            raise ValueError(f"max_latency_ms must be > 0, got {self.max_latency_ms}")
        if self.weight < 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")


@dataclass(frozen=True)
class GridSpec:
    """Square spatial grid plus speed binning for state discretization."""

    origin_lat: float
    origin_lon: float
    cell_size_m: float = DEFAULT_CELL_SIZE_M
    speed_bin_edges: tuple[float, ...] = DEFAULT_SPEED_BIN_EDGES
    max_offset_deg: float = 0.5

    def __post_init__(self):
        if not self.cell_size_m > 0:
            raise ConfigError(f"cell_size_m must be > 0, got {self.cell_size_m}")
        edges = tuple(float(e) for e in self.speed_bin_edges)
        object.__setattr__(self, "speed_bin_edges", edges)
        if not edges or edges[0] != 0.0:
            raise ConfigError("speed_bin_edges must start at 0")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ConfigError("speed_bin_edges must be strictly increasing")
        if not self.max_offset_deg > 0:
            raise ConfigError("max_offset_deg must be > 0")

    def local_xy_m(self, lat: float, lon: float) -> tuple[float, float]:
        """Equirectangular projection of (lat, lon) to meters east/north of origin."""
        k = math.pi / 180.0 * EARTH_RADIUS_M
        x = (lon - self.origin_lon) * k * math.cos(math.radians(self.origin_lat))
        y = (lat - self.origin_lat) * k
        return x, y

    def latlon_of_xy(self, x_m: float, y_m: float) -> tuple[float, float]:
        """Inverse of :meth:`local_xy_m` (used by the synthetic generator)."""
        k = math.pi / 180.0 * EARTH_RADIUS_M
        lat = self.origin_lat + y_m / k
        lon = self.origin_lon + x_m / (k * math.cos(math.radians(self.origin_lat)))
        return lat, lon

    def cell_of(self, lat: float, lon: float) -> tuple[int, int]:
        if (
            abs(lat - self.origin_lat) > self.max_offset_deg
            or abs(lon - self.origin_lon) > self.max_offset_deg
        ):
            raise TraceRangeError(
                f"position ({lat}, {lon}) farther than {self.max_offset_deg} deg "
                f"from grid origin ({self.origin_lat}, {self.origin_lon})"
            )
        x, y = self.local_xy_m(lat, lon)
        return math.floor(x / self.cell_size_m), math.floor(y / self.cell_size_m)

    def speed_bin_of(self, speed_mps: float) -> int:
        """Index of the half-open bin [edge_k, edge_{k+1}); last bin is open-ended."""
        edges = self.speed_bin_edges
        for k in range(len(edges) - 1, -1, -1):
            if speed_mps >= edges[k]:
                return k
        return 0

    @property
    def n_speed_bins(self) -> int:
        return len(self.speed_bin_edges)


@dataclass(frozen=True)
class DiscreteState:
    """Grid cell, speed bin, and attached network; valid w.r.t. one GridSpec."""

    cell: tuple[int, int]
    speed_bin: int
    network: int


def discretize(sample: RttSample, grid: GridSpec) -> DiscreteState:
    """Map a sample onto the finite state space defined by ``grid``.

    Raises :class:`TraceRangeError` for samples outside the grid bound.
    """
    return DiscreteState(
        cell=grid.cell_of(sample.lat, sample.lon),
        speed_bin=grid.speed_bin_of(sample.speed_mps),
        network=sample.network_id,
    )


class ParseResult(NamedTuple):
    samples: list[RttSample]
    skipped: int


def _parse_row(fields: list[str]) -> RttSample:
    if len(fields) != 7:
        raise ValueError(f"expected 7 fields, got {len(fields)}")
    return RttSample(
        timestamp_ms=int(fields[0]),
        lat=float(fields[1]),
        lon=float(fields[2]),
        speed_mps=float(fields[3]),
        network_id=int(fields[4]),
        server=Server(fields[5].strip().lower()),
        rtt_ms=float(fields[6]),
    )


def parse_trace(stream: IO) -> ParseResult:
    """Parse a trace CSV stream into samples, skipping and counting bad rows.

    ``stream`` may be text or binary (decoded as UTF-8). A missing or
    mismatched header raises :class:`TraceFormatError`; an unreadable stream
    raises whatever I/O error the underlying file object produces.
    """
    header = stream.readline()
    if isinstance(header, bytes):
        try:
            header = header.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(f"trace is not UTF-8: {exc}") from exc
        lines: Iterable[str] = (
            raw.decode("utf-8", errors="replace") for raw in stream
        )
    else:
        lines = stream
    if header.strip() != TRACE_HEADER:
        raise TraceFormatError(
            f"bad trace header {header.strip()!r}; expected {TRACE_HEADER!r}"
        )
    samples: list[RttSample] = []
    skipped = 0
    for line in lines:
        line = line.strip()
        if not line:
            continue
        try:
            samples.append(_parse_row(line.split(",")))
        except (ValueError, KeyError):
            skipped += 1
    return ParseResult(samples, skipped)


def serialize_trace(samples: Iterable[RttSample], stream: IO) -> None:
    """Write samples in the trace CSV layout; inverse of :func:`parse_trace`.

    Floats are written with ``repr`` so a parse/serialize round trip is the
    identity on valid sample lists.
    """
    stream.write(TRACE_HEADER + "\n")
    for s in samples:
        stream.write(
            f"{s.timestamp_ms},{s.lat!r},{s.lon!r},{s.speed_mps!r},"
            f"{s.network_id},{s.server.value},{s.rtt_ms!r}\n"
        )


def grid_to_dict(grid: GridSpec) -> dict:
    return {
        "origin_lat": grid.origin_lat,
        "origin_lon": grid.origin_lon,
        "cell_size_m": grid.cell_size_m,
        "speed_bin_edges": list(grid.speed_bin_edges),
        "max_offset_deg": grid.max_offset_deg,
    }


def grid_from_dict(doc: dict) -> GridSpec:
    try:
        return GridSpec(
            origin_lat=float(doc["origin_lat"]),
            origin_lon=float(doc["origin_lon"]),
            cell_size_m=float(doc.get("cell_size_m", DEFAULT_CELL_SIZE_M)),
            speed_bin_edges=tuple(
                doc.get("speed_bin_edges", DEFAULT_SPEED_BIN_EDGES)
            ),
            max_offset_deg=float(doc.get("max_offset_deg", 0.5)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid spec: {exc}") from exc


def services_from_list(items: list) -> tuple[ServiceClass, ...]:
    try:
        services = tuple(
            ServiceClass(
                id=int(item["id"]),
                max_latency_ms=float(item["max_latency_ms"]),
                weight=float(item["weight"]),
            )
            for item in items
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad service set: {exc}") from exc
    if not services:
        raise ConfigError("service set is empty")
    if not sum(s.weight for s in services) > 0:
        raise ConfigError("service weights must sum to a positive value")
    if len({s.id for s in services}) != len(services):
        raise ConfigError("service ids must be unique")
    return services


def services_to_list(services: Iterable[ServiceClass]) -> list[dict]:
    return [
        {"id": s.id, "max_latency_ms": s.max_latency_ms, "weight": s.weight}
        for s in services
    ]


def load_config(path: str) -> tuple[GridSpec, tuple[ServiceClass, ...]]:
    """Read the JSON config holding the grid spec and the service set.

    Schema::

        {
          "grid": {"origin_lat": ..., "origin_lon": ..., "cell_size_m": 100.0,
                   "speed_bin_edges": [0.0, 2.5, 7.5, 12.5, 17.5],
                   "max_offset_deg": 0.5},
          "services": [{"id": 0, "max_latency_ms": 100.0, "weight": 0.3333}, ...]
        }
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict) or "grid" not in doc or "services" not in doc:
        raise ConfigError("config must contain 'grid' and 'services'")
    return grid_from_dict(doc["grid"]), services_from_list(doc["services"])

"""Empirical CDFs, confidence metrics, and the per-state latency model.

The three scalar metrics all evaluate empirical CDFs at service latency
thresholds:

* ``confidence(F, r)``       -- fraction of samples <= r (closed at r),
* ``weighted_confidence``    -- sum of w_i * confidence(F_i, r_i),
* ``kr_distance(F, G)``      -- sum of w_i * (F(r_i) - G(r_i)), the signed
  weighted gap between two networks' confidence levels.

``switching_penalty`` quantifies the confidence lost when a network switch
inflates the target network's effective latency by ``c`` milliseconds; a
scalar mode carries a directly configured penalty for cost sweeps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np

from .errors import CoverageError, ModelFitError
from .trace import (
    DiscreteState,
    GridSpec,
    RttSample,
    Server,
    ServiceClass,
    discretize,
    grid_from_dict,
    grid_to_dict,
)

DEFAULT_MIN_SAMPLES = 30

MODEL_FORMAT = "adaptivefog-latency-model"
MODEL_VERSION = 1

# Number of grid points kept when a model is serialized with exact=False.
QUANTILE_SKETCH_POINTS = 512


class EmpiricalCdf:
    """Right-continuous step CDF over a fixed sample of latency values."""

    __slots__ = ("values",)

    def __init__(self, values: Iterable[float]):
        arr = np.sort(np.asarray(list(values), dtype=float))
        if arr.size == 0:
            raise ValueError("EmpiricalCdf needs at least one value")
        if not np.all(np.isfinite(arr)):
            raise ValueError("EmpiricalCdf values must be finite")
        self.values = arr

    @property
    def sample_count(self) -> int:
        return int(self.values.size)

    def evaluate(self, t: float) -> float:
        """Fraction of samples <= t; 0 before the min value, 1 at/after the max."""
        return float(np.searchsorted(self.values, t, side="right")) / self.values.size

    __call__ = evaluate

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        """Draw n values uniformly from the stored sample (inverse-CDF)."""
        return self.values[rng.integers(0, self.values.size, size=n)]

    def summary(self) -> dict:
        v = self.values
        return {
            "count": int(v.size),
            "mean": float(np.mean(v)),
            "std": float(np.std(v)),
            "median": float(np.median(v)),
            "p90": float(np.percentile(v, 90)),
        }

    def __repr__(self):
        return f"EmpiricalCdf(n={self.values.size}, min={self.values[0]:.1f}, max={self.values[-1]:.1f})"


def confidence(cdf: EmpiricalCdf, r_ms: float) -> float:
    """Probability that latency stays within the tolerable threshold r."""
    if not r_ms > 0:
        raise ValueError(f"threshold must be > 0, got {r_ms}")
    return cdf.evaluate(r_ms)


CdfPerService = Union[EmpiricalCdf, Mapping[int, EmpiricalCdf]]


def _cdf_for(cdfs: CdfPerService, service: ServiceClass) -> EmpiricalCdf:
    if isinstance(cdfs, EmpiricalCdf):
        return cdfs
    try:
        return cdfs[service.id]
    except KeyError:
        raise ValueError(f"no CDF supplied for service {service.id}") from None


def weighted_confidence(
    cdfs: CdfPerService, services: Sequence[ServiceClass]
) -> float:
    """Aggregate confidence over a service set: sum of w_i * F_i(r_i).

    ``cdfs`` is either one CDF shared by all services or a map from
    service id to CDF.
    """
    if not services:
        raise ValueError("service set is empty")
    return sum(
        s.weight * confidence(_cdf_for(cdfs, s), s.max_latency_ms) for s in services
    )


def kr_distance(
    f: EmpiricalCdf, g: EmpiricalCdf, services: Sequence[ServiceClass]
) -> float:
    """Weighted Kantorovich-Rubinstein distance between two latency CDFs.

    Signed: positive when ``f`` offers higher confidence than ``g`` at the
    service thresholds. Antisymmetric by construction, bounded by the sum
    of the weights.
    """
    if not services:
        raise ValueError("service set is empty")
    return sum(
        s.weight * (f.evaluate(s.max_latency_ms) - g.evaluate(s.max_latency_ms))
        for s in services
    )


@dataclass(frozen=True)
class ScalarPenalty:
    """Directly configured confidence penalty per network switch."""

    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValueError(f"penalty must be >= 0, got {self.value}")


@dataclass(frozen=True)
class CdfShiftPenalty:
    """Penalty = confidence mass lost when the target CDF shifts right by c ms."""

    extra_latency_ms: float

    def __post_init__(self):
        if self.extra_latency_ms < 0:
            raise ValueError(
                f"extra latency must be >= 0, got {self.extra_latency_ms}"
            )


SwitchCost = Union[ScalarPenalty, CdfShiftPenalty]


def switching_penalty(
    target: EmpiricalCdf,
    services: Sequence[ServiceClass],
    c_ms: float,
    mode: SwitchCost,
) -> float:
    """Confidence reduction charged for switching onto ``target``.

    In scalar mode the configured value is returned unchanged. In CDF-shift
    mode the switch is modeled as ``c_ms`` of extra latency on the target
    network, so the penalty is sum of w_i * (F(r_i) - F(r_i - c)).
    """
    if c_ms < 0:
        raise ValueError(f"extra latency must be >= 0, got {c_ms}")
    if isinstance(mode, ScalarPenalty):
        return mode.value
    if not services:
        raise ValueError("service set is empty")
    return sum(
        s.weight
        * (target.evaluate(s.max_latency_ms) - target.evaluate(s.max_latency_ms - c_ms))
        for s in services
    )


def effective_switch_cost(cost: SwitchCost, target: EmpiricalCdf | None,
                          services: Sequence[ServiceClass]) -> float:
    """Resolve a SwitchCost to the constant confidence penalty the MDP uses."""
    if isinstance(cost, ScalarPenalty):
        return cost.value
    if target is None:
        raise ValueError("CDF-shift cost needs a target CDF")
    return switching_penalty(target, services, cost.extra_latency_ms, cost)


StateKey = tuple[tuple[int, int], int, int, Server]  # (cell, speed_bin, network, server)


@dataclass(frozen=True)
class CdfLookup:
    """A resolved CDF plus the fallback level that produced it."""

    cdf: EmpiricalCdf
    fallback: str  # "direct" | "cell" | "network"

    @property
    def is_fallback(self) -> bool:
        return self.fallback != "direct"


class LatencyModel:
    """Per-state empirical latency CDFs with a pooling fallback ladder.

    Direct entries exist for every (cell, speed_bin, network, server) group
    with at least ``min_samples`` samples. Sparser states resolve through
    pools that preserve per-network identity:

        (cell, speed_bin, network, server)
          -> (cell, any speed_bin, network, server)
          -> (network, server) global pool

    Lookups report which rung served them via :class:`CdfLookup`.
    """

    def __init__(
        self,
        grid: GridSpec,
        min_samples: int,
        direct: Mapping[StateKey, EmpiricalCdf],
        cell_pools: Mapping[tuple[tuple[int, int], int, Server], EmpiricalCdf],
        network_pools: Mapping[tuple[int, Server], EmpiricalCdf],
    ):
        self.grid = grid
        self.min_samples = int(min_samples)
        self._direct = dict(direct)
        self._cell_pools = dict(cell_pools)
        self._network_pools = dict(network_pools)

    @property
    def networks(self) -> tuple[int, ...]:
        return tuple(sorted({n for n, _ in self._network_pools}))

    @property
    def direct_keys(self) -> list[StateKey]:
        return list(self._direct)

    def network_pool(self, network: int, server: Server) -> EmpiricalCdf:
        try:
            return self._network_pools[(network, server)]
        except KeyError:
            raise CoverageError(
                f"no pooled CDF for network {network} / {server.value}"
            ) from None

    def lookup(
        self, cell: tuple[int, int], speed_bin: int, network: int, server: Server
    ) -> CdfLookup:
        key = (cell, speed_bin, network, server)
        if key in self._direct:
            return CdfLookup(self._direct[key], "direct")
        cell_key = (cell, network, server)
        if cell_key in self._cell_pools:
            return CdfLookup(self._cell_pools[cell_key], "cell")
        net_key = (network, server)
        if net_key in self._network_pools:
            return CdfLookup(self._network_pools[net_key], "network")
        raise CoverageError(
            f"no CDF for cell={cell} bin={speed_bin} network={network} "
            f"server={server.value}, and no fallback pool covers it"
        )

    def lookup_state(self, state: DiscreteState, server: Server) -> CdfLookup:
        return self.lookup(state.cell, state.speed_bin, state.network, server)

    # -- serialization -----------------------------------------------------

    def to_dict(self, exact: bool = True) -> dict:
        def dump(cdf: EmpiricalCdf) -> list[float]:
            if exact or cdf.sample_count <= QUANTILE_SKETCH_POINTS:
                return [float(v) for v in cdf.values]
            qs = np.linspace(0.0, 1.0, QUANTILE_SKETCH_POINTS)
            return [float(v) for v in np.quantile(cdf.values, qs)]

        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "exact": bool(exact),
            "grid": grid_to_dict(self.grid),
            "min_samples": self.min_samples,
            "direct": [
                {
                    "cell": list(cell),
                    "speed_bin": bin_,
                    "network_id": net,
                    "server": server.value,
                    "values": dump(cdf),
                }
                for (cell, bin_, net, server), cdf in sorted(
                    self._direct.items(),
                    key=lambda kv: (kv[0][0], kv[0][1], kv[0][2], kv[0][3].value),
                )
            ],
            "cell_pools": [
                {
                    "cell": list(cell),
                    "network_id": net,
                    "server": server.value,
                    "values": dump(cdf),
                }
                for (cell, net, server), cdf in sorted(
                    self._cell_pools.items(),
                    key=lambda kv: (kv[0][0], kv[0][1], kv[0][2].value),
                )
            ],
            "network_pools": [
                {
                    "network_id": net,
                    "server": server.value,
                    "values": dump(cdf),
                }
                for (net, server), cdf in sorted(
                    self._network_pools.items(),
                    key=lambda kv: (kv[0][0], kv[0][1].value),
                )
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "LatencyModel":
        if doc.get("format") != MODEL_FORMAT:
            raise ModelFitError(f"not a latency model document: {doc.get('format')!r}")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFitError(f"unsupported model version {doc.get('version')!r}")
        direct = {
            (
                tuple(e["cell"]),
                int(e["speed_bin"]),
                int(e["network_id"]),
                Server(e["server"]),
            ): EmpiricalCdf(e["values"])
            for e in doc["direct"]
        }
        cell_pools = {
            (tuple(e["cell"]), int(e["network_id"]), Server(e["server"])): EmpiricalCdf(
                e["values"]
            )
            for e in doc["cell_pools"]
        }
        network_pools = {
            (int(e["network_id"]), Server(e["server"])): EmpiricalCdf(e["values"])
            for e in doc["network_pools"]
        }
        return cls(
            grid=grid_from_dict(doc["grid"]),
            min_samples=int(doc["min_samples"]),
            direct=direct,
            cell_pools=cell_pools,
            network_pools=network_pools,
        )

    def save(self, stream: IO, exact: bool = True) -> None:
        json.dump(self.to_dict(exact=exact), stream)

    @classmethod
    def load(cls, stream: IO) -> "LatencyModel":
        return cls.from_dict(json.load(stream))


def fit_model(
    samples: Sequence[RttSample],
    grid: GridSpec,
    min_samples: int = DEFAULT_MIN_SAMPLES,
) -> LatencyModel:
    """Group samples by discrete state and server and build per-group CDFs.

    Groups below ``min_samples`` get no direct entry; they are served by the
    fallback pools. Fitting fails only when not even one (network, server)
    global pool reaches ``min_samples``.
    """
    if not samples:
        raise ModelFitError("no samples to fit")
    if min_samples < 1:
        raise ValueError("min_samples must be >= 1")

    direct_values: dict[StateKey, list[float]] = {}
    cell_values: dict[tuple[tuple[int, int], int, Server], list[float]] = {}
    net_values: dict[tuple[int, Server], list[float]] = {}
    for s in samples:
        state = discretize(s, grid)
        key = (state.cell, state.speed_bin, s.network_id, s.server)
        direct_values.setdefault(key, []).append(s.rtt_ms)
        cell_values.setdefault((state.cell, s.network_id, s.server), []).append(s.rtt_ms)
        net_values.setdefault((s.network_id, s.server), []).append(s.rtt_ms)

    direct = {
        k: EmpiricalCdf(v) for k, v in direct_values.items() if len(v) >= min_samples
    }
    cell_pools = {
        k: EmpiricalCdf(v) for k, v in cell_values.items() if len(v) >= min_samples
    }
    network_pools = {
        k: EmpiricalCdf(v) for k, v in net_values.items() if len(v) >= min_samples
    }
    if not network_pools:
        raise ModelFitError(
            f"every (network, server) pool has fewer than {min_samples} samples"
        )
    return LatencyModel(grid, min_samples, direct, cell_pools, network_pools)

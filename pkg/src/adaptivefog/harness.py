"""Trace-replay evaluation: achieved confidence vs switching cost.

Replay walks aligned per-network sample streams slot by slot, applies a
switch policy at each state, and records the realized RTT of whichever
network the policy keeps the vehicle on. Confidence here is *achieved*
confidence: the fraction of realized RTTs within each service threshold.

``cost_sweep`` re-solves and replays the adaptive policies over a grid of
scalar switching penalties and compares them against the myopic baseline
and both single-network baselines, emitting one curve per (policy,
service threshold).
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from . import oracles
from .errors import CoverageError, ModelFitError
from .mobility import (
    DEFAULT_SESSION_GAP_S,
    MobilityModel,
    MobilityState,
    estimate_transitions,
    split_sessions,
)
from .policy import (
    Finite,
    INFINITE,
    SwitchPolicy,
    SwitchProblem,
    compile_problem,
    myopic_policy,
    never_switch_policy,
    solve_finite,
    solve_infinite,
)
from .stats import LatencyModel, ScalarPenalty, fit_model
from .trace import GridSpec, RttSample, Server, ServiceClass

RESULT_FORMAT = "adaptivefog-sweep-result"
RESULT_VERSION = 1

DEFAULT_FINITE_HORIZON = 8
DEFAULT_TRAIN_FRACTION = 3.0 / 7.0

ADAPTIVE_FINITE = "adaptive-finite"
ADAPTIVE_INFINITE = "adaptive-infinite"
MYOPIC = "myopic"
SINGLE_0 = "single-0"
SINGLE_1 = "single-1"
ALL_POLICIES = (ADAPTIVE_FINITE, ADAPTIVE_INFINITE, MYOPIC, SINGLE_0, SINGLE_1)


def default_services() -> tuple[ServiceClass, ...]:
    """Three service classes at 100/120/150 ms, weighted toward safety traffic."""
    return (
        ServiceClass(id=0, max_latency_ms=100.0, weight=0.5),
        ServiceClass(id=1, max_latency_ms=120.0, weight=0.3),
        ServiceClass(id=2, max_latency_ms=150.0, weight=0.2),
    )


@dataclass
class ReplaySlot:
    """One decision slot: mobility state plus the RTT of every network."""

    state: MobilityState
    rtt: dict[int, float]
    session: int


def train_test_split(
    samples: Sequence[RttSample],
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    session_gap_s: float = DEFAULT_SESSION_GAP_S,
) -> tuple[list[RttSample], list[RttSample]]:
    """Split by driving session: the first fraction trains, the rest tests.

    Sessions are never split, so the two halves are slot-disjoint.
    """
    sessions = split_sessions(samples, session_gap_s)
    if len(sessions) < 2:
        raise ModelFitError(
            f"need at least 2 sessions to split, found {len(sessions)}"
        )
    n_train = max(1, int(len(sessions) * train_fraction))
    n_train = min(n_train, len(sessions) - 1)
    train = [s for sess in sessions[:n_train] for s in sess]
    test = [s for sess in sessions[n_train:] for s in sess]
    return train, test


def build_slots(
    samples: Sequence[RttSample],
    grid: GridSpec,
    server: Server,
    networks: Sequence[int] = (0, 1),
    model: LatencyModel | None = None,
    rng: np.random.Generator | None = None,
    session_gap_s: float = DEFAULT_SESSION_GAP_S,
) -> list[ReplaySlot]:
    """Align a trace into per-slot streams with an RTT for every network.

    Samples sharing a timestamp within a session form one slot. Networks
    not measured in a slot get a counterfactual RTT drawn from the
    latency model's CDF at that state (a seeded ``rng`` is then required);
    synthetic traces carry every network so no draws happen there.
    """
    slots: list[ReplaySlot] = []
    for sess_id, session in enumerate(split_sessions(samples, session_gap_s)):
        i = 0
        while i < len(session):
            j = i
            while j < len(session) and session[j].timestamp_ms == session[i].timestamp_ms:
                j += 1
            group = session[i:j]
            i = j
            first = group[0]
            state = (grid.cell_of(first.lat, first.lon), grid.speed_bin_of(first.speed_mps))
            rtt: dict[int, float] = {}
            for s in group:
                if s.server == server and s.network_id in networks:
                    rtt.setdefault(s.network_id, s.rtt_ms)
            for net in networks:
                if net in rtt:
                    continue
                if model is None or rng is None:
                    raise CoverageError(
                        f"slot at t={first.timestamp_ms} has no {server.value} sample "
                        f"for network {net}; pass a model and rng for counterfactuals"
                    )
                lk = model.lookup(state[0], state[1], net, server)
                rtt[net] = float(lk.cdf.sample(rng, 1)[0])
            slots.append(ReplaySlot(state=state, rtt=rtt, session=sess_id))
    return slots


@dataclass
class ReplayOutcome:
    """Realized performance of one policy over one slot sequence."""

    policy: str
    cost: float
    start_network: int
    slots: int
    confidence: dict[int, float]
    weighted_confidence: float
    rtt_mean: float
    rtt_std: float
    rtt_median: float
    rtt_p90: float
    switch_count: int
    total_penalty: float

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "cost": self.cost,
            "start_network": self.start_network,
            "slots": self.slots,
            "confidence": {str(k): v for k, v in self.confidence.items()},
            "weighted_confidence": self.weighted_confidence,
            "rtt_mean": self.rtt_mean,
            "rtt_std": self.rtt_std,
            "rtt_median": self.rtt_median,
            "rtt_p90": self.rtt_p90,
            "switch_count": self.switch_count,
            "total_penalty": self.total_penalty,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ReplayOutcome":
        return cls(
            policy=doc["policy"],
            cost=float(doc["cost"]),
            start_network=int(doc["start_network"]),
            slots=int(doc["slots"]),
            confidence={int(k): float(v) for k, v in doc["confidence"].items()},
            weighted_confidence=float(doc["weighted_confidence"]),
            rtt_mean=float(doc["rtt_mean"]),
            rtt_std=float(doc["rtt_std"]),
            rtt_median=float(doc["rtt_median"]),
            rtt_p90=float(doc["rtt_p90"]),
            switch_count=int(doc["switch_count"]),
            total_penalty=float(doc["total_penalty"]),
        )


def replay(
    policy: SwitchPolicy,
    slots: Sequence[ReplaySlot],
    services: Sequence[ServiceClass],
    start_network: int = 0,
    name: str | None = None,
) -> ReplayOutcome:
    """Walk the slots applying the policy; fully deterministic.

    Finite policies are applied receding-horizon (their first-slot table
    at every step). States missing from the policy's table keep the
    current network: with no model evidence there is nothing to compare.
    The attached network persists across session boundaries.
    """
    if not slots:
        raise ValueError("no slots to replay")
    current = start_network
    switches = 0
    realized = np.empty(len(slots))
    for i, slot in enumerate(slots):
        idx = policy.index.get(slot.state)
        if idx is not None and policy.stationary_action(idx, current):
            current = 1 - current
            switches += 1
        realized[i] = slot.rtt[current]
    conf = {
        s.id: float(np.mean(realized <= s.max_latency_ms)) for s in services
    }
    weighted = sum(s.weight * conf[s.id] for s in services)
    return ReplayOutcome(
        policy=name or policy.kind,
        cost=policy.cost,
        start_network=start_network,
        slots=len(slots),
        confidence=conf,
        weighted_confidence=float(weighted),
        rtt_mean=float(realized.mean()),
        rtt_std=float(realized.std()),
        rtt_median=float(np.median(realized)),
        rtt_p90=float(np.percentile(realized, 90)),
        switch_count=switches,
        total_penalty=float(switches * policy.cost),
    )


@dataclass
class SweepResult:
    """Outcomes for every (policy, cost) pair plus solver-side value checks."""

    costs: list[float]
    services: list[ServiceClass]
    outcomes: dict[str, list[ReplayOutcome]]
    myopic_value_gap: list[float] = field(default_factory=list)
    myopic_value_gap_mean: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def curve(self, policy: str, service_id: int) -> list[float]:
        return [o.confidence[service_id] for o in self.outcomes[policy]]

    def weighted_curve(self, policy: str) -> list[float]:
        return [o.weighted_confidence for o in self.outcomes[policy]]

    def to_dict(self) -> dict:
        return {
            "format": RESULT_FORMAT,
            "version": RESULT_VERSION,
            "costs": self.costs,
            "services": [
                {"id": s.id, "max_latency_ms": s.max_latency_ms, "weight": s.weight}
                for s in self.services
            ],
            "outcomes": {
                policy: [o.to_dict() for o in outs]
                for policy, outs in self.outcomes.items()
            },
            "myopic_value_gap": self.myopic_value_gap,
            "myopic_value_gap_mean": self.myopic_value_gap_mean,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepResult":
        if doc.get("format") != RESULT_FORMAT:
            raise ValueError(f"not a sweep result document: {doc.get('format')!r}")
        return cls(
            costs=[float(c) for c in doc["costs"]],
            services=[
                ServiceClass(int(s["id"]), float(s["max_latency_ms"]), float(s["weight"]))
                for s in doc["services"]
            ],
            outcomes={
                policy: [ReplayOutcome.from_dict(o) for o in outs]
                for policy, outs in doc["outcomes"].items()
            },
            myopic_value_gap=[float(g) for g in doc.get("myopic_value_gap", [])],
            myopic_value_gap_mean=[
                float(g) for g in doc.get("myopic_value_gap_mean", [])
            ],
            meta=doc.get("meta", {}),
        )

    def save(self, stream: IO) -> None:
        json.dump(self.to_dict(), stream)

    @classmethod
    def load(cls, stream: IO) -> "SweepResult":
        return cls.from_dict(json.load(stream))


def cost_sweep(
    problem: SwitchProblem,
    costs: Sequence[float],
    slots: Sequence[ReplaySlot],
    policies: Sequence[str] = ALL_POLICIES,
    finite_horizon: int = DEFAULT_FINITE_HORIZON,
    start_network: int = 0,
) -> SweepResult:
    """Re-solve and replay each requested policy at every switching cost.

    Single-network baselines are cost-independent; their replay runs once
    and the outcome is repeated across the sweep (flat curves). The myopic
    baseline is also evaluated in model terms: ``myopic_value_gap[i]`` is
    the worst-state shortfall of the myopic policy's exact discounted
    value against the optimal value at costs[i] (nonnegative when the
    adaptive policy dominates).
    """
    costs = [float(c) for c in costs]
    if not costs:
        raise ValueError("empty cost list")
    if any(b < a for a, b in zip(costs, costs[1:])):
        raise ValueError("costs must be ascending")
    services = problem.services
    outcomes: dict[str, list[ReplayOutcome]] = {p: [] for p in policies}
    gaps: list[float] = []
    gaps_mean: list[float] = []

    singles: dict[str, ReplayOutcome] = {}
    for name, net in ((SINGLE_0, 0), (SINGLE_1, 1)):
        if name in policies:
            static = never_switch_policy(problem.mobility.states)
            singles[name] = replay(static, slots, services, start_network=net, name=name)

    for cost in costs:
        sub = problem.with_cost(ScalarPenalty(cost))
        pol_inf = None
        if ADAPTIVE_INFINITE in policies or MYOPIC in policies:
            pol_inf = solve_infinite(replace(sub, horizon=INFINITE))
        if ADAPTIVE_INFINITE in policies:
            outcomes[ADAPTIVE_INFINITE].append(
                replay(pol_inf, slots, services, start_network, name=ADAPTIVE_INFINITE)
            )
        if ADAPTIVE_FINITE in policies:
            pol_fin = solve_finite(replace(sub, horizon=Finite(finite_horizon)))
            outcomes[ADAPTIVE_FINITE].append(
                replay(pol_fin, slots, services, start_network, name=ADAPTIVE_FINITE)
            )
        if MYOPIC in policies:
            pol_myo = myopic_policy(sub)
            outcomes[MYOPIC].append(
                replay(pol_myo, slots, services, start_network, name=MYOPIC)
            )
            comp = compile_problem(sub)
            v_myopic = oracles.infinite_policy_value(
                comp.transitions, comp.confidence, comp.cost, comp.gamma, pol_myo.action
            )
            gaps.append(float(np.min(pol_inf.value - v_myopic)))
            gaps_mean.append(float(np.mean(pol_inf.value - v_myopic)))
        for name in (SINGLE_0, SINGLE_1):
            if name in policies:
                outcomes[name].append(
                    ReplayOutcome.from_dict({**singles[name].to_dict(), "cost": cost})
                )

    return SweepResult(
        costs=costs,
        services=list(services),
        outcomes=outcomes,
        myopic_value_gap=gaps,
        myopic_value_gap_mean=gaps_mean,
        meta={
            "finite_horizon": finite_horizon,
            "start_network": start_network,
            "discount": problem.discount,
            "server": problem.server_choice.value,
        },
    )


def report(result: SweepResult, out_dir: str) -> dict[str, str]:
    """Write results.json (full), curves.csv (plot-ready), summary.txt.

    The CSV has one row per (cost, policy, service): exactly
    ``len(costs) * len(policies) * len(services)`` data rows.
    """
    if not result.costs or not result.outcomes:
        raise ValueError("empty result; nothing to report")
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "json": os.path.join(out_dir, "results.json"),
        "csv": os.path.join(out_dir, "curves.csv"),
        "summary": os.path.join(out_dir, "summary.txt"),
    }
    with open(paths["json"], "w", encoding="utf-8") as fh:
        result.save(fh)

    with open(paths["csv"], "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["cost", "policy", "service_id", "threshold_ms", "confidence",
             "weighted_confidence", "switch_count"]
        )
        for policy, outs in sorted(result.outcomes.items()):
            for cost, o in zip(result.costs, outs):
                for s in result.services:
                    writer.writerow(
                        [cost, policy, s.id, s.max_latency_ms,
                         f"{o.confidence[s.id]:.6f}",
                         f"{o.weighted_confidence:.6f}", o.switch_count]
                    )

    with open(paths["summary"], "w", encoding="utf-8") as fh:
        fh.write("Realized RTT statistics per policy (at the lowest swept cost)\n")
        fh.write(f"costs swept: {result.costs[0]} .. {result.costs[-1]} "
                 f"({len(result.costs)} points)\n\n")
        header = f"{'policy':<18}{'mean':>8}{'std':>8}{'median':>8}{'p90':>8}{'switches':>10}{'w.conf':>9}\n"
        fh.write(header)
        fh.write("-" * len(header) + "\n")
        for policy, outs in sorted(result.outcomes.items()):
            o = outs[0]
            fh.write(
                f"{policy:<18}{o.rtt_mean:>8.1f}{o.rtt_std:>8.1f}"
                f"{o.rtt_median:>8.1f}{o.rtt_p90:>8.1f}{o.switch_count:>10d}"
                f"{o.weighted_confidence:>9.3f}\n"
            )
    return paths


@dataclass
class Experiment:
    """Everything a preset end-to-end run produces, for tests and the CLI."""

    problem: SwitchProblem
    model: LatencyModel
    mobility: MobilityModel
    train: list[RttSample]
    test: list[RttSample]
    slots: list[ReplaySlot]


def prepare_experiment(
    samples: Sequence[RttSample],
    grid: GridSpec,
    services: Sequence[ServiceClass] | None = None,
    server: Server = Server.FOG,
    discount: float = 0.9,
    min_samples: int = 30,
    slot_ms: float = 500.0,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    rng: np.random.Generator | None = None,
) -> Experiment:
    """Split sessions, fit the latency and mobility models on the train
    half, and align the test half into replay slots.

    ``rng`` enables counterfactual draws (from the fitted model) for
    eval slots that lack a measurement for some network.
    """
    services = tuple(services) if services else default_services()
    train, test = train_test_split(samples, train_fraction)
    model = fit_model(train, grid, min_samples=min_samples)
    mob = estimate_transitions(train, grid, slot_ms=slot_ms)
    slots = build_slots(test, grid, server, model=model, rng=rng)
    problem = SwitchProblem(
        mobility=mob,
        latency=model,
        services=services,
        switch_cost=ScalarPenalty(0.0),
        discount=discount,
        server_choice=server,
    )
    return Experiment(
        problem=problem, model=model, mobility=mob, train=train, test=test, slots=slots
    )

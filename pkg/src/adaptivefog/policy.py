"""Network-switching MDP solvers and the server-selection rule.

The decision problem: a vehicle moves over a finite mobility state space
(cell, speed_bin) with action-independent transition matrix P, while being
attached to one of two networks. Each slot it may switch to the other
network for a constant confidence penalty c; staying is free. The per-slot
payoff is the weighted confidence of the network used this slot.

Both solvers are threshold policies on the per-state weighted K-R distance
K between the current network's CDF and the other network's:

* finite horizon (T slots):    switch iff K <= Delta_t - c, where Delta_t
  is the expected next-state continuation gap, computed by the backward
  recursion Y_t = clip(Delta_t - K, -c, +c), Delta_t = P Y_{t+1}, seeded
  with Y after the last slot = 0;
* infinite horizon (discount gamma): switch iff K <= gamma*Delta - c,
  with Delta extracted from converged value iteration (or equivalently
  from the fixed point of Delta = P clip(gamma*Delta - K, -c, +c)).

A myopic baseline (switch iff K <= -c) and the static fog/cloud server
selection rule complete the module. Low-level ``*_tables`` functions
operate on raw arrays so solvers can be exercised on synthetic instances
without fitting full models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np

from .errors import SolverError
from .mobility import MobilityModel, MobilityState
from .stats import (
    CdfShiftPenalty,
    EmpiricalCdf,
    LatencyModel,
    ScalarPenalty,
    SwitchCost,
    kr_distance,
    switching_penalty,
    weighted_confidence,
)
from .trace import DiscreteState, Server, ServiceClass

VALUE_ITERATION_TOL = 1e-10
VALUE_ITERATION_MAX_ITER = 100_000

POLICY_FORMAT = "adaptivefog-switch-policy"
POLICY_VERSION = 1


@dataclass(frozen=True)
class Finite:
    """Optimize total confidence over a fixed route of ``slots`` time slots."""

    slots: int

    def __post_init__(self):
        if self.slots < 1:
            raise ValueError(f"horizon must be >= 1 slot, got {self.slots}")


@dataclass(frozen=True)
class Infinite:
    """Optimize discounted long-run confidence."""


INFINITE = Infinite()

Horizon = Finite | Infinite


@dataclass
class SwitchProblem:
    """One fully specified switching problem: models, services, cost, horizon."""

    mobility: MobilityModel
    latency: LatencyModel
    services: tuple[ServiceClass, ...]
    switch_cost: SwitchCost = ScalarPenalty(0.0)
    discount: float = 0.9
    horizon: Horizon = INFINITE
    server_choice: Server = Server.FOG

    def __post_init__(self):
        self.services = tuple(self.services)
        if not self.services:
            raise ValueError("service set is empty")
        if not 0 < self.discount <= 1:
            raise ValueError(f"discount must be in (0, 1], got {self.discount}")

    def with_cost(self, cost: SwitchCost) -> "SwitchProblem":
        return replace(self, switch_cost=cost)


@dataclass
class CompiledProblem:
    """Array form of a SwitchProblem over the mobility model's state order.

    ``confidence[m, l]`` is the weighted confidence of network l at mobility
    state m (fixed server), and ``kr[m, l] = confidence[m, l] -
    confidence[m, 1-l]`` is the K-R distance seen from network l.
    """

    states: list[MobilityState]
    transitions: np.ndarray  # [M, M]
    confidence: np.ndarray  # [M, 2]
    kr: np.ndarray  # [M, 2]
    cost: float
    gamma: float
    fallback_states: int = 0


def compile_problem(problem: SwitchProblem) -> CompiledProblem:
    """Resolve per-state CDFs and the constant switch penalty into arrays.

    Raises CoverageError when some (state, network) has no CDF even via
    the fallback ladder, and ValueError unless the latency model covers
    exactly networks {0, 1} (the threshold policies are two-network).
    """
    networks = problem.latency.networks
    if not {0, 1}.issubset(networks):
        raise ValueError(f"need both networks 0 and 1 in the latency model, have {networks}")
    if any(n not in (0, 1) for n in networks):
        raise ValueError(
            f"threshold solvers support exactly two networks, model has {networks}"
        )
    mob = problem.mobility
    conf = np.zeros((mob.n_states, 2))
    fallback_states = 0
    for i, (cell, speed_bin) in enumerate(mob.states):
        for l in (0, 1):
            lk = problem.latency.lookup(cell, speed_bin, l, problem.server_choice)
            if lk.is_fallback:
                fallback_states += 1
            conf[i, l] = weighted_confidence(lk.cdf, problem.services)
    kr = conf - conf[:, ::-1]
    cost = resolve_switch_cost(problem)
    return CompiledProblem(
        states=list(mob.states),
        transitions=mob.matrix.copy(),
        confidence=conf,
        kr=kr,
        cost=cost,
        gamma=problem.discount,
        fallback_states=fallback_states,
    )


def resolve_switch_cost(problem: SwitchProblem) -> float:
    """Constant per-switch confidence penalty used by the MDP.

    Scalar mode is the configured value. CDF-shift mode is averaged over
    the two networks' global pools: the MDP assumes one fixed cost, so the
    state-dependent shift penalty is collapsed to its network-level value.
    """
    cost = problem.switch_cost
    if isinstance(cost, ScalarPenalty):
        return cost.value
    assert isinstance(cost, CdfShiftPenalty)
    pens = [
        switching_penalty(
            problem.latency.network_pool(net, problem.server_choice),
            problem.services,
            cost.extra_latency_ms,
            cost,
        )
        for net in (0, 1)
    ]
    return float(np.mean(pens))


def kr_table(problem: SwitchProblem) -> dict[DiscreteState, float]:
    """Per-state weighted K-R distance, keyed by (cell, speed_bin, network).

    The entry for network l is K(F_l, F_other): positive where the current
    network already offers the higher weighted confidence.
    """
    comp = compile_problem(problem)
    table: dict[DiscreteState, float] = {}
    for i, (cell, speed_bin) in enumerate(comp.states):
        for l in (0, 1):
            table[DiscreteState(cell=cell, speed_bin=speed_bin, network=l)] = float(
                comp.kr[i, l]
            )
    return table


@dataclass
class SwitchPolicy:
    """Solved switch decisions plus the Delta/Y internals that produced them.

    Finite policies carry per-slot tables indexed ``[t, state, network]``
    for slots t = 0..T-1; infinite and myopic policies carry stationary
    ``[state, network]`` tables. ``value`` is the converged state value of
    the infinite-horizon solver (None otherwise).
    """

    kind: str  # "finite" | "infinite" | "myopic" | "static"
    states: list[MobilityState]
    action: np.ndarray
    delta: np.ndarray
    y: np.ndarray
    cost: float
    gamma: float | None = None
    horizon: int | None = None
    value: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.action = np.asarray(self.action)
        self.index = {s: i for i, s in enumerate(self.states)}

    @property
    def is_finite(self) -> bool:
        return self.action.ndim == 3

    def stationary_action(self, state_idx: int, network: int) -> int:
        """Action applied in replay: slot-0 table for finite (receding horizon)."""
        if self.is_finite:
            return int(self.action[0, state_idx, network])
        return int(self.action[state_idx, network])

    def action_at(self, t: int, state_idx: int, network: int) -> int:
        if self.is_finite:
            return int(self.action[t, state_idx, network])
        return int(self.action[state_idx, network])

    def switch_states(self) -> int:
        return int(self.action.sum())

    def to_dict(self) -> dict:
        doc = {
            "format": POLICY_FORMAT,
            "version": POLICY_VERSION,
            "kind": self.kind,
            "cost": self.cost,
            "gamma": self.gamma,
            "horizon": self.horizon,
            "states": [[list(cell), bin_] for cell, bin_ in self.states],
            "action": np.asarray(self.action, dtype=int).tolist(),
            "delta": np.asarray(self.delta, dtype=float).tolist(),
            "y": np.asarray(self.y, dtype=float).tolist(),
            "value": None if self.value is None else np.asarray(self.value).tolist(),
            "meta": self.meta,
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SwitchPolicy":
        if doc.get("format") != POLICY_FORMAT:
            raise ValueError(f"not a switch policy document: {doc.get('format')!r}")
        return cls(
            kind=doc["kind"],
            states=[(tuple(cell), int(bin_)) for cell, bin_ in doc["states"]],
            action=np.array(doc["action"], dtype=int),
            delta=np.array(doc["delta"], dtype=float),
            y=np.array(doc["y"], dtype=float),
            cost=float(doc["cost"]),
            gamma=doc.get("gamma"),
            horizon=doc.get("horizon"),
            value=None if doc.get("value") is None else np.array(doc["value"]),
            meta=doc.get("meta", {}),
        )

    def save(self, stream: IO) -> None:
        json.dump(self.to_dict(), stream)

    @classmethod
    def load(cls, stream: IO) -> "SwitchPolicy":
        return cls.from_dict(json.load(stream))


# -- low-level solvers on raw arrays ----------------------------------------


def solve_finite_tables(
    transitions: np.ndarray, kr: np.ndarray, cost: float, horizon: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward Delta/Y recursion; returns (action, delta, y), each [T, M, 2].

    The continuation after the last slot is zero, so the last slot's
    threshold degenerates to K <= -c. Ties switch (<=).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    P = np.asarray(transitions, dtype=float)
    kr = np.asarray(kr, dtype=float)
    m = P.shape[0]
    action = np.zeros((horizon, m, 2), dtype=bool)
    delta = np.zeros((horizon, m, 2))
    y = np.zeros((horizon, m, 2))
    y_next = np.zeros((m, 2))
    for t in range(horizon - 1, -1, -1):
        d = P @ y_next
        delta[t] = d
        action[t] = kr <= d - cost
        y[t] = np.clip(d - kr, -cost, cost)
        y_next = y[t]
    return action, delta, y


def value_iteration_tables(
    transitions: np.ndarray,
    confidence: np.ndarray,
    cost: float,
    gamma: float,
    tol: float = VALUE_ITERATION_TOL,
    max_iter: int = VALUE_ITERATION_MAX_ITER,
) -> tuple[np.ndarray, int, float]:
    """Value iteration on the full (mobility x network) state space."""
    P = np.asarray(transitions, dtype=float)
    H = np.asarray(confidence, dtype=float)
    v = np.zeros_like(H)
    residual = np.inf
    for it in range(1, max_iter + 1):
        cont = P @ v
        q_stay = H + gamma * cont
        q_switch = H[:, ::-1] - cost + gamma * cont[:, ::-1]
        v_new = np.maximum(q_stay, q_switch)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual < tol:
            return v, it, residual
    raise SolverError(
        f"value iteration did not converge in {max_iter} iterations "
        f"(residual {residual:.3e}, tol {tol:.1e})",
        residual=residual,
    )


def solve_infinite_tables(
    transitions: np.ndarray,
    confidence: np.ndarray,
    kr: np.ndarray,
    cost: float,
    gamma: float,
    tol: float = VALUE_ITERATION_TOL,
    max_iter: int = VALUE_ITERATION_MAX_ITER,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, dict]:
    """Threshold policy from converged value iteration.

    Delta[m, l] is the expected continuation-value gap of being attached
    to the other network at the next state; the policy switches iff
    K <= gamma*Delta - c.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"infinite horizon needs discount in (0, 1), got {gamma}")
    P = np.asarray(transitions, dtype=float)
    v, iterations, residual = value_iteration_tables(
        P, confidence, cost, gamma, tol, max_iter
    )
    delta = P @ (v[:, ::-1] - v)
    action = kr <= gamma * delta - cost
    y = np.clip(gamma * delta - kr, -cost, cost)
    meta = {"solver": "value-iteration", "iterations": iterations, "residual": residual}
    return action, delta, y, v, meta


def delta_fixed_point(
    transitions: np.ndarray,
    kr: np.ndarray,
    cost: float,
    gamma: float,
    tol: float = 1e-13,
    max_iter: int = VALUE_ITERATION_MAX_ITER,
) -> np.ndarray:
    """Solve Delta = P clip(gamma*Delta - K, -c, +c) by fixed-point iteration.

    Independent of value iteration; must agree with the Delta extracted by
    :func:`solve_infinite_tables` (the map is a gamma-contraction).
    """
    P = np.asarray(transitions, dtype=float)
    kr = np.asarray(kr, dtype=float)
    d = np.zeros_like(kr)
    for _ in range(max_iter):
        d_new = P @ np.clip(gamma * d - kr, -cost, cost)
        if np.max(np.abs(d_new - d)) < tol:
            return d_new
        d = d_new
    raise SolverError("Delta fixed-point iteration did not converge")


# -- public solvers on SwitchProblem -----------------------------------------


def solve_finite(problem: SwitchProblem) -> SwitchPolicy:
    """Optimal per-slot threshold policy for a Finite(T) problem."""
    if not isinstance(problem.horizon, Finite):
        raise ValueError("solve_finite needs a problem with a Finite horizon")
    comp = compile_problem(problem)
    t_slots = problem.horizon.slots
    action, delta, y = solve_finite_tables(comp.transitions, comp.kr, comp.cost, t_slots)
    return SwitchPolicy(
        kind="finite",
        states=comp.states,
        action=action,
        delta=delta,
        y=y,
        cost=comp.cost,
        gamma=None,
        horizon=t_slots,
        meta={
            "solver": "threshold-backward-recursion",
            "fallback_states": comp.fallback_states,
        },
    )


def solve_infinite(problem: SwitchProblem) -> SwitchPolicy:
    """Optimal stationary threshold policy for an Infinite problem."""
    if not isinstance(problem.horizon, Infinite):
        raise ValueError("solve_infinite needs a problem with an Infinite horizon")
    if not problem.discount < 1:
        raise ValueError("infinite horizon needs discount < 1")
    comp = compile_problem(problem)
    action, delta, y, value, meta = solve_infinite_tables(
        comp.transitions, comp.confidence, comp.kr, comp.cost, comp.gamma
    )
    meta["fallback_states"] = comp.fallback_states
    return SwitchPolicy(
        kind="infinite",
        states=comp.states,
        action=action,
        delta=delta,
        y=y,
        cost=comp.cost,
        gamma=comp.gamma,
        value=value,
        meta=meta,
    )


def myopic_policy(problem: SwitchProblem) -> SwitchPolicy:
    """Greedy baseline: switch iff the one-slot gain beats the cost (K <= -c)."""
    comp = compile_problem(problem)
    action = comp.kr <= -comp.cost
    zeros = np.zeros_like(comp.kr)
    return SwitchPolicy(
        kind="myopic",
        states=comp.states,
        action=action,
        delta=zeros,
        y=zeros,
        cost=comp.cost,
        gamma=comp.gamma,
        meta={"solver": "myopic"},
    )


def never_switch_policy(states: Sequence[MobilityState], cost: float = 0.0) -> SwitchPolicy:
    """Static single-network policy used for baseline replay."""
    n = len(states)
    zeros = np.zeros((n, 2))
    return SwitchPolicy(
        kind="static",
        states=list(states),
        action=np.zeros((n, 2), dtype=bool),
        delta=zeros,
        y=zeros,
        cost=cost,
        meta={"solver": "never-switch"},
    )


def always_switch_check(kr: float, cost: float) -> bool:
    """Switch regardless of the future whenever K <= -2c.

    The one-slot gain then covers switching there and back, so the decision
    cannot be wrong under either horizon.
    """
    if cost < 0:
        raise ValueError(f"cost must be >= 0, got {cost}")
    return kr <= -2.0 * cost


def single_slot_loss_bound(kr: float, cost: float) -> float:
    """Worst-case accumulated loss from one wrong single-slot selection: c + K."""
    return cost + kr


def select_server(
    cloud: EmpiricalCdf,
    fog: EmpiricalCdf,
    service: ServiceClass,
    theta_f: float,
) -> Server:
    """Static fog/cloud choice for one service class.

    Picks the cloud server unless the fog node's weighted confidence
    advantage at the service threshold exceeds ``theta_f`` (the advantage
    level considered negligible).
    """
    if theta_f < 0:
        raise ValueError(f"theta_f must be >= 0, got {theta_f}")
    fog_advantage = kr_distance(fog, cloud, [service])
    return Server.CLOUD if fog_advantage <= theta_f else Server.FOG

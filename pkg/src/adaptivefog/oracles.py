"""Independent oracles for validating the threshold solvers.

None of these touch the Delta/Y/K-R structure the solvers use: they work on
the full (mobility x network) product space with plain expected-utility
arithmetic, so agreement with the threshold policies is a real check.

Conventions shared with :mod:`adaptivefog.policy`:
  state (m, l), action a in {0, 1}; the network used this slot is
  l' = l XOR a; the slot utility is confidence[m, l'] - a * cost; the next
  state is (m', l') with m' ~ transitions[m]. Ties between stay and switch
  resolve to switch, matching the <= threshold convention.
"""

from __future__ import annotations

import numpy as np

from .errors import SolverError

ENUMERATION_MAX_BITS = 24


def finite_policy_value(
    transitions: np.ndarray,
    confidence: np.ndarray,
    cost: float,
    action: np.ndarray,
) -> np.ndarray:
    """Exact expected total utility of per-slot tables action[T, M, 2].

    Returns the value per start state, shape [M, 2].
    """
    P = np.asarray(transitions, dtype=float)
    H = np.asarray(confidence, dtype=float)
    a = np.asarray(action)
    v = np.zeros_like(H)
    for t in range(a.shape[0] - 1, -1, -1):
        at = a[t].astype(bool)
        cont = P @ v
        q_stay = H + cont
        q_switch = H[:, ::-1] - cost + cont[:, ::-1]
        v = np.where(at, q_switch, q_stay)
    return v


def backward_induction(
    transitions: np.ndarray, confidence: np.ndarray, cost: float, horizon: int
) -> tuple[np.ndarray, np.ndarray]:
    """Finite-horizon dynamic programming on the product state space.

    Returns (action[T, M, 2], value-at-slot-1[M, 2]).
    """
    P = np.asarray(transitions, dtype=float)
    H = np.asarray(confidence, dtype=float)
    m = H.shape[0]
    action = np.zeros((horizon, m, 2), dtype=bool)
    v = np.zeros_like(H)
    for t in range(horizon - 1, -1, -1):
        cont = P @ v
        q_stay = H + cont
        q_switch = H[:, ::-1] - cost + cont[:, ::-1]
        action[t] = q_switch >= q_stay
        v = np.maximum(q_stay, q_switch)
    return action, v


def enumerate_finite_policies(
    transitions: np.ndarray, confidence: np.ndarray, cost: float, horizon: int
) -> np.ndarray:
    """Expected total utility of *every* per-slot per-state action table.

    Returns an array [n_tables, M, 2] of start-state values, one row per
    table, with table index read as a bit field over (t, m, l). Exhaustive:
    2^(T*M*2) tables, so only tiny instances are feasible.
    """
    P = np.asarray(transitions, dtype=float)
    H = np.asarray(confidence, dtype=float)
    m = H.shape[0]
    bits = horizon * m * 2
    if bits > ENUMERATION_MAX_BITS:
        raise ValueError(f"{bits} action bits is too many to enumerate")
    n_tables = 1 << bits
    idx = np.arange(n_tables, dtype=np.uint64)
    shifts = np.arange(bits, dtype=np.uint64)
    tables = ((idx[:, None] >> shifts[None, :]) & 1).astype(bool)
    tables = tables.reshape(n_tables, horizon, m, 2)

    v = np.zeros((n_tables, m, 2))
    h_stay = H[None, :, :]
    h_switch = (H[:, ::-1] - cost)[None, :, :]
    for t in range(horizon - 1, -1, -1):
        at = tables[:, t]
        cont = np.einsum("mn,knl->kml", P, v)
        v = np.where(at, h_switch + cont[:, :, ::-1], h_stay + cont)
    return v


def value_iteration(
    transitions: np.ndarray,
    confidence: np.ndarray,
    cost: float,
    gamma: float,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Discounted value iteration; returns (V[M, 2], greedy action[M, 2])."""
    P = np.asarray(transitions, dtype=float)
    H = np.asarray(confidence, dtype=float)
    v = np.zeros_like(H)
    for _ in range(max_iter):
        cont = P @ v
        q_stay = H + gamma * cont
        q_switch = H[:, ::-1] - cost + gamma * cont[:, ::-1]
        v_new = np.maximum(q_stay, q_switch)
        if np.max(np.abs(v_new - v)) < tol:
            return v_new, q_switch >= q_stay
        v = v_new
    raise SolverError("oracle value iteration did not converge")


def value_iteration_multi(
    transitions: np.ndarray,
    confidence: np.ndarray,
    cost: float,
    gamma: float,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Value iteration with any number of networks, for experimentation.

    ``confidence`` is [M, N]; the action is which network to attach to
    next slot (cost charged when it differs from the current one). No
    threshold-form claim is made beyond N = 2; this oracle exists so
    larger scenarios can still be solved exactly. Returns (V[M, N],
    chosen-network[M, N]).
    """
    P = np.asarray(transitions, dtype=float)
    H = np.asarray(confidence, dtype=float)
    m, n_net = H.shape
    v = np.zeros_like(H)
    for _ in range(max_iter):
        cont = P @ v  # [M, N] continuation per target network
        q_target = H + gamma * cont  # value of ending the slot on network k
        switch_pen = cost * (1.0 - np.eye(n_net))
        # q[m, l, k] = q_target[m, k] - cost * (k != l)
        q = q_target[:, None, :] - switch_pen[None, :, :]
        v_new = q.max(axis=2)
        if np.max(np.abs(v_new - v)) < tol:
            # nudge the stay option down so exact ties resolve to a switch,
            # mirroring the two-network <= convention
            nudged = q - 1e-15 * np.eye(n_net)[None, :, :]
            return v_new, nudged.argmax(axis=2)
        v = v_new
    raise SolverError("multi-network value iteration did not converge")


def infinite_policy_value(
    transitions: np.ndarray,
    confidence: np.ndarray,
    cost: float,
    gamma: float,
    action: np.ndarray,
) -> np.ndarray:
    """Exact discounted value of a stationary policy, by linear solve.

    Builds the policy's full transition matrix over the 2M product states
    and solves (I - gamma*T) v = u. Returns v reshaped to [M, 2].
    """
    P = np.asarray(transitions, dtype=float)
    H = np.asarray(confidence, dtype=float)
    a = np.asarray(action).astype(bool)
    m = H.shape[0]
    n = 2 * m
    u = np.where(a, H[:, ::-1] - cost, H).reshape(n)
    t_full = np.zeros((n, n))
    for l in (0, 1):
        for mi in range(m):
            l_next = 1 - l if a[mi, l] else l
            t_full[mi * 2 + l, l_next::2] = P[mi]
    v = np.linalg.solve(np.eye(n) - gamma * t_full, u)
    return v.reshape(m, 2)

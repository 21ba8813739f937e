"""Driving-behavior Markov chain estimated from timestamped traces.

Location and speed are treated as a first-order Markov process on the
discretized (cell, speed_bin) states. Traces are resampled onto a fixed
slot grid per driving session, consecutive-slot state pairs are counted,
and the counts are row-normalized (optionally Laplace-smoothed). Network
and server tags play no role here: the vehicle moves the same way whatever
it is attached to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import EstimationError
from .trace import GridSpec, RttSample

MobilityState = tuple[tuple[int, int], int]  # (cell, speed_bin)

DEFAULT_SLOT_MS = 500.0
DEFAULT_SESSION_GAP_S = 5.0

MOBILITY_FORMAT = "adaptivefog-mobility-model"
MOBILITY_VERSION = 1


@dataclass
class MobilityModel:
    """Finite mobility state set with a row-stochastic transition matrix."""

    states: list[MobilityState]
    matrix: np.ndarray
    slot_ms: float

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        n = len(self.states)
        if self.matrix.shape != (n, n):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match {n} states"
            )
        if np.any(self.matrix < 0):
            raise ValueError("transition matrix has negative entries")
        rows = self.matrix.sum(axis=1)
        if not np.allclose(rows, 1.0, atol=1e-12, rtol=0):
            raise ValueError(f"rows must sum to 1, got {rows}")
        self.index = {s: i for i, s in enumerate(self.states)}

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, state: MobilityState) -> int | None:
        return self.index.get(state)

    def to_dict(self) -> dict:
        return {
            "format": MOBILITY_FORMAT,
            "version": MOBILITY_VERSION,
            "slot_ms": self.slot_ms,
            "states": [[list(cell), bin_] for cell, bin_ in self.states],
            "matrix": [[float(p) for p in row] for row in self.matrix],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MobilityModel":
        if doc.get("format") != MOBILITY_FORMAT:
            raise EstimationError(
                f"not a mobility model document: {doc.get('format')!r}"
            )
        states = [(tuple(cell), int(bin_)) for cell, bin_ in doc["states"]]
        return cls(states=states, matrix=np.array(doc["matrix"]), slot_ms=float(doc["slot_ms"]))

    def save(self, stream: IO) -> None:
        json.dump(self.to_dict(), stream)

    @classmethod
    def load(cls, stream: IO) -> "MobilityModel":
        return cls.from_dict(json.load(stream))


def filter_time_of_day(
    samples: Sequence[RttSample], start_hour: int, end_hour: int
) -> list[RttSample]:
    """Keep samples whose UTC hour lies in [start_hour, end_hour).

    Transition probabilities differ between peak and off-peak traffic, but
    the chain itself stays time-homogeneous: to model a time band, filter
    the trace first and estimate a separate chain from the remainder.
    Wrapping ranges (e.g. 22 to 6) are supported.
    """
    def hour_of(ts_ms: int) -> int:
        return int((ts_ms // 3_600_000) % 24)

    if start_hour <= end_hour:
        keep = lambda h: start_hour <= h < end_hour
    else:
        keep = lambda h: h >= start_hour or h < end_hour
    return [s for s in samples if keep(hour_of(s.timestamp_ms))]


def split_sessions(
    samples: Sequence[RttSample], session_gap_s: float = DEFAULT_SESSION_GAP_S
) -> list[list[RttSample]]:
    """Split a time-ordered trace into driving sessions.

    A new session starts whenever the timestamp jumps by more than
    ``session_gap_s`` (or goes backwards), so parked intervals and trace
    concatenation do not fabricate transitions.
    """
    sessions: list[list[RttSample]] = []
    gap_ms = session_gap_s * 1000.0
    prev_ts: int | None = None
    for s in samples:
        if prev_ts is None or s.timestamp_ms - prev_ts > gap_ms or s.timestamp_ms < prev_ts:
            sessions.append([])
        sessions[-1].append(s)
        prev_ts = s.timestamp_ms
    return sessions


def _resample_session(
    session: Sequence[RttSample], grid: GridSpec, slot_ms: float
) -> list[MobilityState | None]:
    """Map a session onto the slot grid; None marks slots without a sample.

    Each slot takes the nearest sample within slot_ms/2 of its center. The
    slot grid is anchored at the session's first timestamp.
    """
    t0 = session[0].timestamp_ms
    t_end = session[-1].timestamp_ms
    n_slots = int(round((t_end - t0) / slot_ms)) + 1
    slots: list[MobilityState | None] = [None] * n_slots
    best_err = [slot_ms] * n_slots
    for s in session:
        k = int(round((s.timestamp_ms - t0) / slot_ms))
        if not 0 <= k < n_slots:
            continue
        err = abs(s.timestamp_ms - (t0 + k * slot_ms))
        if err <= slot_ms / 2 and err < best_err[k]:
            best_err[k] = err
            slots[k] = (grid.cell_of(s.lat, s.lon), grid.speed_bin_of(s.speed_mps))
    return slots


def estimate_transitions(
    samples: Sequence[RttSample],
    grid: GridSpec,
    slot_ms: float = DEFAULT_SLOT_MS,
    smoothing_alpha: float = 0.0,
    session_gap_s: float = DEFAULT_SESSION_GAP_S,
) -> MobilityModel:
    """Estimate the mobility transition matrix from time-ordered samples.

    With ``smoothing_alpha`` 0 the entries are exact empirical pair
    frequencies; a positive alpha adds that pseudo-count toward every
    observed state. Rows that end up with zero mass become self-loops.
    """
    if slot_ms <= 0:
        raise ValueError(f"slot_ms must be > 0, got {slot_ms}")
    if smoothing_alpha < 0:
        raise ValueError(f"smoothing_alpha must be >= 0, got {smoothing_alpha}")
    if not samples:
        raise EstimationError("no samples")

    seen: dict[MobilityState, int] = {}
    pair_counts: dict[tuple[MobilityState, MobilityState], float] = {}
    n_pairs = 0
    for session in split_sessions(samples, session_gap_s):
        slots = _resample_session(session, grid, slot_ms)
        for state in slots:
            if state is not None and state not in seen:
                seen[state] = len(seen)
        for a, b in zip(slots, slots[1:]):
            if a is not None and b is not None:
                pair_counts[(a, b)] = pair_counts.get((a, b), 0.0) + 1.0
                n_pairs += 1
    if n_pairs == 0:
        raise EstimationError("no consecutive slot pairs; cannot estimate transitions")

    states = list(seen)
    n = len(states)
    counts = np.full((n, n), float(smoothing_alpha))
    for (a, b), c in pair_counts.items():
        counts[seen[a], seen[b]] += c
    rows = counts.sum(axis=1)
    matrix = np.where(rows[:, None] > 0, counts / np.where(rows == 0, 1, rows)[:, None], 0.0)
    for i in np.nonzero(rows == 0)[0]:
        matrix[i, i] = 1.0
    # Exact renormalization keeps rows at 1 within 1e-12 even after division.
    matrix = matrix / matrix.sum(axis=1, keepdims=True)
    return MobilityModel(states=states, matrix=matrix, slot_ms=slot_ms)

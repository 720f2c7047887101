"""Slice-by-slice qubit-to-core allocation as a sequential decision process.

A used qubit is *live* from the first slice until the slice of its last op; after
that it is finished and frees its seat. Within a slice only the qubits that are
acted on get decided, except in the first slice where every live qubit needs a
seat. Live but idle qubits keep the core they had in the previous slice.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .architecture import Architecture
from .circuit import SlicedCircuit, friend_groups, interaction_graph, lifetimes


class InfeasibleError(Exception):
    """The instance (or the current partial episode) admits no legal action."""


class IllegalActionError(Exception):
    pass


@dataclass(frozen=True, eq=False)
class AllocationInstance:
    sliced: SlicedCircuit
    arch: Architecture
    reset_indicators: np.ndarray  # T x Q, 1 once the qubit has finished
    live: np.ndarray              # T x Q bool
    active: np.ndarray            # T x Q bool
    decide: np.ndarray            # T x Q bool, cells a policy chooses (active, or first-slice idle)
    orders: tuple[tuple[int, ...], ...]
    groups: tuple[dict[int, tuple[int, ...]], ...]
    first_idx: np.ndarray         # -1 for unused qubits
    last_idx: np.ndarray
    adjacency: np.ndarray

    @property
    def num_slices(self) -> int:
        return self.sliced.depth

    @property
    def num_qubits(self) -> int:
        return self.sliced.num_qubits

    @property
    def num_cores(self) -> int:
        return self.arch.num_cores


def _order(sl, extra=()) -> tuple[int, ...]:
    counts: dict[int, int] = {}
    for op in sl:
        for q in op.qubits:
            counts[q] = counts.get(q, 0) + (1 if op.is_multi else 0)
    return tuple(sorted(counts, key=lambda q: (-counts[q], q))) + tuple(sorted(extra))


def build_instance(s: SlicedCircuit, a: Architecture, release_finished: bool = True) -> AllocationInstance:
    """Precompute liveness, seat release and per-slice decision order.

    With ``release_finished=False`` a qubit keeps its seat to the end of the circuit,
    which models hardware that cannot measure and reset mid-circuit.
    """
    T, Q = s.depth, s.num_qubits
    lt = lifetimes(s)
    first = np.array([-1 if f is None else f for f in lt.first_idx], dtype=np.int64)
    last = np.array([-1 if f is None else f for f in lt.last_idx], dtype=np.int64)
    ts = np.arange(T)[:, None]
    used = first >= 0
    if release_finished:
        live = used & (ts <= last)
        reset = (used & (ts > last)).astype(np.int8)
    else:
        live = np.broadcast_to(used, (T, Q)).copy()
        reset = np.zeros((T, Q), dtype=np.int8)
    active = np.zeros((T, Q), dtype=bool)
    for t, sl in enumerate(s.slices):
        for op in sl:
            active[t, list(op.qubits)] = True
    decide = active.copy()
    if T:
        decide[0] |= live[0]

    peak = int(live.sum(axis=1).max()) if T else 0
    if peak > a.total_capacity:
        raise InfeasibleError(f"{peak} live qubits exceed total capacity {a.total_capacity}")
    widest = max((len(op.qubits) for sl in s.slices for op in sl if op.is_multi), default=1)
    if widest > max(a.capacity):
        raise InfeasibleError(f"a {widest}-qubit gate cannot fit in any core (max capacity {max(a.capacity)})")

    return AllocationInstance(
        sliced=s, arch=a, reset_indicators=reset, live=live, active=active, decide=decide,
        orders=tuple(_order(sl, np.flatnonzero(live[t] & ~active[t]) if t == 0 else ())
                     for t, sl in enumerate(s.slices)),
        groups=tuple(friend_groups(sl) for sl in s.slices),
        first_idx=first, last_idx=last, adjacency=interaction_graph(s),
    )


def processing_order(inst: AllocationInstance, t: int) -> tuple[int, ...]:
    """Active qubits by descending multi-qubit op count, then id; in the first slice
    the idle live qubits follow in id order."""
    return inst.orders[t]


@dataclass
class AllocationState:
    t: int
    cursor: int
    placement: np.ndarray  # T x Q core ids, -1 where unplaced
    usage: np.ndarray      # T x C
    loc_prev: np.ndarray   # Q, core at t-1 or -1
    reward: float = 0.0

    def copy(self) -> AllocationState:
        return AllocationState(self.t, self.cursor, self.placement.copy(), self.usage.copy(),
                               self.loc_prev.copy(), self.reward)

    @property
    def done(self) -> bool:
        return self.t >= self.placement.shape[0]


@dataclass(frozen=True)
class StepOutcome:
    reward_delta: float
    done: bool


def _begin_slice(state: AllocationState, inst: AllocationInstance) -> None:
    T = inst.num_slices
    while state.t < T:
        t = state.t
        idle = np.flatnonzero(inst.live[t] & ~inst.decide[t])
        for q in idle:
            c = state.loc_prev[q]
            state.placement[t, q] = c
            if not inst.reset_indicators[t, q]:
                state.usage[t, c] += 1
        if inst.orders[t]:
            return
        _end_slice(state)


def _end_slice(state: AllocationState) -> None:
    state.loc_prev = state.placement[state.t].copy()
    state.t += 1
    state.cursor = 0


def reset(inst: AllocationInstance) -> AllocationState:
    T, Q, C = inst.num_slices, inst.num_qubits, inst.num_cores
    state = AllocationState(0, 0, np.full((T, Q), -1, dtype=np.int64), np.zeros((T, C), dtype=np.int64),
                            np.full(Q, -1, dtype=np.int64))
    _begin_slice(state, inst)
    return state


def current_qubit(state: AllocationState, inst: AllocationInstance) -> int | None:
    if state.done:
        return None
    return inst.orders[state.t][state.cursor]


def action_mask(state: AllocationState, inst: AllocationInstance, q: int | None = None) -> np.ndarray:
    """Boolean vector over cores; True where placing ``q`` keeps the episode legal.

    Capacity is checked for every still-unplaced member of ``q``'s gate, and seats
    owed to partners of other half-placed gates are held back, so no operand is ever
    stranded. A friend already placed in this slice pins the whole group to its core.
    """
    t = state.t
    if q is None:
        q = current_qubit(state, inst)
    cap = np.asarray(inst.arch.capacity)
    group = inst.groups[t].get(q, (q,))
    row = state.placement[t]
    pending = [m for m in group if row[m] < 0]
    need = sum(1 for m in pending if not inst.reset_indicators[t, m])
    free = cap - state.usage[t]
    # seats already promised to partners of half-placed gates elsewhere in this slice
    for other in set(inst.groups[t].values()):
        if q in other:
            continue
        cores = [row[m] for m in other if row[m] >= 0]
        if cores:
            free[cores[0]] -= sum(1 for m in other if row[m] < 0 and not inst.reset_indicators[t, m])
    placed = [row[m] for m in group if row[m] >= 0]
    if placed:
        valid = np.zeros(inst.num_cores, dtype=bool)
        c = placed[0]
        valid[c] = free[c] >= need
    else:
        valid = free >= need
    if inst.arch.restrict_hops:
        d = inst.arch.distance
        for m in pending:
            if state.loc_prev[m] >= 0:
                valid &= d[state.loc_prev[m]] <= 1
    return valid


def apply(state: AllocationState, inst: AllocationInstance, c: int) -> float:
    """In-place transition for the cursor qubit; returns the reward delta."""
    q = current_qubit(state, inst)
    if q is None:
        raise IllegalActionError("episode already finished")
    if not 0 <= c < inst.num_cores or not action_mask(state, inst, q)[c]:
        raise IllegalActionError(f"core {c} is masked for qubit {q} at slice {state.t}")
    t = state.t
    state.placement[t, q] = c
    if not inst.reset_indicators[t, q]:
        state.usage[t, c] += 1
    prev = state.loc_prev[q]
    delta = -float(inst.arch.distance[prev, c]) if prev >= 0 and prev != c else 0.0
    state.reward += delta
    state.cursor += 1
    if state.cursor == len(inst.orders[t]):
        _end_slice(state)
        _begin_slice(state, inst)
    return delta


def step(state: AllocationState, inst: AllocationInstance, q: int, c: int) -> tuple[AllocationState, StepOutcome]:
    if q != current_qubit(state, inst):
        raise IllegalActionError(f"qubit {q} is not next in processing order")
    new = state.copy()
    delta = apply(new, inst, c)
    return new, StepOutcome(delta, new.done)


@dataclass(frozen=True)
class AllocationSolution:
    placement: np.ndarray  # T x Q, -1 where the qubit is not live
    transfers: int
    weighted_cost: float
    num_cores: int

    @property
    def x(self) -> np.ndarray:
        T, Q = self.placement.shape
        out = np.zeros((T, Q, self.num_cores), dtype=np.int8)
        t, q = np.nonzero(self.placement >= 0)
        out[t, q, self.placement[t, q]] = 1
        return out

    def to_json(self) -> dict:
        T, Q = self.placement.shape
        return {
            "slices": T, "qubits": Q, "cores": self.num_cores,
            "placement": [[int(c) if c >= 0 else None for c in row] for row in self.placement],
            "transfers": self.transfers, "weighted_cost": self.weighted_cost,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def solution_from_json(doc: dict) -> AllocationSolution:
    placement = np.array([[-1 if c is None else c for c in row] for row in doc["placement"]], dtype=np.int64)
    placement = placement.reshape(int(doc["slices"]), int(doc["qubits"]))
    return AllocationSolution(placement, int(doc["transfers"]), float(doc["weighted_cost"]), int(doc["cores"]))


def count_transfers(placement: np.ndarray, arch: Architecture, inst: AllocationInstance | None = None) -> tuple[int, float]:
    """Moves between consecutive slices and their hop-weighted cost."""
    placement = np.asarray(placement)
    if inst is not None and not np.array_equal(placement >= 0, inst.live):
        raise ValueError("incomplete solution: placement does not cover exactly the live qubits")
    if placement.shape[0] < 2:
        return 0, 0.0
    a, b = placement[:-1], placement[1:]
    moved = (a >= 0) & (b >= 0) & (a != b)
    return int(moved.sum()), float(arch.distance[a[moved], b[moved]].sum())


def finish(state: AllocationState, inst: AllocationInstance) -> AllocationSolution:
    if not state.done:
        raise ValueError("episode not finished")
    n, w = count_transfers(state.placement, inst.arch, inst)
    return AllocationSolution(state.placement.copy(), n, w, inst.num_cores)


def violations(placement: np.ndarray, inst: AllocationInstance) -> list[str]:
    """Independent legality check of a finished placement."""
    out = []
    placement = np.asarray(placement)
    cap = inst.arch.capacity
    T, Q = placement.shape
    for t in range(T):
        for q in range(Q):
            if inst.live[t, q] != (placement[t, q] >= 0):
                out.append(f"slice {t}: qubit {q} {'unplaced' if inst.live[t, q] else 'placed while not live'}")
        for c in range(inst.num_cores):
            n = sum(1 for q in range(Q) if placement[t, q] == c and not inst.reset_indicators[t, q])
            if n > cap[c]:
                out.append(f"slice {t}: core {c} holds {n} > {cap[c]}")
        for op in inst.sliced.slices[t]:
            if op.is_multi and len({int(placement[t, q]) for q in op.qubits}) > 1:
                out.append(f"slice {t}: {op.name}{op.qubits} split across cores")
    return out

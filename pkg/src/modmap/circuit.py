"""Circuit IR, ASAP time slicing, qubit lifetimes and interaction graphs."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MEASURE = "measure"
RESET = "reset"
BARRIER = "barrier"


@dataclass(frozen=True)
class GateOp:
    """One operation over logical qubits.

    ``clbit`` is only meaningful for measurements.
    """

    name: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    clbit: int | None = None

    def __post_init__(self):
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"{self.name}: repeated operand in {self.qubits}")
        if self.name in (MEASURE, RESET) and len(self.qubits) != 1:
            raise ValueError(f"{self.name} takes exactly one qubit")

    @property
    def klass(self) -> str:
        if self.name in (MEASURE, RESET, BARRIER):
            return self.name
        return "unitary"

    @property
    def is_multi(self) -> bool:
        return self.klass == "unitary" and len(self.qubits) > 1

    def remap(self, mapping) -> GateOp:
        return GateOp(self.name, tuple(mapping[q] for q in self.qubits), self.params, self.clbit)


@dataclass(frozen=True)
class Circuit:
    num_qubits: int
    ops: tuple[GateOp, ...] = ()
    num_clbits: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        for op in self.ops:
            for q in op.qubits:
                if not 0 <= q < self.num_qubits:
                    raise ValueError(f"operand {q} out of range for {self.num_qubits} qubits")
            if op.clbit is not None and not 0 <= op.clbit < self.num_clbits:
                raise ValueError(f"clbit {op.clbit} out of range for {self.num_clbits} bits")

    def __len__(self):
        return len(self.ops)

    def count(self, pred) -> int:
        return sum(1 for op in self.ops if pred(op))

    @property
    def two_qubit_count(self) -> int:
        return self.count(lambda op: op.is_multi)

    def used_qubits(self) -> set[int]:
        return {q for op in self.ops if op.klass != BARRIER for q in op.qubits}

    def without_barriers(self) -> Circuit:
        return Circuit(self.num_qubits, tuple(op for op in self.ops if op.klass != BARRIER), self.num_clbits)


@dataclass(frozen=True)
class SlicedCircuit:
    num_qubits: int
    slices: tuple[tuple[GateOp, ...], ...]
    origin: Circuit = field(repr=False, compare=False)

    @property
    def depth(self) -> int:
        return len(self.slices)

    def serialize(self) -> Circuit:
        """Flatten slices back into a circuit (slice-major order)."""
        ops = tuple(op for sl in self.slices for op in sl)
        return Circuit(self.num_qubits, ops, self.origin.num_clbits)

    def active(self, t: int) -> set[int]:
        return {q for op in self.slices[t] for q in op.qubits}


def slice_circuit(c: Circuit) -> SlicedCircuit:
    """ASAP layering. Barriers fence every later op behind all earlier ones and are dropped."""
    level = [0] * c.num_qubits
    fence = 0
    layers: list[list[GateOp]] = []
    for op in c.ops:
        if op.klass == BARRIER:
            fence = len(layers)
            continue
        t = max([fence] + [level[q] for q in op.qubits])
        while len(layers) <= t:
            layers.append([])
        layers[t].append(op)
        for q in op.qubits:
            level[q] = t + 1
    return SlicedCircuit(c.num_qubits, tuple(tuple(layer) for layer in layers), c)


def depth(c: Circuit) -> int:
    return slice_circuit(c).depth


@dataclass(frozen=True)
class LifetimeTable:
    first_idx: tuple[int | None, ...]
    last_idx: tuple[int | None, ...]

    def is_live(self, q: int, t: int) -> bool:
        f = self.first_idx[q]
        return f is not None and f <= t <= self.last_idx[q]


def lifetimes(s: SlicedCircuit) -> LifetimeTable:
    first: list[int | None] = [None] * s.num_qubits
    last: list[int | None] = [None] * s.num_qubits
    for t, sl in enumerate(s.slices):
        for op in sl:
            for q in op.qubits:
                if first[q] is None:
                    first[q] = t
                last[q] = t
    return LifetimeTable(tuple(first), tuple(last))


def interaction_graph(s: SlicedCircuit) -> np.ndarray:
    """Symmetric Q x Q count of multi-qubit ops shared by each qubit pair."""
    adj = np.zeros((s.num_qubits, s.num_qubits), dtype=np.int64)
    for sl in s.slices:
        for op in sl:
            if not op.is_multi:
                continue
            for i, a in enumerate(op.qubits):
                for b in op.qubits[i + 1:]:
                    adj[a, b] += 1
                    adj[b, a] += 1
    return adj


def friend_groups(sl: Iterable[GateOp]) -> dict[int, tuple[int, ...]]:
    """Map each operand of a multi-qubit op to the full operand tuple of that op."""
    groups: dict[int, tuple[int, ...]] = {}
    for op in sl:
        if op.is_multi:
            for q in op.qubits:
                groups[q] = op.qubits
    return groups


def make_circuit(num_qubits: int, spec: Sequence[tuple]) -> Circuit:
    """Small builder used in tests and examples: ``[("h", 0), ("cx", 0, 1), ...]``."""
    ops = []
    nclbits = 0
    for item in spec:
        name, *qs = item
        if name == MEASURE:
            ops.append(GateOp(name, (qs[0],), (), nclbits))
            nclbits += 1
        else:
            ops.append(GateOp(name, tuple(qs)))
    return Circuit(num_qubits, tuple(ops), nclbits)

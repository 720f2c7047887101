"""Dynamic qubit reuse: chain logical qubits with disjoint lifetimes onto one
wire by inserting a mid-circuit measure + reset between them."""
from __future__ import annotations

from dataclasses import dataclass

from .circuit import MEASURE, RESET, Circuit, GateOp, SlicedCircuit, lifetimes, slice_circuit

PRESETS: dict[str, tuple[float, float, float]] = {
    "baseline": (1.0, 1.0, 1.0),
    "depth-averse": (5.0, 1.0, 1.0),
    "reuse-aggressive": (1.0, 5.0, 1.0),
    "locality": (1.0, 1.0, 5.0),
    "greedy": (0.0, 1.0, 0.0),
}


@dataclass(frozen=True)
class ReuseWeights:
    depth: float = 1.0     # w0, penalty on depth increase
    earliness: float = 1.0  # w1, prefer donors that finish early
    gap: float = 1.0       # w2, prefer short idle gaps

    def __post_init__(self):
        if min(self.depth, self.earliness, self.gap) < 0:
            raise ValueError("reuse weights must be non-negative")
        if self.depth == self.earliness == self.gap == 0:
            raise ValueError("at least one reuse weight must be positive")

    @classmethod
    def preset(cls, name: str) -> ReuseWeights:
        try:
            return cls(*PRESETS[name])
        except KeyError:
            raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None

    @classmethod
    def parse(cls, text: str) -> ReuseWeights:
        parts = [float(x) for x in text.split(",")]
        if len(parts) != 3:
            raise ValueError("weights must be three comma-separated numbers")
        return cls(*parts)


@dataclass(frozen=True)
class ReusePair:
    donor: int
    receiver: int
    cost: float | None = None


@dataclass(frozen=True)
class ReuseChainMap:
    chain: dict[int, tuple[int, ...]]       # output wire -> logical qubits in time order
    logical_to_slot: dict[int, int]


@dataclass(frozen=True)
class ReuseResult:
    circuit: Circuit
    chains: ReuseChainMap
    qubit_count_before: int
    qubit_count_after: int
    depth_before: int
    depth_after: int
    pairs: tuple[ReusePair, ...] = ()


def find_candidates(s: SlicedCircuit) -> list[ReusePair]:
    lt = lifetimes(s)
    used = [q for q in range(s.num_qubits) if lt.first_idx[q] is not None]
    return [ReusePair(a, b) for a in used for b in used
            if a != b and lt.last_idx[a] < lt.first_idx[b]]


def _serial(s: SlicedCircuit) -> list[GateOp]:
    return [op for sl in s.slices for op in sl]


def _last_position(ops: list[GateOp], q: int) -> int:
    for i in range(len(ops) - 1, -1, -1):
        if q in ops[i].qubits:
            return i
    raise ValueError(f"qubit {q} has no operations")


def rewrite(s: SlicedCircuit, donor: int, receiver: int) -> Circuit:
    """Measure + reset the donor after its last op, then run the receiver's ops on the donor's wire."""
    ops = _serial(s)
    pos = _last_position(ops, donor)
    clbit = s.origin.num_clbits
    mapping = {q: q for q in range(s.num_qubits)}
    mapping[receiver] = donor
    out = [op.remap(mapping) for op in ops[:pos + 1]]
    out.append(GateOp(MEASURE, (donor,), (), clbit))
    out.append(GateOp(RESET, (donor,)))
    out.extend(op.remap(mapping) for op in ops[pos + 1:])
    return Circuit(s.num_qubits, tuple(out), clbit + 1)


def _rewritten_depth(qubit_lists: list[tuple[int, ...]], nq: int, pos: int, donor: int, receiver: int) -> int:
    # depth of rewrite(...) without materialising the circuit
    level = [0] * nq
    depth = 0
    for i, qs in enumerate(qubit_lists):
        t = 0
        for q in qs:
            if q == receiver:
                q = donor
            if level[q] > t:
                t = level[q]
        t += 1
        for q in qs:
            level[donor if q == receiver else q] = t
        if t > depth:
            depth = t
        if i == pos:
            level[donor] += 2  # measure, reset
            if level[donor] > depth:
                depth = level[donor]
    return depth


def pair_cost(p: ReusePair, s: SlicedCircuit, w: ReuseWeights) -> float:
    lt = lifetimes(s)
    ops = _serial(s)
    pos = _last_position(ops, p.donor)
    new_depth = _rewritten_depth([op.qubits for op in ops], s.num_qubits, pos, p.donor, p.receiver)
    last = lt.last_idx[p.donor]
    return (w.depth * (new_depth - s.depth) + w.earliness * last
            + w.gap * abs(last - lt.first_idx[p.receiver]))


def _select(s: SlicedCircuit, w: ReuseWeights, depth_budget: float | None) -> ReusePair | None:
    lt = lifetimes(s)
    cands = find_candidates(s)
    if not cands:
        return None
    ops = _serial(s)
    qubit_lists = [op.qubits for op in ops]
    last_pos = {}
    for i, qs in enumerate(qubit_lists):
        for q in qs:
            last_pos[q] = i

    # depth can only grow under a rewrite, so the two index terms bound the cost from below
    def bound(p):
        last = lt.last_idx[p.donor]
        return w.earliness * last + w.gap * abs(last - lt.first_idx[p.receiver])

    ranked = sorted(cands, key=lambda p: (bound(p), p.donor, p.receiver))
    best: tuple | None = None
    for p in ranked:
        lb = bound(p)
        if best is not None and lb > best[0]:
            break
        delta = _rewritten_depth(qubit_lists, s.num_qubits, last_pos[p.donor], p.donor, p.receiver) - s.depth
        if depth_budget is not None and delta > depth_budget:
            continue
        key = (w.depth * delta + lb, p.donor, p.receiver)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    return ReusePair(best[1], best[2], best[0])


def optimize_qubit_reuse(c: Circuit, w: ReuseWeights | None = None,
                         depth_budget: float | None = None) -> ReuseResult:
    w = w or ReuseWeights()
    current = c.without_barriers()
    chains: dict[int, list[int]] = {q: [q] for q in range(c.num_qubits)}
    pairs = []
    while True:
        s = slice_circuit(current)
        p = _select(s, w, depth_budget)
        if p is None:
            break
        current = rewrite(s, p.donor, p.receiver)
        chains[p.donor].extend(chains.pop(p.receiver))
        pairs.append(p)

    slots = sorted(chains)
    renumber = {old: new for new, old in enumerate(slots)}
    ops = tuple(op.remap(renumber) for op in current.ops)
    out = Circuit(len(slots), ops, current.num_clbits)
    chain = {renumber[k]: tuple(v) for k, v in chains.items()}
    l2s = {q: slot for slot, qs in chain.items() for q in qs}
    return ReuseResult(out, ReuseChainMap(chain, l2s), c.num_qubits, len(slots),
                       slice_circuit(c).depth, slice_circuit(out).depth, tuple(pairs))

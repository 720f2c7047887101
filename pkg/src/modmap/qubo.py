"""QUBO encoding of slice-wise allocation and a single-bit-flip annealer.

Binary variable x[t,q,c] = 1 places live qubit q on core c during slice t. The
energy adds penalties for broken one-hot rows, over/under-filled cores and split
gate operands to the hop-weighted movement cost between consecutive slices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from . import env
from .architecture import Architecture
from .circuit import SlicedCircuit
from .env import AllocationInstance, AllocationSolution
from .policies import metropolis_accept


@dataclass(frozen=True)
class Penalties:
    onehot: float
    capacity: float
    friend: float

    def __post_init__(self):
        if min(self.onehot, self.capacity, self.friend) <= 0:
            raise ValueError("penalty coefficients must be positive")

    @classmethod
    def default(cls, inst: AllocationInstance) -> Penalties:
        maxd = inst.arch.max_distance
        big = 2 * inst.num_slices * inst.num_qubits * maxd + 1
        # relocating a group of g qubits off an overfull core saves >= 2gB and costs <= 2g*maxd
        return cls(big, maxd + 1.0, big)


@dataclass(frozen=True, eq=False)
class QuboInstance:
    instance: AllocationInstance
    index: dict[tuple[int, int, int], int]   # (t, q, c) -> variable id
    linear: np.ndarray
    quadratic: dict[tuple[int, int], float]  # i < j
    offset: float
    penalties: Penalties
    coupling: np.ndarray = field(repr=False)  # symmetric, zero diagonal

    @property
    def num_vars(self) -> int:
        return len(self.linear)

    def energy(self, x) -> float:
        """Quadratic form at ``x`` (constant offset excluded)."""
        x = np.asarray(x, dtype=float)
        return float(self.linear @ x + 0.5 * x @ self.coupling @ x)


def build_qubo(s: SlicedCircuit, a: Architecture, penalties: Penalties | None = None) -> QuboInstance:
    inst = env.build_instance(s, a)
    pen = penalties or Penalties.default(inst)
    T, Q, C = inst.num_slices, inst.num_qubits, inst.num_cores
    D = inst.arch.distance
    cap = inst.arch.capacity

    index: dict[tuple[int, int, int], int] = {}
    for t in range(T):
        for q in np.flatnonzero(inst.live[t]):
            for c in range(C):
                index[(t, int(q), c)] = len(index)
    n = len(index)
    lin = np.zeros(n)
    quad: dict[tuple[int, int], float] = {}
    offset = 0.0

    def add(i, j, v):
        if i == j:
            lin[i] += v
            return
        key = (i, j) if i < j else (j, i)
        quad[key] = quad.get(key, 0.0) + v

    for t in range(T):
        qs = [int(q) for q in np.flatnonzero(inst.live[t])]
        # one-hot: A (sum_c x - 1)^2
        for q in qs:
            offset += pen.onehot
            for c in range(C):
                add(index[t, q, c], index[t, q, c], -pen.onehot)
                for c2 in range(c + 1, C):
                    add(index[t, q, c], index[t, q, c2], 2 * pen.onehot)
        # capacity: B (sum_q x - P_c)^2
        for c in range(C):
            offset += pen.capacity * cap[c] ** 2
            for i, q in enumerate(qs):
                add(index[t, q, c], index[t, q, c], pen.capacity * (1 - 2 * cap[c]))
                for q2 in qs[i + 1:]:
                    add(index[t, q, c], index[t, q2, c], 2 * pen.capacity)
        # split gate operands
        for op in inst.sliced.slices[t]:
            if not op.is_multi:
                continue
            for i, q in enumerate(op.qubits):
                for q2 in op.qubits[i + 1:]:
                    for c in range(C):
                        for c2 in range(C):
                            if c != c2:
                                add(index[t, q, c], index[t, q2, c2], pen.friend)
        # movement into the next slice
        if t + 1 < T:
            for q in qs:
                if not inst.live[t + 1, q]:
                    continue
                for c in range(C):
                    for c2 in range(C):
                        if c != c2:
                            add(index[t, q, c], index[t + 1, q, c2], float(D[c, c2]))

    W = np.zeros((n, n))
    for (i, j), v in quad.items():
        W[i, j] = W[j, i] = v
    return QuboInstance(inst, index, lin, quad, offset, pen, W)


@dataclass(frozen=True)
class QuboSolution:
    assignment: np.ndarray
    energy: float
    decoded: AllocationSolution | None
    reason: str = ""

    @property
    def valid(self) -> bool:
        return self.decoded is not None


def decode(qubo: QuboInstance, x) -> tuple[AllocationSolution | None, str]:
    inst = qubo.instance
    x = np.asarray(x)
    P = np.full((inst.num_slices, inst.num_qubits), -1, dtype=np.int64)
    for t in range(inst.num_slices):
        for q in np.flatnonzero(inst.live[t]):
            row = [c for c in range(inst.num_cores) if x[qubo.index[t, int(q), c]]]
            if len(row) != 1:
                return None, f"slice {t}: qubit {q} assigned to {len(row)} cores"
            P[t, q] = row[0]
    bad = env.violations(P, inst)
    if bad:
        return None, bad[0]
    n, w = env.count_transfers(P, inst.arch, inst)
    return AllocationSolution(P, n, w, inst.num_cores), ""


def delta_energy(qubo: QuboInstance, x: np.ndarray, i: int) -> float:
    """Energy change of flipping bit ``i`` (full-recompute reference for the annealer's bookkeeping)."""
    return float((1 - 2 * x[i]) * (qubo.linear[i] + qubo.coupling[i] @ x))


def solve_anneal(qubo: QuboInstance, schedule: tuple[float, float] = (10.0, 0.01), seed: int = 0,
                 sweeps: int = 200, init=None) -> QuboSolution:
    """Metropolis single-bit flips, ``sweeps`` full passes, geometric cooling; returns the best state seen.

    A schedule whose start temperature is 0 runs pure descent.
    """
    rng = np.random.default_rng(seed)
    n = qubo.num_vars
    x = np.asarray(init, dtype=float).copy() if init is not None else rng.integers(0, 2, n).astype(float)
    field_ = qubo.linear + qubo.coupling @ x
    e = qubo.energy(x)
    best_x, best_e = x.copy(), e
    t0, t1 = schedule
    for k in range(sweeps):
        temp = 0.0 if t0 <= 0 else t0 * (t1 / t0) ** (k / max(1, sweeps - 1))
        for i in rng.permutation(n):
            d = (1 - 2 * x[i]) * field_[i]
            if not metropolis_accept(d, temp, rng.random()):
                continue
            step = 1 - 2 * x[i]
            x[i] += step
            field_ += step * qubo.coupling[:, i]
            e += d
            if e < best_e - 1e-9:
                best_x, best_e = x.copy(), e
    best_e = qubo.energy(best_x)  # drop accumulated rounding
    decoded, reason = decode(qubo, best_x)
    return QuboSolution(best_x.astype(np.int8), best_e, decoded, reason)


def write_qubo(qubo: QuboInstance, fh: TextIO) -> None:
    """Coefficient list: a constant header line, then ``i j value`` (diagonal = linear terms)."""
    fh.write(f"# constant {qubo.offset!r}\n")
    for i, v in enumerate(qubo.linear):
        if v != 0:
            fh.write(f"{i} {i} {float(v)!r}\n")
    for (i, j), v in sorted(qubo.quadratic.items()):
        if v != 0:
            fh.write(f"{i} {j} {float(v)!r}\n")

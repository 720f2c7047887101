from pathlib import Path

import numpy as np
import pytest

from modmap.circuit import make_circuit

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
STANDARD = ["4mod5-bdd_287", "ex1_226", "graycode6_47", "xor5_254", "bv_n10", "cc_n10"]


def bv5():
    """Five-qubit BV shape: X on the ancilla, then each data qubit CX-es it and gets an H."""
    spec = [("x", 4)]
    for i in range(4):
        spec += [("cx", i, 4), ("h", i)]
    return make_circuit(5, spec)


def bv_shaped(n_data: int):
    """Data qubits touch the ancilla once each, in sequence."""
    spec = [("x", n_data), ("h", n_data)] + [("cx", i, n_data) for i in range(n_data)] + [("h", n_data)]
    return make_circuit(n_data + 1, spec)


def random_circuit(rng: np.random.Generator, n_qubits: int, n_ops: int, allow_3q: bool = False):
    spec = []
    for _ in range(n_ops):
        r = rng.random()
        if n_qubits >= 3 and allow_3q and r < 0.1:
            spec.append(("ccx", *map(int, rng.choice(n_qubits, 3, replace=False))))
        elif n_qubits >= 2 and r < 0.5:
            spec.append(("cx", *map(int, rng.choice(n_qubits, 2, replace=False))))
        else:
            spec.append((["h", "x", "t"][int(rng.integers(3))], int(rng.integers(n_qubits))))
    return make_circuit(n_qubits, spec)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def random_arch(rng: np.random.Generator):
    from modmap.architecture import from_edges, make_grid
    kind = int(rng.integers(3))
    if kind == 0:
        return make_grid(int(rng.integers(1, 3)), int(rng.integers(1, 4)), int(rng.integers(2, 5)))
    n = int(rng.integers(2, 5))
    cap = [int(x) for x in rng.integers(2, 5, size=n)]
    if kind == 1:
        return from_edges(cap, [(i, i + 1) for i in range(n - 1)])
    return from_edges(cap, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_instance(rng: np.random.Generator, max_qubits: int = 7, max_ops: int = 20, reuse: bool | None = None):
    """A feasible random allocation instance, optionally reuse-rewritten."""
    from modmap.circuit import slice_circuit
    from modmap.env import InfeasibleError, build_instance
    from modmap.reuse import optimize_qubit_reuse
    while True:
        arch = random_arch(rng)
        c = random_circuit(rng, int(rng.integers(2, max_qubits + 1)), int(rng.integers(1, max_ops + 1)),
                           allow_3q=True)
        r = bool(rng.integers(2)) if reuse is None else reuse
        if r:
            c = optimize_qubit_reuse(c).circuit
        try:
            return build_instance(slice_circuit(c), arch, release_finished=r)
        except InfeasibleError:
            continue


def exhaustive_optimum(sliced, arch, release_finished: bool = True) -> float | None:
    """Minimum hop-weighted cost over every legal placement, by DP over slices.

    Liveness, decisions and legality are rebuilt here from the slices: a used qubit
    holds a seat from slice 0 through its last op (or to the end without release);
    slice 0 chooses every live qubit, later slices choose active qubits and idle
    ones stay put. Returns None when no legal placement exists.
    """
    import itertools
    T, Q, C = sliced.depth, sliced.num_qubits, arch.num_cores
    D = arch.distance
    busy = [[t for t in range(T) if any(q in op.qubits for op in sliced.slices[t])] for q in range(Q)]
    live = [[bool(busy[q]) and (not release_finished or t <= busy[q][-1]) for q in range(Q)] for t in range(T)]
    frontier = {(-1,) * Q: 0.0}  # tuple of cores over qubits (-1 when not live) -> best cost
    for t in range(T):
        active = {q for op in sliced.slices[t] for q in op.qubits}
        choose = [q for q in range(Q) if live[t][q] and (t == 0 or q in active)]
        nxt: dict = {}
        for prev, cost in frontier.items():
            for combo in itertools.product(range(C), repeat=len(choose)):
                row = [-1] * Q
                for q in range(Q):
                    if live[t][q]:
                        row[q] = prev[q]
                for q, c in zip(choose, combo):
                    row[q] = c
                if any(row.count(c) > arch.capacity[c] for c in range(C)):
                    continue
                if any(len({row[q] for q in op.qubits}) > 1 for op in sliced.slices[t]):
                    continue
                step = sum(D[prev[q], row[q]] for q in range(Q) if t and prev[q] >= 0 and row[q] >= 0)
                key = tuple(row)
                if cost + step < nxt.get(key, float("inf")):
                    nxt[key] = cost + step
        frontier = nxt
        if not frontier:
            return None
    return min(frontier.values()) if T else 0.0


def tiny_instance(rng: np.random.Generator):
    """At most 5 qubits, 2 or 3 cores of capacity 2, at most 4 slices; always feasible for the oracle."""
    from modmap.architecture import from_edges
    from modmap.circuit import slice_circuit
    from modmap.env import InfeasibleError, build_instance
    while True:
        n_cores = int(rng.integers(2, 4))
        edges = [(i, i + 1) for i in range(n_cores - 1)]
        if n_cores == 3 and rng.random() < 0.5:
            edges.append((0, 2))
        arch = from_edges([2] * n_cores, edges)
        c = random_circuit(rng, int(rng.integers(2, 6)), int(rng.integers(2, 9)))
        s = slice_circuit(c)
        if not 1 <= s.depth <= 4:
            continue
        try:
            inst = build_instance(s, arch)
        except InfeasibleError:
            continue
        if exhaustive_optimum(s, arch) is None:
            continue
        return inst

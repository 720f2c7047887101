"""Random benchmark circuits and batch runs over (circuit, architecture, solver)."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__, env
from .architecture import Architecture
from .circuit import Circuit, GateOp, slice_circuit
from .fidelity import FidelityParams, estimate
from .policies import PolicyConfig, allocate
from .reuse import ReuseWeights, optimize_qubit_reuse

CSV_COLUMNS = ("circuit", "solver", "arch", "reuse", "transfers", "weighted_cost", "fidelity", "wall_ms", "seed")


@dataclass(frozen=True)
class RandomCircuitSpec:
    qubits: int
    depth: int
    two_qubit_gates: int
    seed: int = 0

    def __post_init__(self):
        if self.qubits < 1 or self.depth < 1 or self.two_qubit_gates < 0:
            raise ValueError("need qubits >= 1, depth >= 1, two_qubit_gates >= 0")
        if self.two_qubit_gates > (self.qubits // 2) * self.depth:
            raise ValueError(f"infeasible spec: {self.two_qubit_gates} CX gates do not fit in "
                             f"{self.depth} slices of {self.qubits} qubits")


def generate_random_circuit(spec: RandomCircuitSpec) -> Circuit:
    """CX gates land on random (slice, disjoint pair) slots; qubit 0 then fills each of
    its free slots with a one-qubit gate, which pins the ASAP depth to ``spec.depth``."""
    rng = np.random.default_rng(spec.seed)
    Q, T = spec.qubits, spec.depth
    busy = np.zeros((T, Q), dtype=bool)
    grid: list[list[GateOp]] = [[] for _ in range(T)]
    for _ in range(spec.two_qubit_gates):
        while True:
            t = int(rng.integers(T))
            a, b = (int(v) for v in rng.choice(Q, size=2, replace=False))
            if not busy[t, a] and not busy[t, b]:
                break
            if (~busy).sum(axis=1).max() < 2:  # unreachable: RandomCircuitSpec rejects overfull shapes
                raise ValueError("no free qubit pair left")
        busy[t, [a, b]] = True
        grid[t].append(GateOp("cx", (a, b)))
    for t in range(T):
        if not busy[t, 0]:
            busy[t, 0] = True
            grid[t].append(_random_1q(rng, 0))
    for q in range(1, Q):
        if not busy[:, q].any():
            busy[0, q] = True
            grid[0].append(GateOp("h", (q,)))
    ops = tuple(op for sl in grid for op in sorted(sl, key=lambda o: o.qubits))
    return Circuit(Q, ops)


def _random_1q(rng: np.random.Generator, q: int) -> GateOp:
    kind = ("h", "x", "rz")[int(rng.integers(3))]
    if kind == "rz":
        return GateOp("rz", (q,), (float(rng.uniform(0, 2 * math.pi)),))
    return GateOp(kind, (q,))


def shape_name(c: Circuit) -> str:
    """``s|m|l-<q>q-<d>d-<cx>cx`` from the circuit's achieved shape."""
    cx = c.two_qubit_count
    prefix = "s" if cx < 10 else ("m" if cx <= 50 else "l")
    return f"{prefix}-{c.num_qubits}q-{slice_circuit(c).depth}d-{cx}cx"


@dataclass(frozen=True)
class BenchRow:
    circuit: str
    solver: str
    arch: str
    reuse: str
    transfers: int | None
    weighted_cost: float | None
    fidelity: float | None
    wall_ms: float | None
    seed: int
    error: str = ""

    def csv_fields(self) -> list[str]:
        def fmt(v):
            return "" if v is None else (repr(v) if isinstance(v, float) else str(v))
        return [self.circuit, self.solver, self.arch, self.reuse, fmt(self.transfers),
                fmt(self.weighted_cost), fmt(self.fidelity), fmt(self.wall_ms), str(self.seed)]


@dataclass
class BenchReport:
    rows: list[BenchRow]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow(r.csv_fields())
        return buf.getvalue()


def run_pipeline(circuit: Circuit, arch: Architecture, cfg: PolicyConfig, reuse: bool,
                 weights: ReuseWeights | None = None, fparams: FidelityParams | None = None,
                 params=None):
    """reuse (optional) -> slice -> allocate -> re-count -> fidelity; returns (solution, report, sliced)."""
    if reuse:
        circuit = optimize_qubit_reuse(circuit, weights).circuit
    sliced = slice_circuit(circuit.without_barriers())
    inst = env.build_instance(sliced, arch, release_finished=reuse)
    sol = allocate(inst, cfg, params)
    n, w = env.count_transfers(sol.placement, arch, inst)
    if (n, w) != (sol.transfers, sol.weighted_cost):
        raise RuntimeError(f"solver reported {sol.transfers} transfers, recount gives {n}")
    bad = env.violations(sol.placement, inst)
    if bad:
        raise RuntimeError(f"illegal solution: {bad[0]}")
    return sol, estimate(sol, sliced, fparams), sliced


def _run_row(job) -> BenchRow:
    name, circuit, arch, cfg, reuse, weights, fparams, timing = job
    start = time.perf_counter()
    base = dict(circuit=name, solver=cfg.kind, arch=arch.name, reuse="on" if reuse else "off", seed=cfg.seed)
    try:
        sol, rep, _ = run_pipeline(circuit, arch, cfg, reuse, weights, fparams)
    except Exception as exc:  # a failed row must not abort the batch
        return BenchRow(transfers=None, weighted_cost=None, fidelity=None, wall_ms=None,
                        error=f"{type(exc).__name__}: {exc}", **base)
    ms = round((time.perf_counter() - start) * 1e3, 3) if timing else None
    return BenchRow(transfers=sol.transfers, weighted_cost=sol.weighted_cost, fidelity=rep.circuit_fidelity,
                    wall_ms=ms, **base)


def run_bench(circuits, archs, solvers, reuse: bool, out: str | None = None, *,
              weights: ReuseWeights | None = None, fparams: FidelityParams | None = None,
              jobs: int = 1, timing: bool = True) -> BenchReport:
    """Run every (circuit, arch, solver) triple. ``circuits`` is a list of ``(name, Circuit)``.

    With ``timing=False`` the wall-time column is left empty so reports are byte-identical across runs.
    """
    jobs_list = [(name, c, a, s, reuse, weights, fparams, timing)
                 for name, c in circuits for a in archs for s in solvers]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_row, jobs_list))
    else:
        rows = [_run_row(j) for j in jobs_list]
    report = BenchReport(rows, {
        "version": __version__, "numpy": np.__version__,
        "seeds": sorted({s.seed for s in solvers}), "reuse": "on" if reuse else "off",
    })
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(report.to_csv())
    return report


def instance_source(qubits: int, depth: int, two_qubit_gates: int, arch: Architecture):
    """Callable ``rng -> AllocationInstance`` over random circuits of one shape (training/eval feed)."""
    def draw(rng: np.random.Generator) -> env.AllocationInstance:
        spec = RandomCircuitSpec(qubits, depth, two_qubit_gates, int(rng.integers(2**63)))
        return env.build_instance(slice_circuit(generate_random_circuit(spec)), arch)
    return draw

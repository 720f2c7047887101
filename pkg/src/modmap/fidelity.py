"""Analytical fidelity estimate for an allocated circuit.

Every qubit carries a fidelity that gate noise shrinks multiplicatively-plus-mixing,
an inter-core move scales by a fixed transfer fidelity, and every slice decays all
live qubits for the slice's wall-clock duration.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np

from .circuit import MEASURE, RESET, SlicedCircuit
from .env import AllocationSolution


@dataclass(frozen=True)
class FidelityParams:
    err_1q: float = 1e-4
    dur_1q: float = 10e-9
    err_2q: float = 2.75e-3
    dur_2q: float = 590e-9
    T1: float = 335e-6
    T2: float = 205e-6
    p_ent: float = 0.0
    transfer_fidelity: float = 0.96
    latency_factor: float = 5.0
    err_meas: float = 1e-4
    dur_meas: float = 10e-9

    def __post_init__(self):
        for name in ("err_1q", "err_2q", "err_meas"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in [0, 1)")
        for name in ("dur_1q", "dur_2q", "dur_meas", "T1", "T2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.p_ent <= 1:
            raise ValueError("p_ent must lie in [0, 1]")
        if not 0 < self.transfer_fidelity <= 1:
            raise ValueError("transfer_fidelity must lie in (0, 1]")
        if not self.latency_factor >= 1:
            raise ValueError("latency_factor must be >= 1")

    def with_latency(self, factor: float) -> FidelityParams:
        return replace(self, latency_factor=float(factor))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> FidelityParams:
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown fidelity parameters: {', '.join(sorted(unknown))}")
        return cls(**{k: float(v) for k, v in doc.items()})

    @classmethod
    def load(cls, path: str) -> FidelityParams:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def depolarization_param(gate_fidelity: float, n_qubits: int) -> float:
    """p = d(1 - F)/(d - 1), d = 2^n, evaluated exactly on the shortest decimal form of F
    and rounded once, so F = 0.99 on one qubit gives exactly 0.02."""
    if not 0 < gate_fidelity <= 1:
        raise ValueError("gate fidelity must lie in (0, 1]")
    d = 2 ** n_qubits
    f = Fraction(repr(float(gate_fidelity)))
    return float(d * (1 - f) / (d - 1))


def apply_1q(f: float, p: float, p_ent: float = 0.0) -> float:
    return (1.0 - p) * f + (1.0 - p_ent) * p / 2


def eta(f_i: float, f_j: float, p: float, d_ab: int = 4) -> float:
    # the positive root of eta^2 + sqrt(1-p)(Fi+Fj) eta - p/d_ab = 0, written to avoid cancellation
    a = math.sqrt(1.0 - p) * (f_i + f_j)
    c = p / d_ab
    if c == 0:
        return 0.0
    return 2 * c / (a + math.sqrt(a * a + 4 * c))


def apply_2q(f_i: float, f_j: float, p: float, p_ent: float = 0.0) -> tuple[float, float]:
    s = math.sqrt(1.0 - p)
    mix = (1.0 - p_ent) * eta(f_i, f_j, p)
    return s * f_i + mix, s * f_j + mix


def decohere(f: float, t_op: float, T1: float, T2: float) -> float:
    return f * math.exp(-t_op / T1) * (0.5 * math.exp(-t_op / T2) + 0.5)


@dataclass(frozen=True)
class FidelityReport:
    circuit_fidelity: float
    per_qubit: dict[int, float]
    transfer_count: int
    slice_durations: list[float] = field(default_factory=list)


def estimate(solution: AllocationSolution, sliced: SlicedCircuit, params: FidelityParams | None = None) -> FidelityReport:
    params = params or FidelityParams()
    P = np.asarray(solution.placement)
    T, Q = sliced.depth, sliced.num_qubits
    if P.shape != (T, Q):
        raise ValueError(f"solution shape {P.shape} does not match circuit ({T} slices, {Q} qubits)")
    used = set()
    last = {}
    for t, sl in enumerate(sliced.slices):
        for op in sl:
            for q in op.qubits:
                used.add(q)
                last[q] = t
    live = P >= 0  # a seat may be held past the last op when finished qubits are not released
    for q in range(Q):
        if q not in used and live[:, q].any():
            raise ValueError(f"illegal solution: unused qubit {q} is placed")
        if q in used and not live[:last[q] + 1, q].all():
            raise ValueError(f"illegal solution: qubit {q} unplaced before its last op")
    for t, sl in enumerate(sliced.slices):
        for op in sl:
            if op.is_multi and len({int(P[t, q]) for q in op.qubits}) > 1:
                raise ValueError(f"illegal solution: {op.name} split across cores at slice {t}")

    p1 = depolarization_param(1 - params.err_1q, 1)
    p2 = depolarization_param(1 - params.err_2q, 2)
    pm = depolarization_param(1 - params.err_meas, 1)
    F = {q: 1.0 for q in sorted(used)}
    transfers = 0
    durations = []
    for t, sl in enumerate(sliced.slices):
        moved = []
        if t > 0:
            moved = [q for q in used if P[t - 1, q] >= 0 and P[t, q] >= 0 and P[t - 1, q] != P[t, q]]
        for q in moved:
            F[q] *= params.transfer_fidelity
        transfers += len(moved)

        dur = 0.0
        for op in sl:
            if op.klass in (MEASURE, RESET):
                q = op.qubits[0]
                F[q] = apply_1q(F[q], pm, params.p_ent)
                dur = max(dur, params.dur_meas)
            elif len(op.qubits) == 1:
                q = op.qubits[0]
                F[q] = apply_1q(F[q], p1, params.p_ent)
                dur = max(dur, params.dur_1q)
            elif op.is_multi:
                # wider gates act as a chain of pairwise two-qubit updates
                qs = op.qubits
                for a, b in zip(qs, qs[1:]):
                    F[a], F[b] = apply_2q(F[a], F[b], p2, params.p_ent)
                dur = max(dur, (len(qs) - 1) * params.dur_2q)
        if moved:
            dur = max(dur, params.latency_factor * params.dur_2q)
        durations.append(dur)
        for q in np.flatnonzero(live[t]):
            F[int(q)] = decohere(F[int(q)], dur, params.T1, params.T2)

    return FidelityReport(math.prod(F.values()), F, transfers, durations)

"""Modular hardware model: cores, capacities, core coupling and hop distances."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    capacity: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    distance: np.ndarray = field(compare=False)
    name: str = ""
    # when set, a qubit may only move one hop per slice (sparse core graphs)
    restrict_hops: bool = False

    @property
    def num_cores(self) -> int:
        return len(self.capacity)

    @property
    def total_capacity(self) -> int:
        return sum(self.capacity)

    @property
    def max_distance(self) -> float:
        return float(self.distance.max()) if self.distance.size else 0.0

    def is_complete(self) -> bool:
        c = self.num_cores
        return len({tuple(sorted(e)) for e in self.edges}) == c * (c - 1) // 2

    def to_json(self) -> dict:
        return {"cores": self.num_cores, "capacity": list(self.capacity), "edges": [list(e) for e in self.edges]}


def hop_distances(num_cores: int, edges) -> np.ndarray:
    if num_cores == 0:
        return np.zeros((0, 0))
    rows = [a for a, b in edges] + [b for a, b in edges]
    cols = [b for a, b in edges] + [a for a, b in edges]
    g = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(num_cores, num_cores))
    return shortest_path(g, method="D", directed=False, unweighted=True)


def from_edges(capacity, edges, name: str = "", restrict_hops: bool = False) -> Architecture:
    capacity = tuple(int(p) for p in capacity)
    edges = tuple((int(a), int(b)) for a, b in edges)
    for a, b in edges:
        if not (0 <= a < len(capacity) and 0 <= b < len(capacity)) or a == b:
            raise ArchitectureError(f"bad coupling edge ({a}, {b})")
    d = hop_distances(len(capacity), edges)
    return Architecture(capacity, edges, d, name, restrict_hops)


def make_grid(rows: int, cols: int, capacity_per_core: int) -> Architecture:
    """``rows x cols`` cores with 4-neighbour coupling and uniform capacity; core id = r*cols + c."""
    if rows * cols < 1 or capacity_per_core < 1:
        raise ArchitectureError("grid needs at least one core of capacity >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            if c + 1 < cols:
                edges.append((k, k + 1))
            if r + 1 < rows:
                edges.append((k, k + cols))
    return from_edges([capacity_per_core] * (rows * cols), edges, f"grid:{rows}x{cols}:{capacity_per_core}")


def validate(a: Architecture) -> None:
    """Raise :class:`ArchitectureError` naming the first violated invariant."""
    d = np.asarray(a.distance, dtype=float)
    c = a.num_cores
    if c < 1 or a.total_capacity < 1:
        raise ArchitectureError("architecture has no capacity")
    for k, p in enumerate(a.capacity):
        if p < 1:
            raise ArchitectureError(f"zero-capacity core {k}")
    if d.shape != (c, c):
        raise ArchitectureError(f"distance matrix shape {d.shape} does not match {c} cores")
    if not np.array_equal(d, d.T):
        raise ArchitectureError("asymmetric distance matrix")
    if np.any(np.diag(d) != 0):
        raise ArchitectureError("nonzero diagonal in distance matrix")
    if np.any(d < 0):
        raise ArchitectureError("negative distance")
    sp = hop_distances(c, a.edges)
    if not np.all(np.isfinite(sp)):
        raise ArchitectureError("core coupling graph is disconnected")
    if not np.array_equal(d, sp):
        raise ArchitectureError("distance matrix not shortest-path consistent with coupling")


def load_architecture(doc: dict) -> Architecture:
    cores = int(doc["cores"])
    cap = doc["capacity"]
    if isinstance(cap, int):
        cap = [cap] * cores
    if len(cap) != cores:
        raise ArchitectureError(f"{cores} cores but {len(cap)} capacities")
    arch = from_edges(cap, doc.get("edges", []), doc.get("name", ""), bool(doc.get("restrict_hops", False)))
    validate(arch)
    return arch


_GRID_RE = re.compile(r"grid:(\d+)x(\d+):(\d+)$")


def parse_arch(text: str) -> Architecture:
    """``grid:RxC:CAP`` shorthand or a path to a JSON architecture document."""
    m = _GRID_RE.match(text)
    if m:
        return make_grid(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    try:
        with open(text, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ArchitectureError(f"cannot read architecture {text!r}: {exc}") from exc
    arch = load_architecture(doc)
    return arch if arch.name else Architecture(arch.capacity, arch.edges, arch.distance, text, arch.restrict_hops)

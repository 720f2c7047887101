"""Solvers that drive the allocation environment."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import env
from .env import AllocationInstance, AllocationSolution, AllocationState, InfeasibleError

KINDS = ("greedy", "random", "beam", "anneal", "learned")


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "greedy"
    seed: int = 0
    beam_width: int = 8
    anneal_schedule: tuple[float, float, int] = (2.0, 0.02, 3000)
    restarts: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        t0, t1, steps = self.anneal_schedule
        if not t0 > t1 > 0:
            raise ValueError("anneal schedule needs T_start > T_end > 0")
        if steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be >= 1")


def _checked_mask(state: AllocationState, inst: AllocationInstance) -> np.ndarray:
    mask = env.action_mask(state, inst)
    if not mask.any():
        q = env.current_qubit(state, inst)
        raise InfeasibleError(f"no legal core for qubit {q} at slice {state.t}")
    return mask


def greedy_choice(state: AllocationState, inst: AllocationInstance, mask: np.ndarray) -> int:
    """Closest core to the qubit's previous core; ties go to the emptier, then lower-numbered core."""
    q = env.current_qubit(state, inst)
    prev = state.loc_prev[q]
    usage = state.usage[state.t]
    dist = inst.arch.distance[prev] if prev >= 0 else np.zeros(inst.num_cores)
    return min(np.flatnonzero(mask), key=lambda c: (dist[c], usage[c], c))


def rollout(inst: AllocationInstance, choose) -> AllocationState:
    """Run one episode, ``choose(state, mask) -> core``."""
    state = env.reset(inst)
    while not state.done:
        mask = _checked_mask(state, inst)
        env.apply(state, inst, int(choose(state, mask)))
    return state


def greedy(inst: AllocationInstance) -> AllocationState:
    return rollout(inst, lambda s, m: greedy_choice(s, inst, m))


def random_rollout(inst: AllocationInstance, rng: np.random.Generator) -> AllocationState:
    return rollout(inst, lambda s, m: rng.choice(np.flatnonzero(m)))


def _next_partners(inst: AllocationInstance) -> list[list[tuple[int, ...]]]:
    """``out[t][q]``: the other operands of q's first multi-qubit op after slice ``t``."""
    T, Q = inst.num_slices, inst.num_qubits
    out = [[()] * Q for _ in range(T)]
    upcoming: list[tuple[int, ...]] = [()] * Q
    for t in range(T - 1, -1, -1):
        out[t] = list(upcoming)
        for op in inst.sliced.slices[t]:
            if op.is_multi:
                for q in op.qubits:
                    upcoming[q] = tuple(r for r in op.qubits if r != q)
    return out


def _lookahead_penalty(state: AllocationState, inst: AllocationInstance, t: int, partners) -> int:
    """Next-gate partners already split across cores, plus seats a core lacks for the
    still-unplaced next partners of the qubits it holds."""
    row = state.placement[t]
    split = 0
    wanted: dict[int, set[int]] = {}
    for q in np.flatnonzero(row >= 0):
        c = row[q]
        for r in partners[q]:
            if row[r] >= 0:
                split += row[r] != c
            elif inst.live[t, r]:
                wanted.setdefault(int(c), set()).add(r)
    cap = inst.arch.capacity
    short = sum(max(0, len(rs) - (cap[c] - int(state.usage[t, c]))) for c, rs in wanted.items())
    return int(split) + short


def committed_cost(state: AllocationState, inst: AllocationInstance) -> float:
    """Lower bound on the cost the rest of the current slice must still pay.

    Pending operands of a gate already pinned to a core pay their hop there; an
    unpinned gate whose operands sit on different cores pays at least their largest
    pairwise distance; a core that more pending qubits want to stay on than it has
    seats for pushes the excess at least one hop away.
    """
    if state.done:
        return 0.0
    t = state.t
    D = inst.arch.distance
    row, prev = state.placement[t], state.loc_prev
    free = np.asarray(inst.arch.capacity) - state.usage[t]
    want = np.zeros(inst.num_cores, dtype=np.int64)
    cost = 0.0
    seen = set()
    for m in inst.orders[t][state.cursor:]:
        g = inst.groups[t].get(m, (m,))
        if g in seen:
            continue
        seen.add(g)
        pending = [q for q in g if row[q] < 0]
        pinned = [row[q] for q in g if row[q] >= 0]
        if pinned:
            k = pinned[0]
            cost += sum(float(D[prev[q], k]) for q in pending if prev[q] >= 0)
            free[k] -= sum(1 for q in pending if not inst.reset_indicators[t, q])
            continue
        homes = {int(prev[q]) for q in pending if prev[q] >= 0}
        if len(homes) > 1:
            cost += max(float(D[a, b]) for a in homes for b in homes)
        elif len(homes) == 1 and all(prev[q] >= 0 for q in pending):
            want[homes.pop()] += sum(1 for q in pending if not inst.reset_indicators[t, q])
    if inst.num_cores > 1:
        hop = np.where(np.eye(inst.num_cores, dtype=bool), np.inf, D).min(axis=1)
        excess = np.maximum(0, want - np.maximum(free, 0))
        cost += float((excess * hop).sum())
    return cost


def beam_search(inst: AllocationInstance, width: int) -> AllocationState:
    """Keep the ``width`` partial episodes with the best accumulated reward plus the
    cost already committed within the current slice (see :func:`committed_cost`).

    Equal scores are ordered by a next-gate lookahead (partners already split, seats
    missing for partners still to come), then by the number of distinct cores used so
    far, so every all-in-one-core episode survives while it is still free.
    Partial episodes that agree on the current slice and on every qubit's previous core
    have identical futures, so only the best of them is kept.
    """
    partners = _next_partners(inst)
    beams = [(env.reset(inst), 0)]  # (state, bitset of cores used so far)
    while not beams[0][0].done:
        t = beams[0][0].t
        cands = []
        for b, used in beams:
            mask = env.action_mask(b, inst)
            for c in np.flatnonzero(mask):
                nb = b.copy()
                env.apply(nb, inst, int(c))
                cands.append((committed_cost(nb, inst) - nb.reward, _lookahead_penalty(nb, inst, t, partners[t]),
                              (used | (1 << int(c))).bit_count(), nb, used | (1 << int(c))))
        if not cands:
            raise InfeasibleError(f"beam exhausted at slice {t}")
        cands.sort(key=lambda x: x[:3])  # stable: parent order, then core id
        seen = set()
        beams = []
        for *_, s, used in cands:
            row = min(s.t, s.placement.shape[0] - 1)
            key = (s.t, s.cursor, s.placement[row].tobytes(), s.loc_prev.tobytes())
            if key in seen:
                continue
            seen.add(key)
            beams.append((s, used))
            if len(beams) == width:
                break
    return beams[0][0]


def metropolis_accept(delta: float, temperature: float, u: float) -> bool:
    if delta <= 0:
        return True
    if temperature <= 0:
        return False
    return u < math.exp(-delta / temperature)


class _Annealer:
    """Move/undo bookkeeping over plain lists; numpy scalar access dominates otherwise."""

    def __init__(self, inst: AllocationInstance, placement: np.ndarray):
        self.inst = inst
        T, Q = placement.shape
        self.T = T
        self.P = placement.tolist()
        self.D = inst.arch.distance.tolist()
        self.cap = list(inst.arch.capacity)
        self.C = inst.num_cores
        self.usage = [[0] * self.C for _ in range(T)]
        for t in range(T):
            for q in range(Q):
                if self.P[t][q] >= 0 and not inst.reset_indicators[t, q]:
                    self.usage[t][self.P[t][q]] += 1
        # a decision cell (t, q) carries the qubit's core through the idle slices after it
        self.span_end = [[-1] * Q for _ in range(T)]
        for q in range(Q):
            end = -1
            for t in range(T - 1, -1, -1):
                if not inst.live[t, q]:
                    end = -1
                    continue
                if end < 0:
                    end = t
                if inst.decide[t, q]:
                    self.span_end[t][q] = end
                    end = t - 1
        self.cells = [(int(t), int(q)) for t, q in np.argwhere(inst.decide)]
        self.groups = [{q: tuple(g) for q, g in grp.items()} for grp in inst.groups]
        self.orders = [list(o) for o in inst.orders]

    def _group(self, t: int, q: int) -> tuple[int, ...]:
        return self.groups[t].get(q, (q,))

    def propose(self, u: tuple[float, float, float, float]) -> list[tuple[int, int, int, int]] | None:
        """Relocate one gate group (with its idle tail), or swap two groups, at one slice.

        ``u`` holds four uniforms in [0, 1) that drive every random choice.
        """
        if self.C < 2:
            return None
        P = self.P
        t, q = self.cells[int(u[0] * len(self.cells))]
        g = self._group(t, q)
        a = P[t][g[0]]
        b = int(u[1] * (self.C - 1))
        b += b >= a
        moves = [(m, t, self.span_end[t][m], b) for m in g]
        if u[2] < 0.5:
            on_b = [r for r in self.orders[t] if P[t][r] == b]
            if on_b:
                r = on_b[int(u[3] * len(on_b))]
                moves += [(m, t, self.span_end[t][m], a) for m in self._group(t, r)]
        return moves

    def delta(self, moves) -> float:
        P, D, T = self.P, self.D, self.T
        d = 0.0
        for m, t0, t1, c in moves:
            old = P[t0][m]
            before = P[t0 - 1][m] if t0 > 0 else -1
            after = P[t1 + 1][m] if t1 + 1 < T else -1
            if before >= 0:
                d += D[before][c] - D[before][old]
            if after >= 0:
                d += D[c][after] - D[old][after]
        return d

    def apply(self, moves) -> bool:
        """Apply if capacity allows; returns False (and leaves state unchanged) otherwise."""
        P, U, cap = self.P, self.usage, self.cap
        olds = [P[t0][m] for m, t0, _, _ in moves]
        for (m, t0, t1, c), old in zip(moves, olds):
            for s in range(t0, t1 + 1):
                U[s][old] -= 1
                U[s][c] += 1
        if all(U[s][c] <= cap[c] for m, t0, t1, c in moves for s in range(t0, t1 + 1)):
            for m, t0, t1, c in moves:
                for s in range(t0, t1 + 1):
                    P[s][m] = c
            return True
        for (m, t0, t1, c), old in zip(moves, olds):
            for s in range(t0, t1 + 1):
                U[s][c] -= 1
                U[s][old] += 1
        return False


def anneal(inst: AllocationInstance, start: np.ndarray, schedule, rng: np.random.Generator) -> np.ndarray:
    t_start, t_end, steps = schedule
    a = _Annealer(inst, start)
    if not a.cells:
        return start.copy()
    cost = env.count_transfers(start, inst.arch)[1]
    best, best_cost = start.copy(), cost
    ratio = t_end / t_start
    draws = rng.random((steps, 5)).tolist()
    for k in range(steps):
        temp = t_start * ratio ** (k / max(1, steps - 1))
        u = draws[k]
        moves = a.propose(u)
        if moves is None:
            continue
        d = a.delta(moves)
        if not metropolis_accept(d, temp, u[4]):
            continue
        if a.apply(moves):
            cost += d
            if cost < best_cost - 1e-12:
                best, best_cost = np.array(a.P, dtype=start.dtype), cost
    return best


def _solution(placement: np.ndarray, inst: AllocationInstance) -> AllocationSolution:
    n, w = env.count_transfers(placement, inst.arch, inst)
    return AllocationSolution(placement.copy(), n, w, inst.num_cores)


def _anneal_start(inst: AllocationInstance, rng: np.random.Generator, diversify: bool) -> np.ndarray:
    """Greedy seed for the first run; later restarts try a random rollout to reach other basins."""
    if diversify:
        try:
            return random_rollout(inst, rng).placement
        except InfeasibleError:
            pass
    try:
        return greedy(inst).placement
    except InfeasibleError:
        return beam_search(inst, max(8, inst.num_cores)).placement


def allocate(inst: AllocationInstance, cfg: PolicyConfig | None = None, params=None) -> AllocationSolution:
    cfg = cfg or PolicyConfig()
    if cfg.kind == "greedy":
        return env.finish(greedy(inst), inst)
    if cfg.kind == "beam":
        return env.finish(beam_search(inst, cfg.beam_width), inst)

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)]
    best: AllocationSolution | None = None
    errors = []
    for i, rng in enumerate(rngs):
        try:
            if cfg.kind == "random":
                sol = env.finish(random_rollout(inst, rng), inst)
            elif cfg.kind == "learned":
                from .learned import LearnedPolicyParams, sample_rollout
                sol = env.finish(sample_rollout(inst, params or LearnedPolicyParams.zeros(), rng), inst)
            else:
                sol = _solution(anneal(inst, _anneal_start(inst, rng, i > 0), cfg.anneal_schedule, rng), inst)
        except InfeasibleError as exc:
            errors.append(str(exc))
            continue
        if best is None or sol.weighted_cost < best.weighted_cost:
            best = sol
    if best is None:
        raise InfeasibleError(f"all {cfg.restarts} runs failed; last: {errors[-1]}")
    return best

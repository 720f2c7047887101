import math

import numpy as np
import pytest

from modmap import env
from modmap.architecture import from_edges, make_grid
from modmap.circuit import make_circuit, slice_circuit
from modmap.env import InfeasibleError, build_instance, violations
from modmap.policies import KINDS, PolicyConfig, allocate, beam_search, greedy, metropolis_accept, rollout
from modmap.qasm import load_qasm
from modmap.reuse import optimize_qubit_reuse

from conftest import FIXTURES, exhaustive_optimum, random_instance, tiny_instance


def _legal(sol, inst):
    assert violations(sol.placement, inst) == []
    assert env.count_transfers(sol.placement, inst.arch, inst) == (sol.transfers, sol.weighted_cost)


def test_xor5_greedy_zero_transfers():
    c = optimize_qubit_reuse(load_qasm(FIXTURES / "xor5_254.qasm")).circuit
    inst = build_instance(slice_circuit(c), make_grid(2, 5, 10))
    sol = allocate(inst, PolicyConfig("greedy"))
    _legal(sol, inst)
    assert sol.transfers == 0


@pytest.mark.parametrize("kind", KINDS)
def test_single_core_means_no_transfers(kind):
    rng = np.random.default_rng(1)
    for _ in range(5):
        inst = random_instance(rng)
        one = make_grid(1, 1, max(inst.num_qubits, 1))
        inst = build_instance(inst.sliced, one)
        sol = allocate(inst, PolicyConfig(kind, seed=3))
        _legal(sol, inst)
        assert sol.transfers == 0


def test_tiny_instance_beam_equals_exhaustive():
    # 4 qubits, 2 cores of capacity 2, 4 slices, 3 CX
    c = make_circuit(4, [("cx", 0, 1), ("cx", 2, 3), ("cx", 0, 2), ("h", 1), ("h", 0), ("h", 0)])
    s = slice_circuit(c)
    assert s.depth == 4 and c.two_qubit_count == 3
    arch = make_grid(1, 2, 2)
    inst = build_instance(s, arch)
    opt = exhaustive_optimum(s, arch)
    assert opt == 1.0
    sol = allocate(inst, PolicyConfig("beam", beam_width=8))
    _legal(sol, inst)
    assert sol.weighted_cost == opt


def test_beam_matches_exhaustive_on_random_tiny():
    rng = np.random.default_rng(77)
    for _ in range(30):
        inst = tiny_instance(rng)
        sol = allocate(inst, PolicyConfig("beam", beam_width=inst.num_cores * inst.num_qubits))
        _legal(sol, inst)
        assert sol.weighted_cost == exhaustive_optimum(inst.sliced, inst.arch)


def test_greedy_choice_prefers_near_then_empty_then_low_id():
    # qubit 0 sits on core 1 of a path; both neighbours are distance 1, core 2 is emptier
    c = make_circuit(3, [("h", 0), ("h", 1), ("h", 0)])
    arch = from_edges([2, 2, 2], [(0, 1), (1, 2)])
    inst = build_instance(slice_circuit(c), arch)
    s = env.reset(inst)
    assert greedy(inst).placement[0].tolist() == [0, 1, -1]
    # force a different start and check tie-breaking one step at a time
    env.apply(s, inst, 1)
    env.apply(s, inst, 1)
    assert s.t == 1
    from modmap.policies import greedy_choice
    assert greedy_choice(s, inst, np.array([True, True, True])) == 1
    assert greedy_choice(s, inst, np.array([True, False, True])) == 0


@pytest.mark.parametrize("kind", ["greedy", "beam"])
def test_deterministic_solvers(kind):
    rng = np.random.default_rng(5)
    for _ in range(10):
        inst = random_instance(rng)
        a = allocate(inst, PolicyConfig(kind, seed=1))
        b = allocate(inst, PolicyConfig(kind, seed=99))
        assert np.array_equal(a.placement, b.placement)


@pytest.mark.parametrize("kind", ["random", "anneal", "learned"])
def test_seeded_solvers_reproducible(kind):
    rng = np.random.default_rng(6)
    for _ in range(5):
        inst = random_instance(rng)
        a = allocate(inst, PolicyConfig(kind, seed=12, restarts=2, anneal_schedule=(2.0, 0.02, 300)))
        b = allocate(inst, PolicyConfig(kind, seed=12, restarts=2, anneal_schedule=(2.0, 0.02, 300)))
        assert np.array_equal(a.placement, b.placement)
        _legal(a, inst)


def test_anneal_never_worse_than_greedy_and_stays_legal():
    rng = np.random.default_rng(8)
    for i in range(20):
        inst = random_instance(rng)
        try:
            g = allocate(inst, PolicyConfig("greedy"))
        except InfeasibleError:
            continue
        a = allocate(inst, PolicyConfig("anneal", seed=i, anneal_schedule=(2.0, 0.02, 500)))
        _legal(a, inst)
        assert a.weighted_cost <= g.weighted_cost


def test_metropolis_rule():
    assert metropolis_accept(-1.0, 0.0, 0.99)
    assert metropolis_accept(0.0, 1.0, 0.99)
    assert not metropolis_accept(1.0, 0.0, 0.0)
    assert metropolis_accept(1.0, 1.0, math.exp(-1) - 1e-9)
    assert not metropolis_accept(1.0, 1.0, math.exp(-1) + 1e-9)
    probs = [math.exp(-1.0 / t) for t in (1.0, 0.1, 0.01, 1e-4)]
    assert probs == sorted(probs, reverse=True) and probs[-1] == 0.0
    # near-zero temperature rejects every worsening move
    assert not any(metropolis_accept(0.5, 1e-6, u) for u in np.linspace(1e-12, 1, 50))


def test_beam_finds_zero_when_one_core_suffices():
    rng = np.random.default_rng(10)
    checked = 0
    while checked < 40:
        inst = random_instance(rng)
        peak = int(inst.live.sum(axis=1).max()) if inst.num_slices else 0
        if peak > max(inst.arch.capacity):
            continue
        sol = allocate(inst, PolicyConfig("beam", beam_width=inst.num_cores))
        assert sol.transfers == 0
        checked += 1


def test_policies_only_take_masked_actions():
    rng = np.random.default_rng(13)
    for _ in range(50):
        inst = random_instance(rng)

        def choose(state, mask):
            c = int(rng.choice(np.flatnonzero(mask)))
            assert env.action_mask(state, inst)[c]
            return c

        try:
            state = rollout(inst, choose)
        except InfeasibleError:
            continue
        assert violations(state.placement, inst) == []


def test_infeasible_after_all_restarts():
    # a three-qubit gate can never fit on capacity-2 cores
    c = make_circuit(3, [("ccx", 0, 1, 2)])
    with pytest.raises(InfeasibleError):
        build_instance(slice_circuit(c), make_grid(1, 3, 2))


def test_config_validation():
    with pytest.raises(ValueError):
        PolicyConfig("beam", beam_width=0)
    with pytest.raises(ValueError):
        PolicyConfig("anneal", anneal_schedule=(0.1, 1.0, 10))
    with pytest.raises(ValueError):
        PolicyConfig("nope")

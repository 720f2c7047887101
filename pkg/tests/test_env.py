import json

import numpy as np
import pytest

from modmap import env
from modmap.architecture import from_edges, make_grid
from modmap.circuit import make_circuit, slice_circuit
from modmap.env import (IllegalActionError, InfeasibleError, action_mask, build_instance, count_transfers,
                        current_qubit, processing_order, solution_from_json, step, violations)
from modmap.policies import InfeasibleError as PolicyInfeasible
from modmap.policies import greedy, random_rollout
from modmap.reuse import optimize_qubit_reuse
from modmap.qasm import load_qasm

from conftest import FIXTURES, bv5, bv_shaped, random_instance


def eq1_reward(placement, D, C):
    """-sum_t sum_q sum_c sum_c' x[t,q,c] x[t+1,q,c'] D[c,c'] from the one-hot tensor."""
    T, Q = placement.shape
    x = np.zeros((T, Q, C), dtype=int)
    for t in range(T):
        for q in range(Q):
            if placement[t, q] >= 0:
                x[t, q, placement[t, q]] = 1
    total = 0.0
    for t in range(T - 1):
        for q in range(Q):
            for c in range(C):
                for c2 in range(C):
                    total += x[t, q, c] * x[t + 1, q, c2] * D[c, c2]
    return -total


def brute_transfers(placement, D):
    n, w = 0, 0.0
    T, Q = placement.shape
    for t in range(T - 1):
        for q in range(Q):
            a, b = placement[t, q], placement[t + 1, q]
            if a >= 0 and b >= 0 and a != b:
                n += 1
                w += D[a, b]
    return n, w


def test_bv5_indicator_turns_on_after_last_cx():
    inst = build_instance(slice_circuit(bv5()), make_grid(1, 2, 4))
    # qubit 0: CX in slice 1, H in slice 2
    assert inst.reset_indicators[:, 0].tolist() == [0, 0, 0, 1, 1, 1]
    assert greedy(inst).done


def test_pigeonhole_infeasible():
    c = make_circuit(11, [("h", q) for q in range(11)])
    with pytest.raises(InfeasibleError):
        build_instance(slice_circuit(c), make_grid(2, 5, 1))


def test_reused_bv10_fits():
    c = optimize_qubit_reuse(load_qasm(FIXTURES / "bv_n10.qasm")).circuit
    assert c.num_qubits == 2
    inst = build_instance(slice_circuit(c), make_grid(2, 5, 10))
    assert inst.num_qubits == 2


def test_indicators_monotone_and_match_lifetimes():
    rng = np.random.default_rng(0)
    for _ in range(50):
        inst = random_instance(rng, reuse=True)
        r = inst.reset_indicators
        assert (np.diff(r, axis=0) >= 0).all()
        T = inst.num_slices
        for q in range(inst.num_qubits):
            last = inst.last_idx[q]
            want = [int(last >= 0 and last < t) for t in range(T)]
            assert r[:, q].tolist() == want


def test_processing_order_examples():
    inst = build_instance(slice_circuit(make_circuit(4, [("cx", 2, 3), ("h", 0)])), make_grid(1, 2, 4))
    assert processing_order(inst, 0) == (2, 3, 0)
    inst = build_instance(slice_circuit(make_circuit(5, [("cx", 4, 1), ("cx", 0, 3)])), make_grid(1, 2, 4))
    assert processing_order(inst, 0) == (0, 1, 3, 4)


def test_processing_order_later_slices_skip_idle():
    # slice 1 holds only H(0); qubit 1 is live until slice 2 but idle in slice 1
    inst = build_instance(slice_circuit(make_circuit(2, [("cx", 0, 1), ("h", 0), ("h", 0), ("x", 1), ("x", 1)])),
                          make_grid(1, 2, 4))
    assert processing_order(inst, 1) == (0, 1)
    c = make_circuit(3, [("cx", 0, 1), ("h", 2), ("h", 0), ("cx", 1, 2)])
    inst = build_instance(slice_circuit(c), make_grid(1, 2, 4))
    assert processing_order(inst, 1) == (1, 2, 0)


def test_processing_order_counts_multi_qubit_ops():
    c = make_circuit(5, [("ccx", 3, 4, 0), ("h", 1), ("cx", 2, 1), ("x", 2)])
    s = slice_circuit(c)
    inst = build_instance(s, make_grid(1, 2, 5))
    for t, sl in enumerate(s.slices):
        counts = {q: sum(1 for op in sl if q in op.qubits and len(op.qubits) > 1) for op in sl for q in op.qubits}
        want = sorted(counts, key=lambda q: (-counts[q], q))
        got = [q for q in processing_order(inst, t) if q in counts]
        assert got == want


def test_empty_slice_order():
    inst = build_instance(slice_circuit(make_circuit(2, [])), make_grid(1, 1, 2))
    assert inst.num_slices == 0
    assert env.reset(inst).done


def _two_slice_inst():
    c = make_circuit(4, [("cx", 0, 1), ("cx", 2, 3), ("cx", 0, 2), ("h", 1), ("h", 3)])
    return build_instance(slice_circuit(c), from_edges([2, 2, 2, 2], [(0, 1), (1, 2), (2, 3)]))


def test_mask_fresh_slice_all_true():
    inst = build_instance(slice_circuit(make_circuit(2, [("h", 0), ("h", 1)])), make_grid(1, 3, 2))
    assert action_mask(env.reset(inst), inst).all()


def test_mask_friend_pins_core():
    inst = build_instance(slice_circuit(make_circuit(2, [("cx", 0, 1)])), make_grid(1, 4, 2))
    s = env.reset(inst)
    env.apply(s, inst, 3)
    assert action_mask(s, inst).tolist() == [False, False, False, True]


def test_mask_full_core_is_invalid():
    inst = build_instance(slice_circuit(make_circuit(3, [("h", 0), ("h", 1), ("h", 2)])), make_grid(1, 2, 2))
    s = env.reset(inst)
    env.apply(s, inst, 0)
    env.apply(s, inst, 0)
    assert s.usage[0, 0] == 2
    assert action_mask(s, inst).tolist() == [False, True]


def test_mask_reserves_partner_seat():
    # CX(0,1) and CX(2,3) on two cores of capacity 3: once 0 sits on core 0, qubit 2's pair no longer fits there
    inst = build_instance(slice_circuit(make_circuit(4, [("cx", 0, 1), ("cx", 2, 3)])), make_grid(1, 2, 3))
    s = env.reset(inst)
    assert current_qubit(s, inst) == 0
    env.apply(s, inst, 0)
    assert current_qubit(s, inst) == 1
    env.apply(s, inst, 0)
    assert action_mask(s, inst).tolist() == [False, True]


def test_finished_qubit_frees_seat():
    # qubit 0 ends in slice 0 and drops out of the live set
    c = make_circuit(3, [("cx", 0, 1), ("h", 1), ("cx", 1, 2)])
    inst = build_instance(slice_circuit(c), make_grid(1, 2, 2))
    assert inst.reset_indicators[1, 0] == 1
    assert not inst.live[1, 0]


def test_step_rewards():
    c = make_circuit(1, [("h", 0), ("h", 0)])
    inst = build_instance(slice_circuit(c), make_grid(1, 2, 1))
    s0 = env.reset(inst)
    s1, out = step(s0, inst, 0, 0)
    assert out.reward_delta == 0 and not out.done
    s2, out = step(s1, inst, 0, 1)
    assert out.reward_delta == -1 and out.done
    s2b, out = step(s1, inst, 0, 0)
    assert out.reward_delta == 0
    assert s0.t == 0 and s0.placement[0, 0] == -1  # step is pure


def test_step_rejects_masked_and_out_of_turn():
    inst = build_instance(slice_circuit(make_circuit(2, [("cx", 0, 1)])), make_grid(1, 2, 2))
    s = env.reset(inst)
    with pytest.raises(IllegalActionError):
        step(s, inst, 1, 0)
    s, _ = step(s, inst, 0, 0)
    with pytest.raises(IllegalActionError):
        step(s, inst, 1, 1)
    with pytest.raises(IllegalActionError):
        step(s, inst, 1, 7)


def test_idle_live_qubit_inherits_core():
    # qubit 0 is idle in slice 1 while qubit 1 runs its second H
    c = make_circuit(2, [("h", 0), ("h", 1), ("h", 1), ("cx", 1, 0)])
    inst = build_instance(slice_circuit(c), make_grid(1, 3, 2))
    s = env.reset(inst)
    for core in (2, 1, 1, 2, 2):
        env.apply(s, inst, core)
    assert s.done
    assert s.placement[:, 0].tolist() == [2, 2, 2]
    assert s.reward == -1


def test_late_starting_qubit_gets_seat_in_first_slice():
    c = make_circuit(2, [("h", 0), ("h", 0), ("cx", 0, 1)])
    inst = build_instance(slice_circuit(c), make_grid(1, 2, 2))
    assert processing_order(inst, 0) == (0, 1)
    assert processing_order(inst, 1) == (0,)
    s = env.reset(inst)
    env.apply(s, inst, 0)
    env.apply(s, inst, 1)
    assert s.placement[0].tolist() == [0, 1]
    assert s.placement[1].tolist() == [-1, 1]  # inherited ahead of the cursor


def test_count_transfers_examples():
    path = from_edges([3, 3, 3], [(0, 1), (1, 2)])
    assert count_transfers(np.zeros((4, 3), dtype=int), path) == (0, 0.0)
    assert count_transfers(np.array([[0], [1], [0]]), path) == (2, 2.0)
    assert count_transfers(np.array([[0], [2]]), path) == (1, 2.0)


def test_count_transfers_matches_brute_scan():
    rng = np.random.default_rng(3)
    a = make_grid(2, 3, 4)
    for _ in range(200):
        P = rng.integers(-1, a.num_cores, size=(int(rng.integers(1, 8)), int(rng.integers(1, 6))))
        assert count_transfers(P, a) == brute_transfers(P, a.distance)


def test_count_transfers_rejects_incomplete():
    inst = build_instance(slice_circuit(make_circuit(2, [("cx", 0, 1), ("h", 0)])), make_grid(1, 2, 2))
    P = greedy(inst).placement.copy()
    P[1, 0] = -1
    with pytest.raises(ValueError):
        count_transfers(P, inst.arch, inst)


def test_episode_reward_matches_eq1_on_200_instances():
    rng = np.random.default_rng(42)
    done = 0
    while done < 200:
        inst = random_instance(rng)
        try:
            s = random_rollout(inst, rng)
        except PolicyInfeasible:
            continue
        sol = env.finish(s, inst)
        assert s.reward == eq1_reward(s.placement, inst.arch.distance, inst.num_cores)
        assert s.reward == -sol.weighted_cost
        done += 1


def test_usage_excludes_finished_qubits():
    rng = np.random.default_rng(9)
    for _ in range(100):
        inst = random_instance(rng, reuse=True)
        try:
            s = random_rollout(inst, rng)
        except PolicyInfeasible:
            continue
        for t in range(inst.num_slices):
            for c in range(inst.num_cores):
                want = sum(1 for q in range(inst.num_qubits)
                           if s.placement[t, q] == c and not inst.reset_indicators[t, q])
                assert s.usage[t, c] == want


def test_single_core_witness():
    rng = np.random.default_rng(4)
    for _ in range(50):
        inst = random_instance(rng)
        peak = int(inst.live.sum(axis=1).max()) if inst.num_slices else 0
        if peak > max(inst.arch.capacity):
            continue
        best = int(np.argmax(inst.arch.capacity))
        P = np.where(inst.live, best, -1)
        assert violations(P, inst) == []
        assert count_transfers(P, inst.arch, inst) == (0, 0.0)


def test_violations_detects_problems():
    inst = build_instance(slice_circuit(make_circuit(3, [("cx", 0, 1), ("h", 2)])), make_grid(1, 2, 2))
    assert any("split" in v for v in violations(np.array([[0, 1, 1]]), inst))
    assert any("holds 3" in v for v in violations(np.array([[0, 0, 0]]), inst))
    assert any("unplaced" in v for v in violations(np.array([[0, 0, -1]]), inst))


def test_solution_json_roundtrip():
    inst = build_instance(slice_circuit(bv5()), make_grid(1, 2, 4))
    sol = env.finish(greedy(inst), inst)
    doc = json.loads(sol.dumps())
    assert set(doc) == {"slices", "qubits", "cores", "placement", "transfers", "weighted_cost"}
    back = solution_from_json(doc)
    assert np.array_equal(back.placement, sol.placement)
    assert back.transfers == sol.transfers
    assert sol.x.shape == (inst.num_slices, 5, 2)
    assert (sol.x.sum(axis=2) == inst.live).all()


def test_release_off_keeps_seats():
    inst = build_instance(slice_circuit(bv_shaped(3)), make_grid(1, 2, 4), release_finished=False)
    assert inst.live.all()
    assert not inst.reset_indicators.any()

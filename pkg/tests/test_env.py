import math

import numpy as np
import pytest

from sliceoff.config import RegionScenario, Scenario, default_catalogs, default_radio
from sliceoff.core import EconomicParams, SliceDecision
from sliceoff.env import (
    ActionVector,
    EnvError,
    OffloadEnv,
    RegionSnapshot,
    decode_action,
    snapshot_features,
)

R1 = default_catalogs()[0]


def make_scenario(h=2, t=2, data_kb=(200.0, 200.0), density=(500.0, 500.0),
                  priorities=(2,), distance=(1000.0, 1000.0), state_slots=10):
    region = RegionScenario("R1", R1, data_kb_range=data_kb, density_range=density,
                            distance_range=distance, priorities=priorities)
    econ = EconomicParams(reward_per_task=1.0, max_delay_s=1.0,
                          long_slots=h, short_slots_per_long=t)
    return Scenario(regions=(region,), radio=default_radio(), econ=econ,
                    n_max=10, state_slots=state_slots)


def full_bw_action(scenario, user=0):
    frac = np.zeros(scenario.state_slots)
    frac[user] = 1.0
    return ActionVector(frac, np.zeros(scenario.state_slots))


def _decision(bandwidth_idx=15, vm_idx=5):
    return {"R1": SliceDecision.from_indices("R1", bandwidth_idx, vm_idx, R1)}


def make_env(scenario, counts, seed=0, **kw):
    traffic = np.asarray(counts).reshape(1, -1)
    return OffloadEnv(scenario, traffic, _decision(), seed=seed, **kw)


def test_reset_deterministic():
    sc = make_scenario(data_kb=(100.0, 300.0), density=(400.0, 600.0),
                       priorities=(1, 2, 3), distance=(1.0, 2000.0))
    a = make_env(sc, [3, 2, 4, 1], seed=9).reset()
    b = make_env(sc, [3, 2, 4, 1], seed=9).reset()
    np.testing.assert_array_equal(a.uplink_terms, b.uplink_terms)
    np.testing.assert_array_equal(a.compute_terms, b.compute_terms)
    np.testing.assert_array_equal(a.priorities, b.priorities)


def test_snapshot_padding():
    sc = make_scenario()
    snap = make_env(sc, [2, 2, 2, 2]).reset()
    assert snap.user_count == 2
    assert np.all(snap.uplink_terms[2:] == 0)
    assert np.all(snap.priorities[2:] == 0)
    assert snap.uplink_terms[0] == pytest.approx(1.6e6 * 1000.0 / 1.0)
    assert snap.compute_terms[1] == pytest.approx(1.6e6 * 500.0 / 1.0)


def test_traffic_above_padding_rejected():
    sc = make_scenario(state_slots=10)
    with pytest.raises(EnvError):
        make_env(sc, [11, 2, 2, 2])


def test_decode_action_vm_floor_and_clamp():
    snap = RegionSnapshot("R1", 16e6, 6, 2, np.zeros(10), np.zeros(10), np.zeros(10))
    act = ActionVector(np.full(10, 0.5), np.array([0.99, 1.0] + [0.0] * 8))
    _, vm_idx = decode_action(act, snap)
    assert vm_idx.tolist() == [5, 5]
    act2 = ActionVector(np.full(10, 0.5), np.array([0.16, 0.17] + [0.0] * 8))
    _, vm2 = decode_action(act2, snap)
    assert vm2.tolist() == [0, 1]


def test_decode_action_bandwidth_normalization():
    snap = RegionSnapshot("R1", 10e6, 6, 2, np.zeros(10), np.zeros(10), np.zeros(10))
    bw, _ = decode_action(ActionVector(np.array([0.8, 0.8] + [0.0] * 8), np.zeros(10)), snap)
    assert bw.tolist() == pytest.approx([5e6, 5e6])
    bw2, _ = decode_action(ActionVector(np.array([0.3, 0.2] + [0.0] * 8), np.zeros(10)), snap)
    assert bw2.tolist() == pytest.approx([3e6, 2e6])


def test_step_reference_chain():
    sc = make_scenario()
    envr = make_env(sc, [1, 1, 1, 1], seed=4)
    out = envr.step(full_bw_action(sc))
    [task] = out.info.tasks
    se = math.log2(1.0 + 10.0)
    assert task.upload_s == pytest.approx(1.6e6 / (16e6 * se), rel=1e-9)
    assert task.upload_s == pytest.approx(0.0289, abs=2e-4)
    assert task.queue_s == 0.0
    assert task.exec_s == pytest.approx(0.4, rel=1e-12)
    assert task.total_s == pytest.approx(task.upload_s + 0.4, rel=1e-12)
    assert out.reward == 2.0  # priority 2, deadline met


def test_step_starved_user_gets_nothing():
    sc = make_scenario()
    envr = make_env(sc, [1, 1, 1, 1])
    act = ActionVector(np.zeros(10), np.zeros(10))
    out = envr.step(act)
    [task] = out.info.tasks
    assert task.upload_s == math.inf and task.total_s == math.inf
    assert out.reward == 0.0
    assert out.info.n_violations == 1
    assert out.info.used_bandwidth_seconds == 0.0


def test_two_users_same_vm_queue():
    sc = make_scenario()
    envr = make_env(sc, [2, 1, 1, 1])
    act = ActionVector(np.array([0.5, 0.5] + [0.0] * 8), np.zeros(10))  # both on VM 0
    out = envr.step(act)
    first, second = out.info.tasks
    assert first.queue_s == 0.0
    assert second.queue_s == pytest.approx(first.exec_s, rel=1e-12)


def test_reward_matches_revenue_recomputation():
    sc = make_scenario(data_kb=(100.0, 300.0), density=(400.0, 600.0),
                       priorities=(1, 2, 3), distance=(1.0, 2000.0), h=3, t=2)
    envr = make_env(sc, [3, 5, 2, 4, 6, 3], seed=11)
    rng = np.random.default_rng(0)
    while not envr.done:
        act = ActionVector(rng.random(10), rng.random(10))
        out = envr.step(act)
        recomputed = sum(t.priority * 1.0 for t in out.info.tasks
                         if t.total_s <= sc.econ.max_delay_s)
        assert out.reward == pytest.approx(recomputed, rel=1e-12)


def test_c4_and_c5_always_hold():
    sc = make_scenario(data_kb=(100.0, 300.0), density=(400.0, 600.0),
                       priorities=(1, 2, 3), distance=(1.0, 2000.0), h=3, t=2)
    envr = make_env(sc, [3, 5, 2, 4, 6, 3], seed=2)
    rng = np.random.default_rng(8)
    while not envr.done:
        act = ActionVector(rng.random(10) * 1.0, rng.random(10))
        out = envr.step(act)
        used = sum(t.bandwidth_hz for t in out.info.tasks)
        assert used <= 16e6 + 1e-9
        for t in out.info.tasks:
            assert 0 <= t.vm_index <= 5


def test_episode_determinism():
    sc = make_scenario(data_kb=(100.0, 300.0), density=(400.0, 600.0),
                       priorities=(1, 2, 3), distance=(1.0, 2000.0))
    actions = [ActionVector(np.random.default_rng(k).random(10),
                            np.random.default_rng(k + 100).random(10)) for k in range(4)]
    rewards = []
    for _ in range(2):
        envr = make_env(sc, [3, 2, 4, 1], seed=5)
        rewards.append([envr.step(a).reward for a in actions])
    assert rewards[0] == rewards[1]


def test_vm_seconds_conservation():
    sc = make_scenario(data_kb=(100.0, 300.0), density=(400.0, 600.0),
                       priorities=(1, 2, 3), distance=(1.0, 2000.0))
    envr = make_env(sc, [10, 10, 10, 10], seed=3)
    rng = np.random.default_rng(1)
    while not envr.done:
        out = envr.step(ActionVector(rng.random(10), rng.random(10)))
        assert out.info.used_vm_seconds <= 6 * sc.slot_duration_s


def test_step_after_done_raises():
    sc = make_scenario()
    envr = make_env(sc, [1, 1, 1, 1])
    for _ in range(4):
        out = envr.step(full_bw_action(sc))
    assert out.done and out.snapshot is None
    with pytest.raises(EnvError):
        envr.step(full_bw_action(sc))


def test_slice_change_only_at_boundaries():
    sc = make_scenario()  # h=2, t=2
    envr = make_env(sc, [1, 1, 1, 1])
    assert envr.at_long_slot_boundary()
    envr.apply_slice_change(_decision())          # re-applying at h=0 is legal
    envr.step(full_bw_action(sc))
    assert not envr.at_long_slot_boundary()       # mid long slot
    with pytest.raises(EnvError):
        envr.apply_slice_change(_decision())
    envr.step(full_bw_action(sc))
    assert envr.at_long_slot_boundary()           # start of second long slot
    envr.apply_slice_change(_decision(vm_idx=2))
    assert envr._rented["R1"] == (16e6, 3)


def test_backlog_redistribution_round_robin():
    sc = make_scenario()
    envr = make_env(sc, [1, 1, 1, 1])
    envr.step(full_bw_action(sc))
    envr.step(full_bw_action(sc))
    assert envr.at_long_slot_boundary()
    # plant a known backlog across the 6 rented VMs (arrival order = seq)
    envr._queues["R1"] = [[(k, 100.0)] for k in range(6)]
    envr.apply_slice_change(_decision(vm_idx=2))  # 6 -> 3 VMs
    assert [len(q) for q in envr._queues["R1"]] == [2, 2, 2]
    assert [e[0] for e in envr._queues["R1"][0]] == [0, 3]
    envr._queues["R1"] = [[(0, 50.0)], [(1, 60.0)], [(2, 70.0)]]
    envr.apply_slice_change(_decision(vm_idx=5))  # 3 -> 6 VMs
    assert [len(q) for q in envr._queues["R1"]] == [1, 1, 1, 0, 0, 0]


def test_same_decision_preserves_backlog():
    sc = make_scenario()
    envr = make_env(sc, [1, 1, 1, 1])
    envr.step(full_bw_action(sc))
    envr.step(full_bw_action(sc))
    envr._queues["R1"][2] = [(7, 123.0)]
    envr.apply_slice_change(_decision())
    assert envr._queues["R1"][2] == [(7, 123.0)]


def test_schedule_auto_applies():
    sc = make_scenario()
    schedule = [_decision(vm_idx=5), _decision(vm_idx=1)]
    envr = make_env(sc, [1, 1, 1, 1], schedule=schedule)
    envr.step(full_bw_action(sc))
    assert envr._rented["R1"] == (16e6, 6)
    envr.step(full_bw_action(sc))
    envr.step(full_bw_action(sc))  # crosses into long slot 1
    assert envr._rented["R1"] == (16e6, 2)


def test_feature_vector_layout():
    sc = make_scenario()
    snap = make_env(sc, [2, 2, 2, 2]).reset()
    feats = snapshot_features(snap, sc)
    assert feats.shape == (3 + 3 * 10,)
    assert feats[0] == pytest.approx(16e6 / 20e6)
    assert feats[1] == pytest.approx(6 / 16)
    assert feats[2] == pytest.approx(0.2)
    assert np.all(feats >= 0) and np.all(feats <= 1.0 + 1e-9)

"""Per-region, per-short-slot offloading environment.

One episode is one simulated day: long slots x short slots, with the regions
visited in fixed id order inside every short slot, each visit being one MDP
step under a shared policy. The step applies the physics chain (upload ->
VM queue wait -> execution), pays priority-weighted revenue for tasks that
meet the deadline, advances that region's VM backlog by one slot of
processing, and samples the region's next-slot tasks.

Slice decisions change only at long-slot boundaries, either through an
attached schedule or by an explicit apply_slice_change() call from the
driver; surviving VM backlog is redistributed round-robin in arrival order
over the new VM set rather than dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import core
from .config import BITS_PER_KB, Scenario
from .core import SliceDecision, TaskSpec, VmQueue


class EnvError(RuntimeError):
    pass


@dataclass
class RegionSnapshot:
    """State visible to the agent before acting in one region-slot."""

    region_id: str
    rented_bandwidth_hz: float
    rented_vm_count: int
    user_count: int
    uplink_terms: np.ndarray    # data_bits * distance / T_max, zero-padded
    compute_terms: np.ndarray   # data_bits * density / T_max, zero-padded
    priorities: np.ndarray      # zero-padded


@dataclass
class ActionVector:
    """Raw policy output in [0,1]^(2*slots): bandwidth shares and VM selectors."""

    bandwidth_fractions: np.ndarray
    vm_selectors: np.ndarray

    @classmethod
    def from_flat(cls, flat: np.ndarray) -> "ActionVector":
        flat = np.asarray(flat, dtype=float)
        half = flat.shape[-1] // 2
        return cls(flat[:half], flat[half:])

    def to_flat(self) -> np.ndarray:
        return np.concatenate([self.bandwidth_fractions, self.vm_selectors])


@dataclass
class TaskRecord:
    user_index: int
    data_bits: float
    density: float
    priority: int
    distance_m: float
    bandwidth_hz: float
    vm_index: int
    upload_s: float
    queue_s: float
    exec_s: float
    total_s: float
    revenue: float


@dataclass
class StepInfo:
    region_id: str
    long_slot: int
    short_slot: int
    tasks: list = field(default_factory=list)
    used_bandwidth_seconds: float = 0.0
    used_vm_seconds: float = 0.0
    n_violations: int = 0


@dataclass
class StepOutcome:
    reward: float
    snapshot: RegionSnapshot | None   # next state; None once the day is over
    info: StepInfo
    done: bool


def decode_action(action: ActionVector, snapshot: RegionSnapshot):
    """Map raw [0,1] outputs to feasible per-user allocations.

    Bandwidth shares of the active users are used as-is when they sum to <= 1
    and are divided by their sum otherwise, so the rented bandwidth is never
    exceeded. VM selectors map to floor(x * V), clamped into [0, V-1].
    """
    n = snapshot.user_count
    frac = np.clip(np.asarray(action.bandwidth_fractions[:n], dtype=float), 0.0, 1.0)
    total = frac.sum()
    if total > 1.0:
        frac = frac / total
    bandwidth = frac * snapshot.rented_bandwidth_hz
    sel = np.clip(np.asarray(action.vm_selectors[:n], dtype=float), 0.0, 1.0)
    vm_idx = np.minimum(np.floor(sel * snapshot.rented_vm_count).astype(int),
                        snapshot.rented_vm_count - 1)
    return bandwidth, vm_idx


@lru_cache(maxsize=8)
def _feature_scales(scenario: Scenario):
    max_bw = max(max(c.bandwidth_tiers_hz) for c in scenario.catalogs)
    max_vm = max(max(c.vm_tiers) for c in scenario.catalogs)
    d_max = max(r.data_kb_range[1] for r in scenario.regions) * BITS_PER_KB
    l_max = max(r.distance_range[1] for r in scenario.regions)
    eta_max = max(r.density_range[1] for r in scenario.regions)
    t_max = scenario.econ.max_delay_s
    return max_bw, max_vm, d_max * l_max / t_max, d_max * eta_max / t_max


def snapshot_features(snapshot: RegionSnapshot, scenario: Scenario) -> np.ndarray:
    """Fixed-scale normalization of a snapshot for network input."""
    max_bw, max_vm, up_scale, comp_scale = _feature_scales(scenario)
    out = np.empty(3 + 3 * scenario.state_slots)
    out[0] = snapshot.rented_bandwidth_hz / max_bw
    out[1] = snapshot.rented_vm_count / max_vm
    out[2] = snapshot.user_count / scenario.state_slots
    s = scenario.state_slots
    out[3:3 + s] = snapshot.uplink_terms / up_scale
    out[3 + s:3 + 2 * s] = snapshot.compute_terms / comp_scale
    out[3 + 2 * s:] = snapshot.priorities / 3.0
    return out


def feature_dim(scenario: Scenario) -> int:
    return 3 + 3 * scenario.state_slots


def action_dim(scenario: Scenario) -> int:
    return 2 * scenario.state_slots


class OffloadEnv:
    """One simulated day of offloading decisions across all regions."""

    def __init__(self, scenario: Scenario, traffic_counts: np.ndarray,
                 decisions: dict, seed: int, schedule: list | None = None):
        self.scenario = scenario
        self.traffic = np.asarray(traffic_counts, dtype=int)
        econ = scenario.econ
        self.n_regions = len(scenario.regions)
        self.n_slots = econ.long_slots * econ.short_slots_per_long
        if self.traffic.shape != (self.n_regions, self.n_slots):
            raise EnvError(f"traffic shape {self.traffic.shape} != "
                           f"({self.n_regions}, {self.n_slots})")
        if self.traffic.max() > scenario.state_slots:
            raise EnvError(f"traffic peak {self.traffic.max()} exceeds the "
                           f"{scenario.state_slots} padded user slots")
        if schedule is not None and len(schedule) != econ.long_slots:
            raise EnvError("schedule must cover every long slot")
        self._schedule = schedule
        self._initial = dict(schedule[0]) if schedule is not None else dict(decisions)
        self._seed = seed
        self._step_index = None
        self.reset()

    # --- lifecycle ---

    def reset(self) -> RegionSnapshot:
        self._rng = np.random.default_rng(self._seed)
        self._step_index = 0
        self._arrival_seq = 0
        self._rented = {}
        self._queues = {}
        self._tasks = [None] * self.n_regions
        for i, region in enumerate(self.scenario.regions):
            rid = region.region_id
            decision = self._initial[rid]
            bw, vm = core.rented_resources(decision, region.catalog)
            self._rented[rid] = (bw, int(vm))
            self._queues[rid] = [[] for _ in range(int(vm))]
        for i in range(self.n_regions):
            self._tasks[i] = self._sample_tasks(i, 0)
        return self._snapshot(0)

    @property
    def done(self) -> bool:
        return self._step_index >= self.n_slots * self.n_regions

    def current_snapshot(self) -> RegionSnapshot:
        """State of the region about to act (reflects any slice change)."""
        if self.done:
            raise EnvError("episode is finished")
        return self._snapshot(self._step_index % self.n_regions)

    @property
    def current_long_slot(self) -> int:
        slot = self._step_index // self.n_regions
        return slot // self.scenario.econ.short_slots_per_long

    def at_long_slot_boundary(self) -> bool:
        """True when the next step starts a long slot (first region, first short slot)."""
        if self.done:
            return False
        slot = self._step_index // self.n_regions
        return (self._step_index % self.n_regions == 0
                and slot % self.scenario.econ.short_slots_per_long == 0)

    # --- slicing ---

    def apply_slice_change(self, decisions: dict):
        """Swap rented resources; legal only at long-slot boundaries."""
        if not self.at_long_slot_boundary():
            raise EnvError("slice changes are only allowed at long-slot boundaries")
        for region in self.scenario.regions:
            rid = region.region_id
            decision = decisions[rid]
            bw, vm = core.rented_resources(decision, region.catalog)
            vm = int(vm)
            old_bw, old_vm = self._rented[rid]
            self._rented[rid] = (bw, vm)
            if vm == old_vm:
                continue
            backlog = sorted((entry for q in self._queues[rid] for entry in q),
                             key=lambda e: e[0])
            queues = [[] for _ in range(vm)]
            for k, entry in enumerate(backlog):
                queues[k % vm].append(entry)
            self._queues[rid] = queues

    # --- stepping ---

    def step(self, action: ActionVector) -> StepOutcome:
        if self.done:
            raise EnvError("episode is finished; call reset()")
        if self._schedule is not None and self.at_long_slot_boundary():
            self.apply_slice_change(self._schedule[self.current_long_slot])

        idx = self._step_index
        slot = idx // self.n_regions
        region_pos = idx % self.n_regions
        region = self.scenario.regions[region_pos]
        rid = region.region_id
        econ = self.scenario.econ
        f_edge = region.catalog.vm_freq_hz

        snapshot = self._snapshot(region_pos)
        bandwidth, vm_idx = decode_action(action, snapshot)
        tasks = self._tasks[region_pos]
        info = StepInfo(region_id=rid, long_slot=slot // econ.short_slots_per_long,
                        short_slot=slot % econ.short_slots_per_long)
        reward = 0.0
        for j, task in enumerate(tasks):
            rate = core.upload_rate(bandwidth[j], task.distance_m, self.scenario.radio)
            up = core.upload_time(task, rate)
            queue = self._queues[rid][vm_idx[j]]
            que = sum(c for _, c in queue) / f_edge
            self._arrival_seq += 1
            queue.append((self._arrival_seq, task.cycles))
            exe = core.exec_time(task, f_edge)
            total = core.total_time(up, que, exe)
            revenue = core.task_revenue(total, econ, task.priority)
            reward += revenue
            info.tasks.append(TaskRecord(
                user_index=j, data_bits=task.data_bits, density=task.density_cycles_per_bit,
                priority=task.priority, distance_m=task.distance_m,
                bandwidth_hz=bandwidth[j], vm_index=int(vm_idx[j]),
                upload_s=up, queue_s=que, exec_s=exe, total_s=total, revenue=revenue))
            if revenue == 0.0:
                info.n_violations += 1
            if bandwidth[j] > 0 and math.isfinite(up):
                info.used_bandwidth_seconds += bandwidth[j] * up
            info.used_vm_seconds += exe

        # one short slot of processing drains this region's backlog
        budget = f_edge * self.scenario.slot_duration_s
        for q in self._queues[rid]:
            vq = VmQueue([c for _, c in q])
            vq.drain(budget)
            kept = len(vq.pending_cycles)
            tail = q[len(q) - kept:] if kept else []
            if kept:
                tail[0] = (tail[0][0], vq.pending_cycles[0])
            q[:] = tail

        if slot + 1 < self.n_slots:
            self._tasks[region_pos] = self._sample_tasks(region_pos, slot + 1)
        else:
            self._tasks[region_pos] = []
        self._step_index += 1
        next_snapshot = None if self.done else self._snapshot(self._step_index % self.n_regions)
        return StepOutcome(reward=reward, snapshot=next_snapshot, info=info, done=self.done)

    # --- internals ---

    def _sample_tasks(self, region_pos: int, slot: int) -> list:
        region = self.scenario.regions[region_pos]
        n = int(self.traffic[region_pos, slot])
        tasks = []
        for _ in range(n):
            d_kb = self._rng.uniform(*region.data_kb_range)
            eta = self._rng.uniform(*region.density_range)
            rho = int(self._rng.choice(np.asarray(region.priorities)))
            dist = self._rng.uniform(*region.distance_range)
            tasks.append(TaskSpec(data_bits=d_kb * BITS_PER_KB,
                                  density_cycles_per_bit=eta,
                                  priority=rho, distance_m=dist))
        return tasks

    def _snapshot(self, region_pos: int) -> RegionSnapshot:
        region = self.scenario.regions[region_pos]
        rid = region.region_id
        bw, vm = self._rented[rid]
        tasks = self._tasks[region_pos]
        slots = self.scenario.state_slots
        uplink = np.zeros(slots)
        compute = np.zeros(slots)
        rho = np.zeros(slots)
        t_max = self.scenario.econ.max_delay_s
        for j, task in enumerate(tasks):
            uplink[j] = task.data_bits * task.distance_m / t_max
            compute[j] = task.data_bits * task.density_cycles_per_bit / t_max
            rho[j] = task.priority
        return RegionSnapshot(region_id=rid, rented_bandwidth_hz=bw, rented_vm_count=vm,
                              user_count=len(tasks), uplink_terms=uplink,
                              compute_terms=compute, priorities=rho)

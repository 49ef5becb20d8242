"""Domain types and closed-form communication/computation/economics primitives.

Everything in this module is a pure function of its inputs. Radio quantities
are stored in linear scale (conversions from dB/dBm happen once, at
construction), times in seconds, data in bits, money in $.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


def db_to_linear(db: float) -> float:
    """Convert a dB (or dBm) value to linear scale."""
    return 10.0 ** (db / 10.0)


def linear_to_db(linear: float) -> float:
    """Convert a linear value to dB; inverse of :func:`db_to_linear`."""
    if linear <= 0:
        raise ValueError(f"dB undefined for non-positive value {linear}")
    return 10.0 * math.log10(linear)


@dataclass(frozen=True)
class RadioParams:
    """Uplink channel parameters, all stored linear.

    gain_ref is the channel power gain at 1 m; the gain at distance l is
    gain_ref * l**(-path_loss_exp).
    """

    upload_power_mW: float
    noise_power_mW: float
    gain_ref: float
    path_loss_exp: float

    def __post_init__(self):
        if self.upload_power_mW <= 0 or self.noise_power_mW <= 0 or self.gain_ref <= 0:
            raise ValueError("radio parameters must be strictly positive")
        if self.path_loss_exp < 1:
            raise ValueError(f"path_loss_exp must be >= 1, got {self.path_loss_exp}")

    @classmethod
    def from_db(cls, upload_power_mW: float, noise_power_dBm: float,
                gain_ref_dB: float, path_loss_exp: float) -> "RadioParams":
        """Build from the usual dBm/dB figures (e.g. -110 dBm noise, -60 dB gain)."""
        return cls(
            upload_power_mW=upload_power_mW,
            noise_power_mW=db_to_linear(noise_power_dBm),
            gain_ref=db_to_linear(gain_ref_dB),
            path_loss_exp=path_loss_exp,
        )

    def snr(self, distance_m: float) -> float:
        """Received signal-to-noise ratio at the given user-BS distance."""
        if distance_m < 1:
            raise ValueError(f"distance must be >= 1 m, got {distance_m}")
        gain = self.gain_ref * distance_m ** (-self.path_loss_exp)
        return self.upload_power_mW * gain / self.noise_power_mW


@dataclass(frozen=True)
class TaskSpec:
    """One offloaded task: payload size, compute density, service priority,
    and the user's distance to the base station."""

    data_bits: float
    density_cycles_per_bit: float
    priority: int
    distance_m: float

    def __post_init__(self):
        if self.data_bits <= 0:
            raise ValueError("data_bits must be positive")
        if self.density_cycles_per_bit < 0:
            raise ValueError("density must be non-negative")
        if self.priority not in (1, 2, 3):
            raise ValueError(f"priority must be 1, 2 or 3, got {self.priority}")
        if self.distance_m < 1:
            raise ValueError("distance_m must be >= 1")

    @property
    def cycles(self) -> float:
        return self.data_bits * self.density_cycles_per_bit


@dataclass(frozen=True)
class SliceCatalog:
    """Purchasable slice tiers of one region: bandwidth options (Hz) with
    hourly prices, VM-count options with hourly prices, and the uniform
    per-VM clock frequency."""

    region_id: str
    bandwidth_tiers_hz: tuple
    bandwidth_costs: tuple
    vm_tiers: tuple
    vm_costs: tuple
    vm_freq_hz: float

    def __post_init__(self):
        object.__setattr__(self, "bandwidth_tiers_hz", tuple(float(b) for b in self.bandwidth_tiers_hz))
        object.__setattr__(self, "bandwidth_costs", tuple(float(c) for c in self.bandwidth_costs))
        object.__setattr__(self, "vm_tiers", tuple(int(v) for v in self.vm_tiers))
        object.__setattr__(self, "vm_costs", tuple(float(c) for c in self.vm_costs))
        for tiers, costs, label in (
            (self.bandwidth_tiers_hz, self.bandwidth_costs, "bandwidth"),
            (self.vm_tiers, self.vm_costs, "vm"),
        ):
            if len(tiers) != len(costs):
                raise ValueError(f"{label}: tier and cost lists must have equal length")
            if not tiers:
                raise ValueError(f"{label}: catalog must offer at least one tier")
            if any(b <= a for a, b in zip(tiers, tiers[1:])):
                raise ValueError(f"{label}: tiers must be strictly ascending")
            if any(c <= 0 for c in costs):
                raise ValueError(f"{label}: costs must be strictly positive")
        if self.vm_freq_hz <= 0:
            raise ValueError("vm_freq_hz must be positive")


def _check_one_hot(choice, n: int, label: str):
    if len(choice) != n:
        raise ValueError(f"{label}: choice length {len(choice)} != {n} tiers")
    if any(x not in (0, 1) for x in choice):
        raise ValueError(f"{label}: choice entries must be 0 or 1")
    if sum(choice) != 1:
        raise ValueError(f"{label}: exactly one tier must be selected, got {sum(choice)}")


@dataclass(frozen=True)
class SliceDecision:
    """One-hot renting choice per resource for one region."""

    region_id: str
    bandwidth_choice: tuple
    vm_choice: tuple

    def __post_init__(self):
        object.__setattr__(self, "bandwidth_choice", tuple(int(x) for x in self.bandwidth_choice))
        object.__setattr__(self, "vm_choice", tuple(int(x) for x in self.vm_choice))
        _check_one_hot(self.bandwidth_choice, len(self.bandwidth_choice), "bandwidth")
        _check_one_hot(self.vm_choice, len(self.vm_choice), "vm")

    @classmethod
    def from_indices(cls, region_id: str, bandwidth_idx: int, vm_idx: int,
                     catalog: SliceCatalog) -> "SliceDecision":
        bw = [0] * len(catalog.bandwidth_tiers_hz)
        vm = [0] * len(catalog.vm_tiers)
        bw[bandwidth_idx] = 1
        vm[vm_idx] = 1
        return cls(region_id, tuple(bw), tuple(vm))

    @property
    def bandwidth_index(self) -> int:
        return self.bandwidth_choice.index(1)

    @property
    def vm_index(self) -> int:
        return self.vm_choice.index(1)


@dataclass
class VmQueue:
    """FIFO backlog of one VM: remaining cycle counts of queued tasks."""

    pending_cycles: list = field(default_factory=list)

    def __post_init__(self):
        if any(c < 0 for c in self.pending_cycles):
            raise ValueError("pending cycle counts must be >= 0")

    def total_cycles(self) -> float:
        return sum(self.pending_cycles)

    def enqueue(self, cycles: float):
        if cycles < 0:
            raise ValueError("cycles must be >= 0")
        self.pending_cycles.append(cycles)

    def drain(self, cycles: float):
        """Process up to `cycles` cycles of backlog in FIFO order."""
        budget = cycles
        while self.pending_cycles and budget > 0:
            head = self.pending_cycles[0]
            if head <= budget:
                budget -= head
                self.pending_cycles.pop(0)
            else:
                self.pending_cycles[0] = head - budget
                budget = 0.0


@dataclass(frozen=True)
class EconomicParams:
    """Per-task reward, deadline, and the two-scale slot structure."""

    reward_per_task: float
    max_delay_s: float
    long_slots: int
    short_slots_per_long: int

    def __post_init__(self):
        if self.reward_per_task <= 0:
            raise ValueError("reward_per_task must be positive")
        if self.max_delay_s <= 0:
            raise ValueError("max_delay_s must be positive")
        if self.long_slots < 1 or self.short_slots_per_long < 1:
            raise ValueError("slot counts must be >= 1")


# --- communication / computation ---

def upload_rate(bandwidth_hz: float, distance_m: float, radio: RadioParams) -> float:
    """Shannon uplink rate in bit/s for the allocated bandwidth; 0 at zero bandwidth."""
    if bandwidth_hz < 0:
        raise ValueError(f"bandwidth must be >= 0, got {bandwidth_hz}")
    if bandwidth_hz == 0:
        return 0.0
    return bandwidth_hz * math.log2(1.0 + radio.snr(distance_m))


def spectral_efficiency(distance_m: float, radio: RadioParams) -> float:
    """bit/s per Hz at the given distance: log2(1 + SNR)."""
    return math.log2(1.0 + radio.snr(distance_m))


def upload_time(task: TaskSpec, rate_bits_per_s: float) -> float:
    """Seconds to upload the payload; +inf when starved (zero rate, nonzero data)."""
    if rate_bits_per_s < 0:
        raise ValueError("rate must be >= 0")
    if task.data_bits == 0:
        return 0.0
    if rate_bits_per_s == 0:
        return math.inf
    return task.data_bits / rate_bits_per_s


def exec_time(task: TaskSpec, vm_freq_hz: float) -> float:
    """Seconds of VM time the task itself needs."""
    if vm_freq_hz <= 0:
        raise ValueError("vm_freq_hz must be positive")
    return task.cycles / vm_freq_hz


def queue_time(queue: VmQueue, vm_freq_hz: float) -> float:
    """Seconds until the VM works off the backlog that is already queued."""
    if vm_freq_hz <= 0:
        raise ValueError("vm_freq_hz must be positive")
    return sum(c / vm_freq_hz for c in queue.pending_cycles)


def total_time(upload_s: float, queue_s: float, exec_s: float) -> float:
    """Task completion time: upload + queue wait + execution. +inf absorbs."""
    return upload_s + queue_s + exec_s


# --- economics ---

def task_revenue(total_s: float, econ: EconomicParams, priority: int) -> float:
    """Priority-weighted reward if the task met its deadline (boundary inclusive), else 0."""
    if priority not in (1, 2, 3):
        raise ValueError(f"priority must be 1, 2 or 3, got {priority}")
    if total_s <= econ.max_delay_s:
        return econ.reward_per_task * priority
    return 0.0


def rented_resources(decision: SliceDecision, catalog: SliceCatalog) -> tuple:
    """(bandwidth_hz, vm_count) selected by the decision's one-hot vectors."""
    _check_one_hot(decision.bandwidth_choice, len(catalog.bandwidth_tiers_hz), "bandwidth")
    _check_one_hot(decision.vm_choice, len(catalog.vm_tiers), "vm")
    bw = sum(a * b for a, b in zip(decision.bandwidth_choice, catalog.bandwidth_tiers_hz))
    vm = sum(a * v for a, v in zip(decision.vm_choice, catalog.vm_tiers))
    return bw, vm


def renting_cost(decisions, catalogs) -> float:
    """Hourly cost of the selected tiers summed over all regions."""
    if len(decisions) != len(catalogs):
        raise ValueError("one decision per region required")
    total = 0.0
    for decision, catalog in zip(decisions, catalogs):
        if decision.region_id != catalog.region_id:
            raise ValueError(
                f"decision for {decision.region_id} paired with catalog {catalog.region_id}")
        _check_one_hot(decision.bandwidth_choice, len(catalog.bandwidth_tiers_hz), "bandwidth")
        _check_one_hot(decision.vm_choice, len(catalog.vm_tiers), "vm")
        total += sum(a * z for a, z in zip(decision.bandwidth_choice, catalog.bandwidth_costs))
        total += sum(b * x for b, x in zip(decision.vm_choice, catalog.vm_costs))
    return total


def profit(revenues, costs) -> float:
    """Sum over long slots of (revenue - cost)."""
    if len(revenues) != len(costs):
        raise ValueError("revenue and cost sequences must have equal length")
    return sum(r - c for r, c in zip(revenues, costs))

"""Request-count traffic: ingestion of raw cellular activity records,
rescaling to the simulator's count range, and synthetic seasonal series."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RawTrafficRecord:
    cell_id: str
    timestamp_ms: int
    internet_activity: float


@dataclass
class TrafficSeries:
    """Aligned per-region activity/count sequences at a fixed slot duration."""

    region_ids: list
    counts: np.ndarray          # (n_regions, n_slots)
    slot_duration_s: float = 600.0

    def __post_init__(self):
        self.counts = np.asarray(self.counts)
        if self.counts.ndim != 2 or self.counts.shape[0] != len(self.region_ids):
            raise ValueError("counts must be (n_regions, n_slots)")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def n_slots(self) -> int:
        return self.counts.shape[1]

    def region(self, region_id) -> np.ndarray:
        return self.counts[self.region_ids.index(region_id)]


@dataclass
class IngestReport:
    skipped_rows: int = 0
    filled_gaps: int = 0
    rows_per_cell: dict = field(default_factory=dict)


def ingest_raw(path, selected_cell_ids, slot_ms: int = 600_000):
    """Read a delimiter-separated activity dump into an aligned raw series.

    Expected columns: cell_id, timestamp_ms, internet_activity; any further
    columns are ignored. Rows that do not parse are skipped and counted.
    All selected cells share one slot grid spanning the file's time range;
    slots with no record are zero-filled and counted as gaps.
    """
    wanted = [str(c) for c in selected_cell_ids]
    per_cell = {c: {} for c in wanted}
    report = IngestReport(rows_per_cell={c: 0 for c in wanted})
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            fields = line.replace(",", "\t").split()
            if len(fields) < 3:
                report.skipped_rows += 1
                continue
            cell = fields[0]
            if cell not in per_cell:
                continue
            try:
                ts = int(fields[1])
                activity = float(fields[2])
            except ValueError:
                report.skipped_rows += 1
                continue
            slot = ts // slot_ms
            per_cell[cell][slot] = per_cell[cell].get(slot, 0.0) + activity
            report.rows_per_cell[cell] += 1
    missing = [c for c in wanted if not per_cell[c]]
    if missing:
        raise ValueError(f"cell ids not present in {path}: {missing}")
    lo = min(min(slots) for slots in per_cell.values())
    hi = max(max(slots) for slots in per_cell.values())
    n = hi - lo + 1
    counts = np.zeros((len(wanted), n))
    for i, c in enumerate(wanted):
        for slot, activity in per_cell[c].items():
            counts[i, slot - lo] = activity
        report.filled_gaps += n - len(per_cell[c])
    series = TrafficSeries(region_ids=wanted, counts=counts,
                           slot_duration_s=slot_ms / 1000.0)
    return series, report


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # values are non-negative here, so half-away == floor(x + 0.5)
    return np.floor(x + 0.5)


def rescale(series: TrafficSeries, lo: int = 2, hi: int = 10) -> TrafficSeries:
    """Min-max map each region's sequence onto integer counts in [lo, hi].

    A constant region maps to lo. Already-rescaled integer series with
    min == lo and max == hi are fixed points.
    """
    if not (hi > lo >= 0):
        raise ValueError(f"need hi > lo >= 0, got [{lo}, {hi}]")
    out = np.empty_like(series.counts, dtype=np.int64)
    for i in range(series.counts.shape[0]):
        row = series.counts[i].astype(float)
        span = row.max() - row.min()
        if span == 0:
            out[i] = lo
            continue
        scaled = lo + (row - row.min()) * (hi - lo) / span
        out[i] = _round_half_away(scaled).astype(np.int64)
    return TrafficSeries(region_ids=list(series.region_ids), counts=out,
                         slot_duration_s=series.slot_duration_s)


def synthesize(seed: int, regions, days: int, base: float, amplitude: float,
               noise_sd: float, slots_per_day: int = 144,
               slot_duration_s: float = 600.0,
               step_slot: int = -1) -> TrafficSeries:
    """Daily sinusoid per region (region-specific phase) plus Gaussian noise,
    clipped to >= 0 and rounded to integer counts. Deterministic per seed.

    step_slot >= 0 doubles the counts from that slot of each day onward
    (a load-step pattern for stress scenarios).
    """
    if base - amplitude - 3.0 * noise_sd < -1e-9 and base - amplitude < 0:
        raise ValueError("sinusoid dips below zero even before noise")
    rng = np.random.default_rng(seed)
    region_ids = list(regions)
    n = days * slots_per_day
    t = np.arange(n)
    counts = np.empty((len(region_ids), n))
    for i in range(len(region_ids)):
        phase = 2.0 * math.pi * i / max(len(region_ids), 1)
        wave = base + amplitude * np.sin(2.0 * math.pi * t / slots_per_day + phase)
        noise = rng.normal(0.0, noise_sd, size=n) if noise_sd > 0 else 0.0
        counts[i] = wave + noise
    if step_slot >= 0:
        day_pos = t % slots_per_day
        counts[:, day_pos >= step_slot] *= 2.0
    counts = np.clip(counts, 0.0, None)
    return TrafficSeries(region_ids=region_ids,
                         counts=_round_half_away(counts).astype(np.int64),
                         slot_duration_s=slot_duration_s)


def save_series(series: TrafficSeries, path):
    """Write the canonical (region_id, slot_index, count) file."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id", "slot_index", "count"])
        for i, rid in enumerate(series.region_ids):
            for t in range(series.n_slots):
                v = series.counts[i, t]
                writer.writerow([rid, t, int(v) if float(v).is_integer() else repr(float(v))])


def load_series(path, slot_duration_s: float = 600.0) -> TrafficSeries:
    per_region = {}
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["region_id", "slot_index", "count"]:
            raise ValueError(f"unexpected header in {path}: {header}")
        for rid, t, v in reader:
            per_region.setdefault(rid, {})[int(t)] = float(v)
    region_ids = list(per_region)
    n = max(max(slots) for slots in per_region.values()) + 1
    counts = np.zeros((len(region_ids), n))
    for i, rid in enumerate(region_ids):
        for t, v in per_region[rid].items():
            counts[i, t] = v
    if np.all(counts == np.floor(counts)):
        counts = counts.astype(np.int64)
    return TrafficSeries(region_ids=region_ids, counts=counts,
                         slot_duration_s=slot_duration_s)

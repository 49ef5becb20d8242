"""Experiment orchestration: per-long-slot slice adjustment, per-short-slot
offloading, metric accounting, parameter sweeps, and report emission.

A run simulates one or more days. At every long-slot boundary the selected
slicing policy produces per-region renting decisions (attention predictor,
naive predictors, a true-future oracle, or a frozen static provision for the
historical mean); renting costs accrue per long slot. Within the slots a
frozen offloading policy (a trained agent checkpoint or uniform-random
actions) allocates bandwidth shares and VM indices. Expected task attributes
for the demand conversion are estimated from the previous long slot's tasks,
falling back to range midpoints before any tasks have been seen.

The rounding generator is re-created with the same per-run seed at every
boundary, so identical demands yield identical decisions: constant traffic
never causes slice flapping.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import core
from .agent import OffloadAgent
from .config import BITS_PER_KB, ExperimentConfig, Scenario, scenario_to_dict
from .env import ActionVector, OffloadEnv, snapshot_features
from .predictor import TrainedPredictor, load_predictor, naive_predict
from .slicer import SliceDiagnostics, TaskStats, adjust_slices
from .traffic import TrafficSeries, load_series, rescale, synthesize


class HarnessError(RuntimeError):
    pass


# --- traffic wiring --------------------------------------------------------

def build_traffic(cfg: ExperimentConfig) -> np.ndarray:
    """Full (warmup + simulated) per-region counts with the multiplier applied."""
    sc = cfg.scenario
    t = cfg.traffic
    if t.source == "synthetic":
        series = synthesize(seed=t.seed, regions=sc.region_ids, days=t.days,
                            base=t.base, amplitude=t.amplitude, noise_sd=t.noise_sd,
                            slots_per_day=sc.slots_per_day,
                            slot_duration_s=sc.slot_duration_s,
                            step_slot=t.step_slot)
    elif t.source == "file":
        series = load_series(t.path, slot_duration_s=sc.slot_duration_s)
        if set(sc.region_ids) - set(series.region_ids):
            raise HarnessError(f"traffic file lacks regions {sc.region_ids}")
        order = [series.region_ids.index(r) for r in sc.region_ids]
        series = TrafficSeries(sc.region_ids, series.counts[order],
                               slot_duration_s=sc.slot_duration_s)
        if series.counts.max() > t.rescale_hi or series.counts.dtype.kind == "f":
            series = rescale(series, t.rescale_lo, t.rescale_hi)
    else:
        raise HarnessError(f"unknown traffic source {t.source}")
    counts = series.counts.astype(float) * t.multiplier
    cap = math.ceil(sc.n_max * max(t.multiplier, 1.0))
    counts = np.clip(np.floor(counts + 0.5), 0, cap).astype(int)
    if counts.max() > sc.state_slots:
        raise HarnessError(
            f"multiplied traffic peaks at {counts.max()} users but the scenario "
            f"pads only {sc.state_slots} state slots")
    if counts.shape[1] < (cfg.sim_days + 1) * sc.slots_per_day:
        raise HarnessError("traffic too short: need at least one warmup day "
                           "before the simulated days")
    return counts


# --- slicing policies ------------------------------------------------------

class SlicingPolicy:
    """Produces per-region decisions at each long-slot boundary."""

    needs_predictor = False

    def __init__(self, cfg: ExperimentConfig, counts: np.ndarray, warmup_len: int,
                 seed: int, predictor: TrainedPredictor | None = None):
        self.cfg = cfg
        self.scenario = cfg.scenario
        self.counts = counts
        self.warmup_len = warmup_len
        self.seed = seed
        self.predictor = predictor
        self.diagnostics: list[SliceDiagnostics] = []

    def _omega(self):
        return {r: self.cfg.omega_for(r) for r in self.scenario.region_ids}

    def _rng(self):
        # same seed at every boundary: equal demands -> equal decisions
        return np.random.default_rng([self.seed, 0x511CE])

    def _decide(self, predicted: dict, stats: dict, long_slot: int) -> dict:
        decisions, diags = adjust_slices(
            predicted, stats, self.scenario.catalogs, self._omega(),
            self.scenario.econ, self.scenario.radio, self._rng(),
            aggregate=self.cfg.aggregate)
        for d in diags:
            d.long_slot = long_slot
        self.diagnostics.extend(diags)
        return decisions

    def horizon_counts(self, day_offset: int, long_slot: int) -> dict:
        raise NotImplementedError

    def decisions(self, day_offset: int, long_slot: int, stats: dict) -> dict:
        predicted = self.horizon_counts(day_offset, long_slot)
        t = self.scenario.econ.short_slots_per_long
        absolute = (day_offset - self.warmup_len) // self.scenario.slots_per_day * \
            self.scenario.econ.long_slots + long_slot
        return self._decide(predicted, stats, absolute)


class StaticSlicing(SlicingPolicy):
    """One decision for the historical mean traffic, frozen for the run."""

    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        history = self.counts[:, :self.warmup_len]
        stats = {r.region_id: TaskStats(*r.mid_task_stats()) for r in self.scenario.regions}
        predicted = {rid: np.full(self.scenario.econ.short_slots_per_long,
                                  history[i].mean())
                     for i, rid in enumerate(self.scenario.region_ids)}
        self._frozen = self._decide(predicted, stats, long_slot=-1)

    def decisions(self, day_offset, long_slot, stats):
        return dict(self._frozen)


class OracleSlicing(SlicingPolicy):
    """Slices against the true counts of the upcoming long slot."""

    def horizon_counts(self, day_offset, long_slot):
        t = self.scenario.econ.short_slots_per_long
        lo = day_offset + long_slot * t
        return {rid: self.counts[i, lo:lo + t]
                for i, rid in enumerate(self.scenario.region_ids)}


class PredictorSlicing(SlicingPolicy):
    needs_predictor = True

    def horizon_counts(self, day_offset, long_slot):
        t = self.scenario.econ.short_slots_per_long
        history = self.counts[:, :day_offset + long_slot * t]
        forecast = self.predictor.predict_counts(history)
        return {rid: forecast[i] for i, rid in enumerate(self.scenario.region_ids)}


class NaiveSlicing(SlicingPolicy):
    def __init__(self, *args, kind: str, **kw):
        super().__init__(*args, **kw)
        self.kind = kind

    def horizon_counts(self, day_offset, long_slot):
        t = self.scenario.econ.short_slots_per_long
        history = self.counts[:, :day_offset + long_slot * t]
        forecast = naive_predict(history, self.kind, horizon=t, window=t)
        return {rid: forecast[i] for i, rid in enumerate(self.scenario.region_ids)}


# --- offloading policies ---------------------------------------------------

class AgentPolicy:
    def __init__(self, agent: OffloadAgent, scenario: Scenario):
        expected = 3 + 3 * scenario.state_slots
        if agent.state_dim != expected:
            raise HarnessError(f"agent expects {agent.state_dim}-dim states but the "
                               f"scenario produces {expected}")
        self.agent = agent
        self.scenario = scenario

    def act(self, snapshot) -> ActionVector:
        features = snapshot_features(snapshot, self.scenario)
        return ActionVector.from_flat(self.agent.select_action(features, explore=False))


class RandomPolicy:
    def __init__(self, scenario: Scenario, seed: int):
        self.n = scenario.state_slots
        self.rng = np.random.default_rng([seed, 0xAC7])

    def act(self, snapshot) -> ActionVector:
        return ActionVector(self.rng.random(self.n), self.rng.random(self.n))


# --- metrics ---------------------------------------------------------------

@dataclass
class SlotMetrics:
    method: str
    seed: int
    day: int
    long_slot: int
    region_id: str
    revenue: float = 0.0
    cost: float = 0.0
    rented_bw_seconds: float = 0.0
    used_bw_seconds: float = 0.0
    rented_vm_seconds: float = 0.0
    used_vm_seconds: float = 0.0
    n_tasks: int = 0
    n_violations: int = 0
    n_finite: int = 0
    sum_upload_s: float = 0.0
    sum_queue_s: float = 0.0
    sum_exec_s: float = 0.0

    def validate(self):
        if self.used_bw_seconds > self.rented_bw_seconds + 1e-6:
            raise HarnessError("used bandwidth-seconds exceed rented")
        if self.used_vm_seconds > self.rented_vm_seconds + 1e-6:
            raise HarnessError("used VM-seconds exceed rented")
        if self.n_violations > self.n_tasks:
            raise HarnessError("more violations than tasks")


FIELDS = list(SlotMetrics.__dataclass_fields__)


@dataclass
class MetricsLog:
    rows: list

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FIELDS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, f)) for f in FIELDS])

    @classmethod
    def from_csv(cls, path) -> "MetricsLog":
        rows = []
        with open(path) as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                kw = {}
                for f in FIELDS:
                    v = rec[f]
                    if f in ("method", "region_id"):
                        kw[f] = v
                    elif f in ("seed", "day", "long_slot", "n_tasks", "n_violations",
                               "n_finite"):
                        kw[f] = int(v)
                    else:
                        kw[f] = float(v)
                rows.append(SlotMetrics(**kw))
        return cls(rows)


def _fmt(v):
    if isinstance(v, float):
        return repr(float(v))   # builtin float repr: shortest lossless form
    return v


@dataclass
class MetricsSummary:
    profit: float
    revenue: float
    cost: float
    resource_utilization: float
    bandwidth_utilization: float
    vm_utilization: float
    deadline_violation_rate: float
    mean_upload_s: float
    mean_queue_s: float
    mean_exec_s: float
    n_tasks: int
    vacuous: bool = False   # no tasks (or nothing rented): RU/DVR reported as 0


def compute_metrics(log: MetricsLog) -> MetricsSummary:
    if not log.rows:
        raise HarnessError("empty metrics log")
    for r in log.rows:
        r.validate()
    revenue = sum(r.revenue for r in log.rows)
    cost = sum(r.cost for r in log.rows)
    rented_bw = sum(r.rented_bw_seconds for r in log.rows)
    used_bw = sum(r.used_bw_seconds for r in log.rows)
    rented_vm = sum(r.rented_vm_seconds for r in log.rows)
    used_vm = sum(r.used_vm_seconds for r in log.rows)
    n_tasks = sum(r.n_tasks for r in log.rows)
    n_viol = sum(r.n_violations for r in log.rows)
    n_finite = sum(r.n_finite for r in log.rows)
    vacuous = n_tasks == 0 or rented_bw == 0 or rented_vm == 0
    bw_u = used_bw / rented_bw if rented_bw > 0 else 0.0
    vm_u = used_vm / rented_vm if rented_vm > 0 else 0.0
    return MetricsSummary(
        profit=revenue - cost,
        revenue=revenue,
        cost=cost,
        resource_utilization=0.5 * (bw_u + vm_u),
        bandwidth_utilization=bw_u,
        vm_utilization=vm_u,
        deadline_violation_rate=(n_viol / n_tasks) if n_tasks else 0.0,
        mean_upload_s=(sum(r.sum_upload_s for r in log.rows) / n_finite) if n_finite else 0.0,
        mean_queue_s=(sum(r.sum_queue_s for r in log.rows) / n_finite) if n_finite else 0.0,
        mean_exec_s=(sum(r.sum_exec_s for r in log.rows) / n_finite) if n_finite else 0.0,
        n_tasks=n_tasks,
        vacuous=vacuous,
    )


# --- the run ----------------------------------------------------------------

SLICING_BY_METHOD = {
    "sliceoff": PredictorSlicing,
    "sliceoff_oracle": OracleSlicing,
    "sliceoff_last_value": lambda *a, **k: NaiveSlicing(*a, kind="last_value", **k),
    "sliceoff_moving_average": lambda *a, **k: NaiveSlicing(*a, kind="moving_average", **k),
    "static_off": StaticSlicing,
    "td3_no_distill": StaticSlicing,
    "ddpg": StaticSlicing,
    "random": StaticSlicing,
}


@dataclass
class RunResult:
    method: str
    seed: int
    log: MetricsLog
    summary: MetricsSummary
    slicing_diagnostics: list
    trace_rows: list = field(default_factory=list)


def run_once(cfg: ExperimentConfig, seed: int,
             predictor: TrainedPredictor | None = None,
             agent: OffloadAgent | None = None) -> RunResult:
    """One seeded simulation of cfg.sim_days days; fully deterministic."""
    if cfg.method not in SLICING_BY_METHOD:
        raise HarnessError(f"unknown method {cfg.method}; choose from "
                           f"{sorted(SLICING_BY_METHOD)}")
    sc = cfg.scenario
    econ = sc.econ
    counts = build_traffic(cfg)
    warmup_len = counts.shape[1] - cfg.sim_days * sc.slots_per_day

    slicing_cls = SLICING_BY_METHOD[cfg.method]
    needs_predictor = cfg.method == "sliceoff"
    if needs_predictor and predictor is None:
        if not cfg.predictor_path:
            raise HarnessError("method sliceoff needs predictor_path or a predictor object")
        predictor = load_predictor(cfg.predictor_path)
    if predictor is not None and needs_predictor:
        if predictor.config.horizon_slots != econ.short_slots_per_long:
            raise HarnessError("predictor horizon does not match short slots per long slot")
        if list(predictor.region_ids) != list(sc.region_ids):
            raise HarnessError("predictor regions do not match the scenario")
    slicing = slicing_cls(cfg, counts, warmup_len, seed, predictor=predictor)

    if cfg.method == "random":
        policy = RandomPolicy(sc, seed)
    else:
        if agent is None:
            if not cfg.agent_path:
                raise HarnessError(f"method {cfg.method} needs agent_path or an agent object")
            agent = OffloadAgent.load(cfg.agent_path)
        policy = AgentPolicy(agent, sc)

    rows, trace, all_diags = [], [], []
    stats = {r.region_id: TaskStats(*r.mid_task_stats()) for r in sc.regions}
    for day in range(cfg.sim_days):
        day_offset = warmup_len + day * sc.slots_per_day
        day_counts = counts[:, day_offset:day_offset + sc.slots_per_day]
        decisions = slicing.decisions(day_offset, 0, stats)
        env = OffloadEnv(sc, day_counts, decisions, seed=_compose_seed(seed, day))
        day_rows = {}
        observed = {rid: [] for rid in sc.region_ids}
        for h in range(econ.long_slots):
            if h > 0:
                stats = _estimate_stats(observed, stats)
                observed = {rid: [] for rid in sc.region_ids}
                decisions = slicing.decisions(day_offset, h, stats)
                env.apply_slice_change(decisions)
            for region in sc.regions:
                rid = region.region_id
                bw, vm = core.rented_resources(decisions[rid], region.catalog)
                row = SlotMetrics(
                    method=cfg.method, seed=seed, day=day, long_slot=h, region_id=rid,
                    cost=(region.catalog.bandwidth_costs[decisions[rid].bandwidth_index]
                          + region.catalog.vm_costs[decisions[rid].vm_index]),
                    rented_bw_seconds=bw * sc.slot_duration_s * econ.short_slots_per_long,
                    rented_vm_seconds=vm * sc.slot_duration_s * econ.short_slots_per_long,
                )
                day_rows[(h, rid)] = row
            for t in range(econ.short_slots_per_long):
                for region in sc.regions:
                    out = env.step(policy.act(env.current_snapshot()))
                    info = out.info
                    row = day_rows[(h, info.region_id)]
                    row.revenue += out.reward
                    row.used_bw_seconds += info.used_bandwidth_seconds
                    row.used_vm_seconds += info.used_vm_seconds
                    row.n_tasks += len(info.tasks)
                    row.n_violations += info.n_violations
                    for task in info.tasks:
                        observed[info.region_id].append(task)
                        if math.isfinite(task.total_s):
                            row.n_finite += 1
                            row.sum_upload_s += task.upload_s
                            row.sum_queue_s += task.queue_s
                            row.sum_exec_s += task.exec_s
                        if cfg.trace:
                            trace.append((day, h, info.short_slot, info.region_id,
                                          task.user_index, task.upload_s, task.queue_s,
                                          task.exec_s, task.total_s, task.revenue))
        stats = _estimate_stats(observed, stats)
        rows.extend(day_rows[k] for k in sorted(day_rows))
        all_diags.extend(slicing.diagnostics)
        slicing.diagnostics = []
    log = MetricsLog(rows)
    return RunResult(method=cfg.method, seed=seed, log=log,
                     summary=compute_metrics(log),
                     slicing_diagnostics=all_diags, trace_rows=trace)


def _compose_seed(seed: int, day: int) -> int:
    return int(np.random.SeedSequence([seed, day]).generate_state(1)[0])


def _estimate_stats(observed: dict, previous: dict) -> dict:
    """Mean task attributes of the previous long slot; keeps the prior
    estimate for regions that saw no tasks."""
    out = {}
    for rid, tasks in observed.items():
        if not tasks:
            out[rid] = previous[rid]
            continue
        out[rid] = TaskStats(
            mean_data_bits=float(np.mean([t.data_bits for t in tasks])),
            mean_density=float(np.mean([t.density for t in tasks])),
            mean_distance_m=float(np.mean([t.distance_m for t in tasks])),
        )
    return out


def run_experiment(cfg: ExperimentConfig,
                   predictor: TrainedPredictor | None = None,
                   agent: OffloadAgent | None = None,
                   output_dir: str | None = None) -> list:
    """cfg.seeds repetitions of run_once, optionally persisted under
    output_dir (metrics/slicing/trace CSVs plus a config snapshot)."""
    results = [run_once(cfg, seed, predictor=predictor, agent=agent)
               for seed in cfg.seeds]
    if output_dir:
        os.makedirs(output_dir, exist_ok=True)
        from .config import experiment_to_dict
        with open(os.path.join(output_dir, "config_snapshot.json"), "w") as fh:
            json.dump(experiment_to_dict(cfg), fh, indent=2, sort_keys=True)
            fh.write("\n")
        for res in results:
            stem = f"{cfg.method}_seed{res.seed}"
            res.log.to_csv(os.path.join(output_dir, f"metrics_{stem}.csv"))
            write_slicing_csv(res.slicing_diagnostics,
                              os.path.join(output_dir, f"slicing_{stem}.csv"))
            if cfg.trace:
                write_trace_csv(res.trace_rows,
                                os.path.join(output_dir, f"trace_{stem}.csv"))
    return results


def write_slicing_csv(diags, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["long_slot", "region", "predicted_users", "bandwidth_req_hz",
                    "vm_req", "lp_cost", "rounded_cost", "bandwidth_tier_hz", "vm_tier"])
        for d in diags:
            w.writerow([d.long_slot, d.region_id, _fmt(d.predicted_users),
                        _fmt(d.bandwidth_req_hz), _fmt(d.vm_req), _fmt(d.lp_cost),
                        _fmt(d.rounded_cost), _fmt(d.bandwidth_tier_hz), d.vm_tier])


def write_trace_csv(trace_rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "long_slot", "short_slot", "region", "user",
                    "upload_s", "queue_s", "exec_s", "total_s", "revenue"])
        for row in trace_rows:
            w.writerow([row[0], row[1], row[2], row[3], row[4]] +
                       [_fmt(float(x)) for x in row[5:]])


def make_training_env_factory(cfg: ExperimentConfig, base_seed: int = 0):
    """Environment stream for agent training.

    Each episode is one day drawn round-robin from the configured traffic,
    with per-long-slot slice schedules derived from the true counts (so the
    agents experience the rented-resource variety they will face when
    deployed behind a live slicer). Task-attribute stats for the schedule use
    range midpoints. The schedule is shared, but task sampling is seeded per
    (agent_idx, episode), so the two agents of a distillation pair explore
    genuinely different environment streams.
    """
    sc = cfg.scenario
    counts = build_traffic(cfg)
    n_days = counts.shape[1] // sc.slots_per_day
    stats = {r.region_id: TaskStats(*r.mid_task_stats()) for r in sc.regions}
    omega = {r: cfg.omega_for(r) for r in sc.region_ids}
    schedules = {}

    def day_schedule(day: int):
        if day not in schedules:
            t = sc.econ.short_slots_per_long
            rng = np.random.default_rng([base_seed, 0x5C4ED, day])
            schedule = []
            for h in range(sc.econ.long_slots):
                lo = day * sc.slots_per_day + h * t
                predicted = {rid: counts[i, lo:lo + t]
                             for i, rid in enumerate(sc.region_ids)}
                decisions, _ = adjust_slices(predicted, stats, sc.catalogs, omega,
                                             sc.econ, sc.radio, rng,
                                             aggregate=cfg.aggregate)
                schedule.append(decisions)
            schedules[day] = schedule
        return schedules[day]

    def factory(agent_idx: int, episode: int) -> OffloadEnv:
        day = episode % n_days
        lo = day * sc.slots_per_day
        schedule = day_schedule(day)
        seed = int(np.random.SeedSequence([base_seed, agent_idx, episode]).generate_state(1)[0])
        return OffloadEnv(sc, counts[:, lo:lo + sc.slots_per_day],
                          schedule[0], seed=seed, schedule=schedule)

    return factory


# --- sweeps -----------------------------------------------------------------

SWEEP_AXES = ("traffic_multiplier", "max_delay", "omega")


def apply_axis(cfg: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    if axis == "traffic_multiplier":
        return replace(cfg, traffic=replace(cfg.traffic, multiplier=float(value)))
    if axis == "max_delay":
        sc = cfg.scenario
        econ = replace(sc.econ, max_delay_s=float(value))
        return replace(cfg, scenario=replace(sc, econ=econ))
    if axis == "omega":
        return replace(cfg, omega=float(value), omega_per_region={})
    raise HarnessError(f"unknown sweep axis {axis}; choose from {SWEEP_AXES}")


@dataclass
class SweepCell:
    axis: str
    value: float
    method: str
    seed: int
    summary: MetricsSummary


def sweep(cfg: ExperimentConfig, axis: str, values,
          predictor: TrainedPredictor | None = None,
          agent: OffloadAgent | None = None) -> list:
    """Grid of run_once over axis values x seeds; row-complete by construction."""
    cells = []
    for value in values:
        sub = apply_axis(cfg, axis, value)
        for seed in cfg.seeds:
            res = run_once(sub, seed, predictor=predictor, agent=agent)
            cells.append(SweepCell(axis=axis, value=float(value), method=cfg.method,
                                   seed=seed, summary=res.summary))
    return cells


def write_sweep_csv(cells, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "value", "method", "seed", "profit", "revenue", "cost",
                    "resource_utilization", "deadline_violation_rate",
                    "mean_upload_s", "mean_queue_s", "mean_exec_s", "n_tasks"])
        for c in cells:
            s = c.summary
            w.writerow([c.axis, _fmt(c.value), c.method, c.seed, _fmt(s.profit),
                        _fmt(s.revenue), _fmt(s.cost), _fmt(s.resource_utilization),
                        _fmt(s.deadline_violation_rate), _fmt(s.mean_upload_s),
                        _fmt(s.mean_queue_s), _fmt(s.mean_exec_s), s.n_tasks])


# --- reports ----------------------------------------------------------------

def report(results_by_method: dict, out_dir: str, reward_curves: dict | None = None):
    """Bar/curve figures plus a text and CSV summary for a set of finished runs.

    results_by_method: method name -> list[RunResult] (one per seed).
    reward_curves: optional label -> (episodes,) arrays of training rewards.
    """
    if not results_by_method:
        raise HarnessError("no results to report")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    methods = sorted(results_by_method)
    summaries = {m: [r.summary for r in results_by_method[m]] for m in methods}

    def mean_sd(vals):
        arr = np.asarray(vals, dtype=float)
        return float(arr.mean()), float(arr.std())

    # profit / revenue / cost bars
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(methods), 4))
    x = np.arange(len(methods))
    for off, key, color in ((-0.25, "revenue", "#4c9"), (0.0, "cost", "#c95"),
                            (0.25, "profit", "#59c")):
        means, sds = zip(*(mean_sd([getattr(s, key) for s in summaries[m]]) for m in methods))
        ax.bar(x + off, means, width=0.22, yerr=sds, capsize=3, label=key, color=color)
    ax.set_xticks(x, methods, rotation=20, ha="right")
    ax.set_ylabel("$ per simulated day")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "profit_bars.png"), dpi=120)
    plt.close(fig)

    # completion-time breakdown bars
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(methods), 4))
    bottoms = np.zeros(len(methods))
    for key, color in (("mean_upload_s", "#59c"), ("mean_queue_s", "#c95"),
                       ("mean_exec_s", "#4c9")):
        means = np.array([mean_sd([getattr(s, key) for s in summaries[m]])[0]
                          for m in methods])
        ax.bar(x, means, bottom=bottoms, width=0.5, label=key.replace("mean_", "").rstrip("_s"))
        bottoms += means
    ax.set_xticks(x, methods, rotation=20, ha="right")
    ax.set_ylabel("seconds (mean per completed task)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "time_breakdown.png"), dpi=120)
    plt.close(fig)

    if reward_curves:
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, curve in sorted(reward_curves.items()):
            curve = np.asarray(curve, dtype=float)
            if curve.ndim == 2:
                mean = curve.mean(axis=0)
                sd = curve.std(axis=0)
                ax.plot(mean, label=label)
                ax.fill_between(np.arange(len(mean)), mean - sd, mean + sd, alpha=0.2)
            else:
                ax.plot(curve, label=label)
        ax.set_xlabel("episode")
        ax.set_ylabel("episode reward")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "reward_curves.png"), dpi=120)
        plt.close(fig)

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "seed", "profit", "revenue", "cost",
                    "resource_utilization", "deadline_violation_rate",
                    "mean_upload_s", "mean_queue_s", "mean_exec_s", "n_tasks"])
        for m in methods:
            for r in results_by_method[m]:
                s = r.summary
                w.writerow([m, r.seed, _fmt(s.profit), _fmt(s.revenue), _fmt(s.cost),
                            _fmt(s.resource_utilization),
                            _fmt(s.deadline_violation_rate), _fmt(s.mean_upload_s),
                            _fmt(s.mean_queue_s), _fmt(s.mean_exec_s), s.n_tasks])

    lines = ["method               profit        RU      DVR   tasks"]
    for m in methods:
        p, psd = mean_sd([s.profit for s in summaries[m]])
        ru, _ = mean_sd([s.resource_utilization for s in summaries[m]])
        dvr, _ = mean_sd([s.deadline_violation_rate for s in summaries[m]])
        n = int(np.mean([s.n_tasks for s in summaries[m]]))
        lines.append(f"{m:<20} {p:8.1f}±{psd:<6.1f} {ru:7.4f} {dvr:8.4f} {n:7d}")
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(text)
    return text

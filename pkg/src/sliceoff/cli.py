"""Command-line entry points.

Subcommands: init-config, prepare-traffic, train-predictor, train-agent,
run, sweep, report. Every command takes --config (JSON; defaults are written
by init-config) and exits 0 on success; failures print one machine-readable
JSON line on stderr and exit 1. All artifacts land under --out.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from .agent import AgentConfig, OffloadAgent, train_pair, train_single
from .harness import (
    HarnessError,
    MetricsLog,
    compute_metrics,
    make_training_env_factory,
    report,
    run_experiment,
    sweep,
    write_sweep_csv,
)
from .predictor import (
    PredictorConfig,
    save_loss_curve,
    save_predictor,
    train_predictor,
)
from .traffic import ingest_raw, rescale, save_series, synthesize


def _load_config(args) -> cfgmod.ExperimentConfig:
    if args.config:
        cfg = cfgmod.load_experiment_config(args.config)
    else:
        cfg = cfgmod.default_experiment_config()
    if getattr(args, "method", None):
        cfg.method = args.method
    if getattr(args, "seeds", None):
        cfg.seeds = tuple(args.seeds)
    if getattr(args, "predictor", None):
        cfg.predictor_path = args.predictor
    if getattr(args, "agent", None):
        cfg.agent_path = args.agent
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    return cfg


def _agent_config(cfg: cfgmod.ExperimentConfig) -> AgentConfig:
    params = dict(cfg.agent_params)
    if "hidden_layer_sizes" in params:
        params["hidden_layer_sizes"] = tuple(params["hidden_layer_sizes"])
    return AgentConfig(**params)


def _predictor_config(cfg: cfgmod.ExperimentConfig) -> PredictorConfig:
    params = dict(cfg.predictor_params)
    params.setdefault("horizon_slots", cfg.scenario.econ.short_slots_per_long)
    return PredictorConfig(**params)


def cmd_init_config(args):
    cfg = cfgmod.default_experiment_config()
    cfgmod.save_experiment_config(cfg, args.out)
    print(f"wrote default config to {args.out}")


def cmd_prepare_traffic(args):
    if args.synthetic:
        cfg = _load_config(args)
        t = cfg.traffic
        series = synthesize(seed=t.seed, regions=cfg.scenario.region_ids, days=t.days,
                            base=t.base, amplitude=t.amplitude, noise_sd=t.noise_sd,
                            slots_per_day=cfg.scenario.slots_per_day,
                            slot_duration_s=cfg.scenario.slot_duration_s,
                            step_slot=t.step_slot)
    else:
        if not args.input:
            raise HarnessError("prepare-traffic needs --input (or --synthetic)")
        cfg = _load_config(args)
        cells = args.cells.split(",") if args.cells else list(cfg.traffic.cells)
        raw, rep = ingest_raw(args.input, cells)
        print(f"ingested {raw.n_slots} slots per cell "
              f"({rep.skipped_rows} rows skipped, {rep.filled_gaps} gaps zero-filled)")
        series = rescale(raw, args.lo, args.hi)
    save_series(series, args.out)
    print(f"wrote counts for regions {series.region_ids} to {args.out}")


def cmd_train_predictor(args):
    cfg = _load_config(args)
    from .harness import build_traffic
    from .traffic import TrafficSeries

    counts = build_traffic(cfg)
    series = TrafficSeries(cfg.scenario.region_ids, counts,
                           slot_duration_s=cfg.scenario.slot_duration_s)
    pcfg = _predictor_config(cfg)
    trained = train_predictor(series, pcfg, seed=args.seed, verbose=args.verbose)
    os.makedirs(args.out, exist_ok=True)
    ckpt = os.path.join(args.out, "predictor.pt")
    save_predictor(trained, ckpt)
    save_loss_curve(trained, os.path.join(args.out, "loss_curve.csv"))
    best = min(v for _, _, v in trained.loss_curve)
    print(f"trained {len(trained.loss_curve)} epochs; best val MSE (scaled) {best:.6f}")
    print(f"checkpoint: {ckpt}")


def cmd_train_agent(args):
    cfg = _load_config(args)
    acfg = _agent_config(cfg)
    factory = make_training_env_factory(cfg, base_seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    episodes = args.episodes or cfg.train_episodes
    if args.kind == "dual":
        result = train_pair(factory, episodes, acfg, seeds=(args.seed, args.seed + 1))
        names = ["agent_a.npz", "agent_b.npz"]
    else:
        variant = {"td3_no_distill": "td3", "ddpg": "ddpg"}[args.kind]
        if args.kind == "td3_no_distill":
            acfg = AgentConfig(**{**acfg.__dict__, "distill_weight": 0.0})
        result = train_single(factory, episodes, acfg, seed=args.seed, variant=variant)
        names = ["agent_a.npz"]
    for agent, name in zip(result.agents, names):
        agent.save(os.path.join(args.out, name))
    best = result.agents[result.better_index]
    best.save(os.path.join(args.out, "agent_best.npz"))
    _write_rewards_csv(result, os.path.join(args.out, "rewards.csv"))
    final = result.rewards[:, -max(1, episodes // 10):].mean(axis=1) if episodes else []
    print(f"trained {episodes} episodes; final-decile mean rewards "
          f"{np.array2string(np.asarray(final), precision=1)}")
    print(f"best agent: {os.path.join(args.out, 'agent_best.npz')}")


def _write_rewards_csv(result, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "agent_id", "reward", "distill_loss_mean",
                    "peer_chosen_fraction"])
        n_agents, episodes = result.rewards.shape
        for ep in range(episodes):
            for i in range(n_agents):
                frac = (result.peer_fractions[ep]
                        if result.peer_fractions is not None and i == 0 else math.nan)
                w.writerow([ep, i, repr(float(result.rewards[i, ep])),
                            repr(float(result.distill_loss_means[i, ep])),
                            repr(float(frac))])


def cmd_run(args):
    cfg = _load_config(args)
    results = run_experiment(cfg, output_dir=cfg.output_dir)
    for res in results:
        s = res.summary
        print(f"seed {res.seed}: profit {s.profit:.1f} (revenue {s.revenue:.1f}, "
              f"cost {s.cost:.1f}) RU {s.resource_utilization:.4f} "
              f"DVR {s.deadline_violation_rate:.4f} over {s.n_tasks} tasks")
    print(f"outputs in {cfg.output_dir}")


def cmd_sweep(args):
    cfg = _load_config(args)
    values = [float(v) for v in args.values.split(",")]
    cells = sweep(cfg, args.axis, values)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, f"sweep_{args.axis}.csv")
    write_sweep_csv(cells, path)
    _plot_sweep(cells, args.axis, cfg.output_dir)
    print(f"{len(cells)} cells -> {path}")


def _plot_sweep(cells, axis, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    values = sorted({c.value for c in cells})
    for metric, label in (("profit", "profit ($/day)"),
                          ("resource_utilization", "resource utilization"),
                          ("deadline_violation_rate", "deadline violation rate")):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        means, sds = [], []
        for v in values:
            vals = [getattr(c.summary, metric) for c in cells if c.value == v]
            means.append(float(np.mean(vals)))
            sds.append(float(np.std(vals)))
        ax.errorbar(values, means, yerr=sds, marker="o", capsize=3)
        ax.set_xlabel(axis)
        ax.set_ylabel(label)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"sweep_{axis}_{metric}.png"), dpi=120)
        plt.close(fig)


def cmd_report(args):
    from .harness import RunResult

    results = {}
    reward_curves = {}
    for run_dir in args.runs:
        for name in sorted(os.listdir(run_dir)):
            path = os.path.join(run_dir, name)
            if name.startswith("metrics_") and name.endswith(".csv"):
                stem = name[len("metrics_"):-len(".csv")]
                method, _, seed = stem.rpartition("_seed")
                log = MetricsLog.from_csv(path)
                results.setdefault(method, []).append(
                    RunResult(method=method, seed=int(seed), log=log,
                              summary=compute_metrics(log), slicing_diagnostics=[]))
            elif name == "rewards.csv":
                for agent_id, curve in _read_reward_curves(path).items():
                    label = f"{os.path.basename(os.path.normpath(run_dir))}/agent{agent_id}"
                    reward_curves[label] = curve
    text = report(results, args.out, reward_curves=reward_curves or None)
    print(text)


def _read_reward_curves(path):
    curves = {}
    with open(path) as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            curves.setdefault(int(row["agent_id"]), []).append(float(row["reward"]))
    return curves


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sliceoff",
                                description="multi-edge slicing/offloading simulator")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init-config", help="write the default JSON config")
    sp.add_argument("--out", default="sliceoff_config.json")
    sp.set_defaults(fn=cmd_init_config)

    sp = sub.add_parser("prepare-traffic", help="ingest/rescale or synthesize counts")
    sp.add_argument("--config", default="")
    sp.add_argument("--input", default="", help="raw activity dump (cell, ts_ms, activity)")
    sp.add_argument("--cells", default="",
                    help="comma-separated cell ids (default: the config's traffic.cells)")
    sp.add_argument("--lo", type=int, default=2)
    sp.add_argument("--hi", type=int, default=10)
    sp.add_argument("--synthetic", action="store_true")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_prepare_traffic)

    sp = sub.add_parser("train-predictor", help="fit the attention forecaster")
    sp.add_argument("--config", default="")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(fn=cmd_train_predictor)

    sp = sub.add_parser("train-agent", help="train offloading agents")
    sp.add_argument("--config", default="")
    sp.add_argument("--kind", choices=("dual", "td3_no_distill", "ddpg"), default="dual")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--episodes", type=int, default=0, help="0: use config value")
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_train_agent)

    sp = sub.add_parser("run", help="simulate one method")
    sp.add_argument("--config", default="")
    sp.add_argument("--method", default="")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--predictor", default="")
    sp.add_argument("--agent", default="")
    sp.add_argument("--out", default="")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("sweep", help="grid over one axis")
    sp.add_argument("--config", default="")
    sp.add_argument("--axis", required=True,
                    choices=("traffic_multiplier", "max_delay", "omega"))
    sp.add_argument("--values", required=True, help="comma-separated values")
    sp.add_argument("--method", default="")
    sp.add_argument("--seeds", type=int, nargs="+")
    sp.add_argument("--predictor", default="")
    sp.add_argument("--agent", default="")
    sp.add_argument("--out", default="")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("report", help="plots + summary from finished runs")
    sp.add_argument("--runs", nargs="+", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except Exception as exc:  # noqa: BLE001 - single choke point for exit-code contract
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Scenario and experiment configuration.

Every physical/economic constant of the default three-region setup lives
here (or in a user-supplied JSON config), never inside simulation code.
Bandwidth tiers are megahertz in config files and converted to Hz at
construction; task sizes are kilobytes with 1 KB = 1000 bytes = 8000 bits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

from .core import EconomicParams, RadioParams, SliceCatalog

BITS_PER_KB = 8000
MHZ = 1.0e6


@dataclass(frozen=True)
class RegionScenario:
    """Task-attribute distributions and the purchasable catalog of one region."""

    region_id: str
    catalog: SliceCatalog
    data_kb_range: tuple      # uniform [lo, hi] payload, KB
    density_range: tuple      # uniform [lo, hi] cycles/bit
    distance_range: tuple = (1.0, 2000.0)
    priorities: tuple = (1, 2, 3)

    def __post_init__(self):
        if self.data_kb_range[0] <= 0 or self.data_kb_range[0] > self.data_kb_range[1]:
            raise ValueError("bad data_kb_range")
        if self.density_range[0] < 0 or self.density_range[0] > self.density_range[1]:
            raise ValueError("bad density_range")
        if self.distance_range[0] < 1 or self.distance_range[0] > self.distance_range[1]:
            raise ValueError("bad distance_range")

    def mid_task_stats(self):
        """Cold-start (mean data bits, mean density, mean distance): range midpoints."""
        d = 0.5 * (self.data_kb_range[0] + self.data_kb_range[1]) * BITS_PER_KB
        eta = 0.5 * (self.density_range[0] + self.density_range[1])
        dist = 0.5 * (self.distance_range[0] + self.distance_range[1])
        return d, eta, dist


@dataclass(frozen=True)
class Scenario:
    """The simulated multi-edge system: regions, radio, economics, slot structure."""

    regions: tuple                  # RegionScenario per region
    radio: RadioParams
    econ: EconomicParams
    n_max: int = 10                 # traffic ceiling (active users per region-slot)
    state_slots: int = 10           # zero-padded user slots in states/actions (>= n_max)
    slot_duration_s: float = 600.0

    def __post_init__(self):
        if self.state_slots < self.n_max:
            raise ValueError("state_slots must be >= n_max")
        if self.slot_duration_s <= 0:
            raise ValueError("slot_duration_s must be positive")
        ids = [r.region_id for r in self.regions]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate region ids")

    @property
    def region_ids(self):
        return [r.region_id for r in self.regions]

    @property
    def catalogs(self):
        return [r.catalog for r in self.regions]

    @property
    def slots_per_day(self) -> int:
        return self.econ.long_slots * self.econ.short_slots_per_long


def default_catalogs() -> list:
    """The three-region tier/price catalog of the default setup.

    R1: B 1..20 MHz at 3,6,..,60 $/h; V 1..16 at 2,4,..,32 $/h
    R2: B 1..25 MHz at 2,4,..,50 $/h; V 1..12 at 4,8,..,48 $/h
    R3: B 1..30 MHz at 1,2,..,30 $/h; V 1..8  at 6,12,..,48 $/h
    """
    f_edge = 2.0e9
    return [
        SliceCatalog("R1",
                     tuple(k * MHZ for k in range(1, 21)), tuple(3.0 * k for k in range(1, 21)),
                     tuple(range(1, 17)), tuple(2.0 * k for k in range(1, 17)), f_edge),
        SliceCatalog("R2",
                     tuple(k * MHZ for k in range(1, 26)), tuple(2.0 * k for k in range(1, 26)),
                     tuple(range(1, 13)), tuple(4.0 * k for k in range(1, 13)), f_edge),
        SliceCatalog("R3",
                     tuple(k * MHZ for k in range(1, 31)), tuple(1.0 * k for k in range(1, 31)),
                     tuple(range(1, 9)), tuple(6.0 * k for k in range(1, 9)), f_edge),
    ]


def default_radio() -> RadioParams:
    """100 mW upload power, -110 dBm noise, -60 dB reference gain, exponent 2."""
    return RadioParams.from_db(upload_power_mW=100.0, noise_power_dBm=-110.0,
                               gain_ref_dB=-60.0, path_loss_exp=2.0)


def default_econ(max_delay_s: float = 1.0) -> EconomicParams:
    return EconomicParams(reward_per_task=1.0, max_delay_s=max_delay_s,
                          long_slots=24, short_slots_per_long=6)


def default_scenario(max_delay_s: float = 1.0, state_slots: int = 10) -> Scenario:
    """Three heterogeneous regions: small/compute-heavy, mid, large/compute-light tasks."""
    cat = {c.region_id: c for c in default_catalogs()}
    regions = (
        RegionScenario("R1", cat["R1"], data_kb_range=(100.0, 300.0), density_range=(400.0, 600.0)),
        RegionScenario("R2", cat["R2"], data_kb_range=(300.0, 500.0), density_range=(100.0, 200.0)),
        RegionScenario("R3", cat["R3"], data_kb_range=(500.0, 700.0), density_range=(50.0, 100.0)),
    )
    return Scenario(regions=regions, radio=default_radio(), econ=default_econ(max_delay_s),
                    n_max=10, state_slots=state_slots)


@dataclass
class TrafficConfig:
    """Where the per-slot request counts come from."""

    source: str = "synthetic"           # synthetic | file
    days: int = 4                       # total days incl. history before the simulated day(s)
    base: float = 6.0
    amplitude: float = 4.0
    noise_sd: float = 0.5
    seed: int = 7
    step_slot: int = -1                 # if >= 0: counts double from this slot of the day onward
    path: str = ""                      # canonical counts file (file source)
    cells: tuple = ("4259", "4456", "5060")   # raw-dump cell ids mapped to regions
    multiplier: float = 1.0
    rescale_lo: int = 2
    rescale_hi: int = 10

    def __post_init__(self):
        self.cells = tuple(str(c) for c in self.cells)


@dataclass
class ExperimentConfig:
    """One run (or sweep) of the benchmark harness."""

    scenario: Scenario
    traffic: TrafficConfig
    method: str = "static_off"
    seeds: tuple = (0,)
    omega: float = 0.3                  # deadline share reserved for uploading
    omega_per_region: dict = field(default_factory=dict)
    aggregate: str = "max"              # horizon counts -> one provisioning figure
    sim_days: int = 1
    predictor_path: str = ""
    agent_path: str = ""
    output_dir: str = "runs/out"
    trace: bool = False
    predictor_params: dict = field(default_factory=dict)   # PredictorConfig overrides
    agent_params: dict = field(default_factory=dict)       # AgentConfig overrides
    train_episodes: int = 300

    def omega_for(self, region_id: str) -> float:
        return self.omega_per_region.get(region_id, self.omega)


METHODS = (
    "sliceoff",              # attention-predictor slicing + trained offloading agent
    "sliceoff_oracle",       # true-future slicing + trained agent
    "sliceoff_last_value",   # naive last-value predictor slicing + trained agent
    "sliceoff_moving_average",
    "static_off",            # mean-traffic static slicing + trained agent
    "td3_no_distill",        # static slicing + no-distillation agent checkpoint
    "ddpg",                  # static slicing + single-critic agent checkpoint
    "random",                # static slicing + uniform-random actions
)


# --- JSON round trip -------------------------------------------------------
# Config files mirror the dataclass tree, except radio is given in dB/dBm and
# bandwidth tiers in MHz (converted here, stored linear/Hz).

def scenario_to_dict(s: Scenario) -> dict:
    return {
        "n_max": s.n_max,
        "state_slots": s.state_slots,
        "slot_duration_s": s.slot_duration_s,
        "radio": {
            "upload_power_mW": s.radio.upload_power_mW,
            "noise_power_dBm": round(10 * _log10(s.radio.noise_power_mW), 9),
            "gain_ref_dB": round(10 * _log10(s.radio.gain_ref), 9),
            "path_loss_exp": s.radio.path_loss_exp,
        },
        "econ": asdict(s.econ),
        "regions": [
            {
                "region_id": r.region_id,
                "data_kb_range": list(r.data_kb_range),
                "density_range": list(r.density_range),
                "distance_range": list(r.distance_range),
                "priorities": list(r.priorities),
                "catalog": {
                    "bandwidth_tiers_mhz": [b / MHZ for b in r.catalog.bandwidth_tiers_hz],
                    "bandwidth_costs": list(r.catalog.bandwidth_costs),
                    "vm_tiers": list(r.catalog.vm_tiers),
                    "vm_costs": list(r.catalog.vm_costs),
                    "vm_freq_hz": r.catalog.vm_freq_hz,
                },
            }
            for r in s.regions
        ],
    }


def scenario_from_dict(d: dict) -> Scenario:
    regions = []
    for rd in d["regions"]:
        cd = rd["catalog"]
        catalog = SliceCatalog(
            rd["region_id"],
            tuple(b * MHZ for b in cd["bandwidth_tiers_mhz"]),
            tuple(cd["bandwidth_costs"]),
            tuple(cd["vm_tiers"]),
            tuple(cd["vm_costs"]),
            cd["vm_freq_hz"],
        )
        regions.append(RegionScenario(
            rd["region_id"], catalog,
            tuple(rd["data_kb_range"]), tuple(rd["density_range"]),
            tuple(rd["distance_range"]), tuple(rd["priorities"]),
        ))
    rad = d["radio"]
    return Scenario(
        regions=tuple(regions),
        radio=RadioParams.from_db(rad["upload_power_mW"], rad["noise_power_dBm"],
                                  rad["gain_ref_dB"], rad["path_loss_exp"]),
        econ=EconomicParams(**d["econ"]),
        n_max=d["n_max"],
        state_slots=d["state_slots"],
        slot_duration_s=d["slot_duration_s"],
    )


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "scenario": scenario_to_dict(cfg.scenario),
        "traffic": asdict(cfg.traffic),
        "method": cfg.method,
        "seeds": list(cfg.seeds),
        "omega": cfg.omega,
        "omega_per_region": dict(cfg.omega_per_region),
        "aggregate": cfg.aggregate,
        "sim_days": cfg.sim_days,
        "predictor_path": cfg.predictor_path,
        "agent_path": cfg.agent_path,
        "output_dir": cfg.output_dir,
        "trace": cfg.trace,
        "predictor_params": dict(cfg.predictor_params),
        "agent_params": dict(cfg.agent_params),
        "train_episodes": cfg.train_episodes,
    }


def experiment_from_dict(d: dict) -> ExperimentConfig:
    return ExperimentConfig(
        scenario=scenario_from_dict(d["scenario"]),
        traffic=TrafficConfig(**d["traffic"]),
        method=d.get("method", "static_off"),
        seeds=tuple(d.get("seeds", [0])),
        omega=d.get("omega", 0.3),
        omega_per_region=dict(d.get("omega_per_region", {})),
        aggregate=d.get("aggregate", "max"),
        sim_days=d.get("sim_days", 1),
        predictor_path=d.get("predictor_path", ""),
        agent_path=d.get("agent_path", ""),
        output_dir=d.get("output_dir", "runs/out"),
        trace=d.get("trace", False),
        predictor_params=dict(d.get("predictor_params", {})),
        agent_params=dict(d.get("agent_params", {})),
        train_episodes=d.get("train_episodes", 300),
    )


def default_experiment_config() -> ExperimentConfig:
    return ExperimentConfig(scenario=default_scenario(), traffic=TrafficConfig())


def save_experiment_config(cfg: ExperimentConfig, path):
    with open(path, "w") as fh:
        json.dump(experiment_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return experiment_from_dict(json.load(fh))


def _log10(x: float) -> float:
    import math
    return math.log10(x)

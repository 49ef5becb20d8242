"""Slice sizing: predicted traffic -> resource demands -> relaxed LP ->
randomized rounding to one-hot renting decisions.

Each per-region, per-resource program is a single linear covering constraint
over the tier simplex (minimize cost s.t. mixed capacity >= demand, weights
on the simplex), so it is solved exactly in closed form: the best candidate
among feasible single tiers and demand-bracketing tier pairs. Rounding draws
one tier per resource with probability equal to its weight, which makes the
rounded cost an unbiased estimate of the relaxed optimum.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import EconomicParams, RadioParams, SliceCatalog, SliceDecision, spectral_efficiency

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskStats:
    """Expected task attributes of a region, estimated from recent tasks."""

    mean_data_bits: float
    mean_density: float
    mean_distance_m: float = 1000.0


@dataclass(frozen=True)
class RegionDemand:
    region_id: str
    bandwidth_req_hz: float
    vm_req: float
    predicted_users: float
    mean_data_bits: float
    mean_density: float
    delay_ratio: float

    def __post_init__(self):
        if not (0.0 < self.delay_ratio < 1.0):
            raise ValueError(f"delay_ratio must be in (0, 1), got {self.delay_ratio}")
        if self.bandwidth_req_hz < 0 or self.vm_req < 0:
            raise ValueError("demands must be >= 0")


@dataclass
class FractionalDecision:
    """Relaxed renting weights: one probability vector per resource."""

    region_id: str
    bandwidth_weights: np.ndarray
    vm_weights: np.ndarray

    def __post_init__(self):
        for name in ("bandwidth_weights", "vm_weights"):
            w = np.asarray(getattr(self, name), dtype=float)
            if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} must be a probability vector, got {w}")
            setattr(self, name, np.clip(w, 0.0, None))


def demand_from_prediction(predicted_users: float, stats: TaskStats, omega: float,
                           econ: EconomicParams, radio: RadioParams,
                           vm_freq_hz: float, region_id: str = "") -> RegionDemand:
    """Convert a predicted user count into resource lower bounds.

    The deadline is split by omega: uploads must fit omega*T_max at the
    expected spectral efficiency, execution must fit (1-omega)*T_max on the
    rented VMs.
    """
    if not (0.0 < omega < 1.0):
        raise ValueError(f"omega must be in (0, 1), got {omega}")
    if predicted_users < 0:
        raise ValueError("predicted_users must be >= 0")
    if predicted_users == 0:
        return RegionDemand(region_id, 0.0, 0.0, 0.0,
                            stats.mean_data_bits, stats.mean_density, omega)
    se = spectral_efficiency(stats.mean_distance_m, radio)
    bw = predicted_users * stats.mean_data_bits / (omega * econ.max_delay_s * se)
    vm = (predicted_users * stats.mean_data_bits * stats.mean_density
          / ((1.0 - omega) * econ.max_delay_s * vm_freq_hz))
    return RegionDemand(region_id, bw, vm, predicted_users,
                        stats.mean_data_bits, stats.mean_density, omega)


def _solve_one_resource(tiers, costs, req: float, label: str) -> np.ndarray:
    """Minimal-cost weights over the simplex with mixed capacity >= req.

    Returns the exact LP optimum. If req exceeds the largest tier, clamps to
    a one-hot on that tier and logs a warning.
    """
    tiers = np.asarray(tiers, dtype=float)
    costs = np.asarray(costs, dtype=float)
    n = len(tiers)
    weights = np.zeros(n)
    if req > tiers[-1]:
        log.warning("%s demand %.4g exceeds largest tier %.4g; clamping", label, req, tiers[-1])
        weights[-1] = 1.0
        return weights
    if req <= tiers[0]:
        # every tier is feasible alone; pick the cheapest (lowest index on ties)
        weights[int(np.argmin(costs))] = 1.0
        return weights
    j = int(np.searchsorted(tiers, req, side="left"))   # first tier >= req
    i = j - 1                                           # last tier < req

    def pair_cost(p, q):
        wq = (req - tiers[p]) / (tiers[q] - tiers[p])
        return (1.0 - wq) * costs[p] + wq * costs[q], wq

    # seed with the adjacent bracketing pair so degenerate ties resolve to it
    best_cost, best_wq = pair_cost(i, j)
    best = ("pair", i, j, best_wq)
    for k in range(j, n):                               # single feasible tiers
        if costs[k] < best_cost - 1e-12:
            best_cost, best = costs[k], ("single", k, k, 1.0)
    for p in range(j):                                  # mixes across the demand
        for q in range(max(p + 1, j), n):
            c, wq = pair_cost(p, q)
            if c < best_cost - 1e-12:
                best_cost, best = c, ("pair", p, q, wq)
    kind, p, q, wq = best
    if kind == "single":
        weights[p] = 1.0
    else:
        weights[p] = 1.0 - wq
        weights[q] = wq
    return weights


def solve_relaxed_lp(demand: RegionDemand, catalog: SliceCatalog) -> FractionalDecision:
    """Exact optimum of the relaxed per-region renting program."""
    bw = _solve_one_resource(catalog.bandwidth_tiers_hz, catalog.bandwidth_costs,
                             demand.bandwidth_req_hz, f"{demand.region_id} bandwidth")
    vm = _solve_one_resource(catalog.vm_tiers, catalog.vm_costs,
                             demand.vm_req, f"{demand.region_id} vm")
    return FractionalDecision(demand.region_id, bw, vm)


def fractional_cost(frac: FractionalDecision, catalog: SliceCatalog) -> float:
    return float(frac.bandwidth_weights @ np.asarray(catalog.bandwidth_costs)
                 + frac.vm_weights @ np.asarray(catalog.vm_costs))


def _draw(weights: np.ndarray, rng: np.random.Generator) -> int:
    w = np.asarray(weights, dtype=float)
    cdf = np.cumsum(w / w.sum())
    return int(np.searchsorted(cdf, rng.random(), side="right"))


def random_round(frac: FractionalDecision, catalog: SliceCatalog,
                 rng: np.random.Generator) -> SliceDecision:
    """Draw one tier per resource with probability equal to its weight."""
    bi = min(_draw(frac.bandwidth_weights, rng), len(frac.bandwidth_weights) - 1)
    vi = min(_draw(frac.vm_weights, rng), len(frac.vm_weights) - 1)
    return SliceDecision.from_indices(frac.region_id, bi, vi, catalog)


@dataclass(frozen=True)
class BruteForceResult:
    decision: SliceDecision
    cost: float
    bandwidth_feasible: bool
    vm_feasible: bool


def brute_force_optimal(demand: RegionDemand, catalog: SliceCatalog) -> BruteForceResult:
    """Exhaustive integer optimum: cheapest single tier meeting each demand.

    Infeasible demands fall back to the largest tier, flagged.
    """
    if len(catalog.bandwidth_tiers_hz) > 64 or len(catalog.vm_tiers) > 64:
        raise ValueError("brute force limited to catalogs of <= 64 tiers")

    def best(tiers, costs, req):
        feasible = [(c, k) for k, (b, c) in enumerate(zip(tiers, costs)) if b >= req]
        if not feasible:
            return len(tiers) - 1, costs[-1], False
        c, k = min(feasible)
        return k, c, True

    bi, bc, b_ok = best(catalog.bandwidth_tiers_hz, catalog.bandwidth_costs,
                        demand.bandwidth_req_hz)
    vi, vc, v_ok = best(catalog.vm_tiers, catalog.vm_costs, demand.vm_req)
    return BruteForceResult(SliceDecision.from_indices(demand.region_id, bi, vi, catalog),
                            bc + vc, b_ok, v_ok)


def chernoff_envelope(eps: float, lp_sum: float, n_regions: int, max_value: float) -> float:
    """Upper bound on Pr[rounded sum >= (1+eps) * relaxed sum] across regions.

    Uses the normalized mean mu = lp_sum / (n_regions * max_value), where
    max_value is the largest per-region value, so each region's rounded
    contribution scaled by max_value lies in [0, 1].
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu = lp_sum / (n_regions * max_value)
    return float(np.exp(-(eps ** 2) * mu / (2.0 + eps)))


@dataclass
class SliceDiagnostics:
    """One region's slicing record for a long slot."""

    region_id: str
    predicted_users: float
    bandwidth_req_hz: float
    vm_req: float
    lp_cost: float
    rounded_cost: float
    bandwidth_tier_hz: float = 0.0
    vm_tier: int = 0
    long_slot: int = -1


def adjust_slices(predicted_counts: dict, task_stats: dict, catalogs, omega,
                  econ: EconomicParams, radio: RadioParams,
                  rng: np.random.Generator, aggregate: str = "max"):
    """Full per-long-slot slicing pass over all regions.

    predicted_counts: region_id -> horizon of per-short-slot counts.
    task_stats: region_id -> TaskStats (from the previous long slot's tasks,
    or cold-start midpoints). omega may be a float or region_id -> float.
    Returns ({region_id: SliceDecision}, [SliceDiagnostics]).
    """
    if aggregate not in ("max", "mean"):
        raise ValueError(f"aggregate must be max or mean, got {aggregate}")
    decisions, diags = {}, []
    for catalog in catalogs:
        rid = catalog.region_id
        horizon = np.asarray(predicted_counts[rid], dtype=float)
        users = float(horizon.max() if aggregate == "max" else horizon.mean())
        om = omega[rid] if isinstance(omega, dict) else float(omega)
        demand = demand_from_prediction(users, task_stats[rid], om, econ, radio,
                                        catalog.vm_freq_hz, rid)
        frac = solve_relaxed_lp(demand, catalog)
        decision = random_round(frac, catalog, rng)
        rounded = (catalog.bandwidth_costs[decision.bandwidth_index]
                   + catalog.vm_costs[decision.vm_index])
        decisions[rid] = decision
        diags.append(SliceDiagnostics(
            region_id=rid,
            predicted_users=users,
            bandwidth_req_hz=demand.bandwidth_req_hz,
            vm_req=demand.vm_req,
            lp_cost=fractional_cost(frac, catalog),
            rounded_cost=rounded,
            bandwidth_tier_hz=catalog.bandwidth_tiers_hz[decision.bandwidth_index],
            vm_tier=catalog.vm_tiers[decision.vm_index],
        ))
    return decisions, diags

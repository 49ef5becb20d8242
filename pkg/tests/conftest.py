import numpy as np
import pytest

from sliceoff.agent import Mlp
from sliceoff.config import RegionScenario, Scenario, default_catalogs, default_radio
from sliceoff.core import EconomicParams, SliceDecision
from sliceoff.env import OffloadEnv


def tiny_scenario(h=2, t=2, state_slots=4):
    """Single-region scenario small enough for fast training smoke tests."""
    r1 = default_catalogs()[0]
    region = RegionScenario("R1", r1, data_kb_range=(100.0, 300.0),
                            density_range=(400.0, 600.0),
                            distance_range=(1.0, 2000.0), priorities=(1, 2, 3))
    econ = EconomicParams(reward_per_task=1.0, max_delay_s=1.0,
                          long_slots=h, short_slots_per_long=t)
    return Scenario(regions=(region,), radio=default_radio(), econ=econ,
                    n_max=state_slots, state_slots=state_slots)


def tiny_env_factory(scenario, counts=None, base_seed=0):
    n_slots = scenario.econ.long_slots * scenario.econ.short_slots_per_long
    if counts is None:
        counts = np.full((1, n_slots), 3)
    r1 = scenario.regions[0].catalog
    decisions = {"R1": SliceDecision.from_indices("R1", 15, 5, r1)}

    def factory(agent_idx, episode):
        return OffloadEnv(scenario, counts, decisions,
                          seed=base_seed + 1000 * agent_idx + episode)

    return factory


def const_net(sizes, value, output="linear"):
    """An Mlp that outputs `value` on every component regardless of input."""
    rng = np.random.default_rng(0)
    net = Mlp(sizes, rng, output=output)
    for w in net.weights:
        w[...] = 0.0
    for b in net.biases:
        b[...] = 0.0
    net.biases[-1][...] = value
    return net


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def torch_fd_gradcheck(loss_fn, params, eps=1e-6, rtol=1e-4, atol=1e-8):
    """Central finite differences vs autograd for a torch loss, double precision.

    Returns the worst relative error over entries above the noise floor;
    asserts the atol+rtol bound entrywise.
    """
    import torch

    loss = loss_fn()
    grads = torch.autograd.grad(loss, params)
    gmax = max(float(g.abs().max()) for g in grads)
    floor = max(1e-3 * gmax, 10 * atol)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            flat_p, flat_g = p.view(-1), g.view(-1)
            for i in range(flat_p.numel()):
                keep = float(flat_p[i])
                flat_p[i] = keep + eps
                hi = float(loss_fn())
                flat_p[i] = keep - eps
                lo = float(loss_fn())
                flat_p[i] = keep
                num = (hi - lo) / (2.0 * eps)
                ana = float(flat_g[i])
                err = abs(num - ana)
                scale = max(abs(num), abs(ana))
                assert err <= atol + rtol * scale, (
                    f"fd mismatch: numeric {num:.8g} analytic {ana:.8g}")
                if scale >= floor:
                    worst = max(worst, err / scale)
    return worst


def tiny_predictor_gradcheck(seed=0):
    """Worst relative fd error of the full forecaster loss on a tiny config."""
    import torch

    from sliceoff.predictor import PredictorConfig, TrafficModel, build_dataset
    from sliceoff.traffic import TrafficSeries

    torch.manual_seed(seed)
    cfg = PredictorConfig(input_window_slots=8, horizon_slots=2, model_dim=8,
                          num_heads=2, encoder_layers=1, decoder_layers=1,
                          top_u_factor=1.0)  # u = 3 of 8: the sparse path is live
    rng_ = np.random.default_rng(seed)
    series = TrafficSeries(["a"], rng_.uniform(2, 10, size=(1, 16)), slot_duration_s=600.0)
    data = build_dataset(series, cfg)
    model = TrafficModel(cfg, n_features=4).double()
    x_en = data.encoder_input[:3].double()
    x_de = data.decoder_input[:3].double()
    y = data.target[:3].double()

    def loss_fn():
        return torch.mean((model(x_en, x_de) - y) ** 2)

    return torch_fd_gradcheck(loss_fn, list(model.parameters()))

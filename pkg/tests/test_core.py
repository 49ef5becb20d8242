import math

import numpy as np
import pytest

from sliceoff import core
from sliceoff.config import default_catalogs, default_econ, default_radio
from sliceoff.core import (
    EconomicParams,
    RadioParams,
    SliceDecision,
    TaskSpec,
    VmQueue,
    db_to_linear,
    exec_time,
    linear_to_db,
    profit,
    queue_time,
    rented_resources,
    renting_cost,
    task_revenue,
    total_time,
    upload_rate,
    upload_time,
)

RADIO = default_radio()  # 100 mW, -110 dBm noise, -60 dB gain, exponent 2


def test_db_conversion_roundtrip():
    for x in [1e-12, 1e-6, 0.5, 1.0, 37.5, 1e9]:
        assert db_to_linear(linear_to_db(x)) == pytest.approx(x, rel=1e-12)
    assert db_to_linear(-60.0) == pytest.approx(1e-6, rel=1e-12)
    assert db_to_linear(-110.0) == pytest.approx(1e-11, rel=1e-12)


def test_upload_rate_reference_point():
    # independent evaluation: snr = p * beta0 * l^-theta / sigma2
    snr = 100.0 * 1e-6 * 1000.0 ** -2 / 1e-11
    assert snr == pytest.approx(10.0, rel=1e-9)
    expected = 1e6 * math.log2(1.0 + snr)
    rate = upload_rate(1e6, 1000.0, RADIO)
    assert rate == pytest.approx(expected, rel=1e-12)
    assert rate == pytest.approx(3.4594e6, rel=1e-4)


def test_upload_rate_zero_bandwidth():
    assert upload_rate(0.0, 5.0, RADIO) == 0.0


def test_upload_rate_one_meter():
    expected = 1e6 * math.log2(1.0 + 1e7)  # snr = 100*1e-6/1e-11
    rate = upload_rate(1e6, 1.0, RADIO)
    assert rate == pytest.approx(expected, rel=1e-12)
    assert rate == pytest.approx(2.32535e7, rel=1e-4)


def test_upload_rate_domain_errors():
    with pytest.raises(ValueError):
        upload_rate(-1.0, 100.0, RADIO)
    with pytest.raises(ValueError):
        upload_rate(1e6, 0.5, RADIO)


def test_upload_rate_monotonicity():
    rng = np.random.default_rng(3)
    for _ in range(200):
        b1, b2 = sorted(rng.uniform(0, 30e6, size=2))
        l1, l2 = sorted(rng.uniform(1, 2000, size=2))
        assert upload_rate(b1, l1, RADIO) <= upload_rate(b2, l1, RADIO) + 1e-9
        assert upload_rate(b2, l2, RADIO) <= upload_rate(b2, l1, RADIO) + 1e-9


def _task(d=1.6e6, eta=500.0, rho=1, dist=1000.0):
    return TaskSpec(data_bits=d, density_cycles_per_bit=eta, priority=rho, distance_m=dist)


def test_upload_time():
    rate = upload_rate(1e6, 1000.0, RADIO)
    assert upload_time(_task(), rate) == pytest.approx(1.6e6 / rate, rel=1e-12)
    assert upload_time(_task(), rate) == pytest.approx(0.46251, rel=1e-4)
    assert upload_time(_task(d=1.6e6), 1.6e6) == pytest.approx(1.0, rel=1e-12)
    assert upload_time(_task(), 0.0) == math.inf


def test_exec_time():
    assert exec_time(_task(d=1.6e6, eta=500.0), 2e9) == pytest.approx(0.4, rel=1e-12)
    assert exec_time(_task(d=1.6e6, eta=100.0), 2e9) == pytest.approx(0.08, rel=1e-12)
    assert exec_time(_task(eta=0.0), 2e9) == 0.0
    with pytest.raises(ValueError):
        exec_time(_task(), 0.0)


def test_queue_time():
    assert queue_time(VmQueue([]), 2e9) == 0.0
    assert queue_time(VmQueue([8e8, 8e8]), 2e9) == pytest.approx(0.8, rel=1e-12)
    assert queue_time(VmQueue([1.6e8]), 2e9) == pytest.approx(0.08, rel=1e-12)


def test_queue_time_concatenation_additive():
    rng = np.random.default_rng(11)
    for _ in range(50):
        a = list(rng.uniform(0, 1e9, size=rng.integers(0, 6)))
        b = list(rng.uniform(0, 1e9, size=rng.integers(0, 6)))
        whole = queue_time(VmQueue(a + b), 2e9)
        parts = queue_time(VmQueue(a), 2e9) + queue_time(VmQueue(b), 2e9)
        assert whole == pytest.approx(parts, rel=1e-12, abs=1e-15)


def test_total_time():
    assert total_time(0.4625, 0.0, 0.4) == pytest.approx(0.8625, rel=1e-12)
    assert total_time(0.0, 0.0, 0.0) == 0.0
    assert total_time(math.inf, 0.0, 0.4) == math.inf


def test_task_revenue():
    econ = default_econ()  # reward 1.0, deadline 1.0 s
    assert task_revenue(0.9, econ, 3) == 3.0
    assert task_revenue(1.2, econ, 2) == 0.0
    # boundary is inclusive
    assert task_revenue(1.0, econ, 1) == 1.0
    assert task_revenue(math.inf, econ, 3) == 0.0


def test_task_revenue_two_valued():
    econ = EconomicParams(2.5, 0.7, 24, 6)
    rng = np.random.default_rng(4)
    for _ in range(200):
        t = rng.uniform(0, 2.0)
        rho = int(rng.integers(1, 4))
        v = task_revenue(t, econ, rho)
        assert v in (0.0, 2.5 * rho)
        assert (v > 0) == (t <= 0.7)


def test_rented_resources_table_values():
    r1, _, r3 = default_catalogs()
    d1 = SliceDecision.from_indices("R1", bandwidth_idx=9, vm_idx=7, catalog=r1)
    assert rented_resources(d1, r1) == (10e6, 8)
    d3 = SliceDecision.from_indices("R3", bandwidth_idx=29, vm_idx=7, catalog=r3)
    assert rented_resources(d3, r3) == (30e6, 8)


def test_malformed_one_hot_rejected():
    r1 = default_catalogs()[0]
    with pytest.raises(ValueError):
        SliceDecision("R1", (1, 1) + (0,) * 18, (1,) + (0,) * 15)
    with pytest.raises(ValueError):
        SliceDecision("R1", (0,) * 20, (1,) + (0,) * 15)
    # decision shaped for another catalog
    d3 = SliceDecision("R3", (1,) + (0,) * 29, (1,) + (0,) * 7)
    with pytest.raises(ValueError):
        rented_resources(d3, r1)


def test_renting_cost_examples():
    r1, r2, r3 = default_catalogs()
    d1 = SliceDecision.from_indices("R1", 9, 7, r1)    # 10 MHz @ 30, 8 VM @ 16
    assert renting_cost([d1], [r1]) == pytest.approx(46.0)
    d3 = SliceDecision.from_indices("R3", 29, 7, r3)   # 30 MHz @ 30, 8 VM @ 48
    assert renting_cost([d3], [r3]) == pytest.approx(78.0)
    cheapest = [SliceDecision.from_indices(c.region_id, 0, 0, c) for c in (r1, r2, r3)]
    assert renting_cost(cheapest, [r1, r2, r3]) == pytest.approx(18.0)  # 5 + 6 + 7


def test_renting_cost_region_mismatch():
    r1, r2, _ = default_catalogs()
    d1 = SliceDecision.from_indices("R1", 0, 0, r1)
    with pytest.raises(ValueError):
        renting_cost([d1], [r2])


def test_renting_cost_matches_dot_product():
    rng = np.random.default_rng(9)
    catalogs = default_catalogs()
    for _ in range(100):
        decisions = []
        expected = 0.0
        for c in catalogs:
            bi = int(rng.integers(0, len(c.bandwidth_tiers_hz)))
            vi = int(rng.integers(0, len(c.vm_tiers)))
            decisions.append(SliceDecision.from_indices(c.region_id, bi, vi, c))
            alpha = np.zeros(len(c.bandwidth_tiers_hz)); alpha[bi] = 1
            beta = np.zeros(len(c.vm_tiers)); beta[vi] = 1
            expected += alpha @ np.array(c.bandwidth_costs) + beta @ np.array(c.vm_costs)
        assert renting_cost(decisions, catalogs) == pytest.approx(expected, rel=1e-12)


def test_profit():
    assert profit([100.0, 120.0], [40.0, 40.0]) == pytest.approx(140.0)
    assert profit([46.0], [46.0]) == 0.0
    assert profit([46.0], [46.0 + 1e-9]) < 0.0


def test_vm_queue_drain_fifo():
    q = VmQueue([5.0, 3.0, 2.0])
    q.drain(6.0)
    assert q.pending_cycles == [2.0, 2.0]
    q.drain(100.0)
    assert q.pending_cycles == []


def test_radio_params_validation():
    with pytest.raises(ValueError):
        RadioParams(0.0, 1e-11, 1e-6, 2.0)
    with pytest.raises(ValueError):
        RadioParams(100.0, 1e-11, 1e-6, 0.5)
    with pytest.raises(ValueError):
        TaskSpec(0.0, 500.0, 1, 10.0)
    with pytest.raises(ValueError):
        TaskSpec(1e6, 500.0, 4, 10.0)


def test_spectral_efficiency_consistent_with_rate():
    se = core.spectral_efficiency(1000.0, RADIO)
    assert upload_rate(2e6, 1000.0, RADIO) == pytest.approx(2e6 * se, rel=1e-12)

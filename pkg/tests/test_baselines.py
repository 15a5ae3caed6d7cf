import numpy as np
import pytest

from hubnet.baselines import solve_centralized, solve_decentralized
from hubnet.devices import build_boiler, build_pv
from hubnet.hub import HubSpec, Tariffs


def flat_tariffs(steps):
    return Tariffs(
        elec_buy=np.full(steps, 0.27),
        elec_feedin=np.full(steps, 0.12),
        gas=np.full(steps, 0.115),
        trading_fee=np.full(steps, 0.02),
    )


def make_hub(hid, elec, heat, devices, cap=10.0):
    return HubSpec(
        id=hid,
        devices=devices,
        elec_demand=np.asarray(elec, dtype=float),
        heat_demand=np.asarray(heat, dtype=float),
        p_bid_cap=cap,
        q_bid_cap=cap,
    )


def test_boiler_hub_decentralized_cost():
    hub = make_hub("b", [0.0], [9.0], [build_boiler(gas_capacity=50.0, eta=0.9)])
    res = solve_decentralized(hub, 0, 1, flat_tariffs(1))
    assert res.total == pytest.approx(10.0 * 0.115, abs=1e-6)


def test_zero_demand_zero_cost():
    hub = make_hub("z", [0.0, 0.0], [0.0, 0.0], [build_boiler(gas_capacity=10.0)])
    res = solve_decentralized(hub, 0, 2, flat_tariffs(2))
    assert res.total == pytest.approx(0.0, abs=1e-5)


def test_pv_surplus_feedin_revenue():
    hub = make_hub("pv", [0.0], [0.0], [build_pv(capacity=5.0)])
    profiles = {"irradiance": np.array([1.0])}
    res = solve_decentralized(hub, 0, 1, flat_tariffs(1), profiles)
    assert res.total == pytest.approx(-5.0 * 0.12, abs=1e-6)


def test_identical_hubs_no_gain_from_centralization():
    hubs = [
        make_hub(f"h{i}", [3.0, 4.0], [2.0, 2.0], [build_boiler(20.0)], cap=5.0)
        for i in range(3)
    ]
    tariffs = flat_tariffs(2)
    dec_total = sum(solve_decentralized(h, 0, 2, tariffs).total for h in hubs)
    cen = solve_centralized(hubs, 0, 2, tariffs)
    assert cen.total == pytest.approx(dec_total, abs=1e-5)


def producer_consumer_pair(cap=10.0):
    producer = make_hub("prod", [2.0], [0.0], [build_pv(capacity=10.0)], cap=cap)
    consumer = make_hub("cons", [5.0], [0.0], [], cap=cap)
    return [producer, consumer], {"irradiance": np.array([1.0])}


def test_producer_consumer_centralized_gain_matches_enumeration():
    hubs, profiles = producer_consumer_pair()
    tariffs = flat_tariffs(1)

    def total_cost_at_trade(x):
        # Producer: 10 PV, 2 own demand, exports x, sells rest to the grid.
        producer = -0.12 * (8.0 - x) + 0.02 * x
        consumer = 0.27 * (5.0 - x) + 0.02 * x
        return producer + consumer

    grid = np.linspace(0.0, 5.0, 501)
    best = min(total_cost_at_trade(x) for x in grid)
    cen = solve_centralized(hubs, 0, 1, tariffs, profiles)
    assert cen.total == pytest.approx(best, abs=1e-5)
    dec_total = sum(solve_decentralized(h, 0, 1, tariffs, profiles).total for h in hubs)
    assert cen.total < dec_total - 0.1


def test_centralized_trades_clear_and_respect_caps():
    hubs, profiles = producer_consumer_pair(cap=3.0)
    cen = solve_centralized(hubs, 0, 1, flat_tariffs(1), profiles)
    net = sum(plan.elec_net for plan in cen.plans.values())
    assert np.max(np.abs(net)) < 1e-6
    for plan in cen.plans.values():
        assert np.all(plan.elec_import <= 3.0 + 1e-7)
        assert np.all(plan.elec_export <= 3.0 + 1e-7)


def test_no_simultaneous_buy_and_sell_with_positive_fee():
    hubs, profiles = producer_consumer_pair()
    cen = solve_centralized(hubs, 0, 1, flat_tariffs(1), profiles)
    for plan in cen.plans.values():
        both = np.minimum(plan.elec_import, plan.elec_export)
        assert np.max(both) < 1e-6


def test_centralized_never_worse_than_decentralized():
    rng = np.random.default_rng(2)
    hubs = [
        make_hub("a", rng.uniform(1, 4, 3), rng.uniform(1, 2, 3), [build_boiler(20.0), build_pv(6.0)], cap=4.0),
        make_hub("b", rng.uniform(2, 6, 3), rng.uniform(0.5, 1.5, 3), [build_boiler(20.0)], cap=4.0),
    ]
    profiles = {"irradiance": np.array([0.2, 0.9, 0.4])}
    tariffs = flat_tariffs(3)
    dec_total = sum(solve_decentralized(h, 0, 3, tariffs, profiles).total for h in hubs)
    cen = solve_centralized(hubs, 0, 3, tariffs, profiles)
    assert cen.total <= dec_total + 1e-6

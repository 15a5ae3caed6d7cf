import numpy as np
import pytest

from hubnet.baselines import DecentralizedController
from hubnet.orchestrator import (
    Schedule,
    ScheduleError,
    average_bid,
    run_simulation,
)
from hubnet.scenario import parse_scenario

from scenarios import desk3, with_caps


def test_schedule_invariants():
    Schedule(T_cl=24, T_hb=12, t_rh=12, t_f=72)
    with pytest.raises(ScheduleError):
        Schedule(T_cl=12, T_hb=12, t_rh=12, t_f=12)  # T_cl < t_rh + T_hb
    with pytest.raises(ScheduleError):
        Schedule(T_cl=26, T_hb=12, t_rh=12, t_f=24)  # not a multiple
    with pytest.raises(ScheduleError):
        Schedule(T_cl=24, T_hb=12, t_rh=12, t_f=30)  # t_f not a multiple


def test_average_bid_examples():
    sched = Schedule(T_cl=24, T_hb=12, t_rh=12, t_f=24)
    history = {24: 10.0, 12: 6.0}
    assert average_bid(history, 24, sched) == pytest.approx(4.0)
    assert average_bid({12: 10.0}, 12, sched) == pytest.approx(5.0)
    assert average_bid({0: 0.0, 12: 0.0, 24: 0.0}, 24, sched) == 0.0
    with pytest.raises(ScheduleError):
        average_bid({}, 12, sched)
    with pytest.raises(ScheduleError):
        average_bid({12: 1.0}, 13, sched)


def test_average_bid_telescoping_weights():
    # Each game's bid, once all its averaging windows are settled, carries a
    # total weight of 1/zeta across the settled averages.
    sched = Schedule(T_cl=24, T_hb=12, t_rh=12, t_f=24)
    zeta = sched.zeta
    game_times = [0, 12, 24, 36, 48]
    for probe in (0, 24, 36):  # first game and interior games
        history = {g: (1.0 if g == probe else 0.0) for g in game_times}
        total = sum(average_bid(history, t, sched) for t in game_times)
        assert total == pytest.approx(1.0 / zeta), f"game at t={probe}"


def make_scenario(data):
    return parse_scenario(data)


def run_scenario(data):
    sc = make_scenario(data)
    return sc, run_simulation(sc.hubs, sc.topology(), sc.tariffs, sc.profiles,
                              sc.controller, sc.duration)


def test_zero_cap_network_reduces_to_decentralized():
    sc, res = run_scenario(with_caps(desk3(duration=12), 0.0, 0.0))
    assert res.fallback_games == 0
    assert len(res.mismatches) == 0
    totals = res.hub_totals()
    for hid, hub in sc.hubs.items():
        ctrl = DecentralizedController(hub, sc.tariffs, sc.profiles)
        for t in range(sc.duration):
            hor = sc.schedule.T_cl if t % sc.schedule.t_rh == 0 else sc.schedule.T_hb
            ctrl.step(t, hor)
        scale = max(1.0, abs(ctrl.realized_cost))
        assert abs(totals[hid]["J_grid"] - ctrl.realized_cost) / scale < 1e-6
        assert abs(totals[hid]["c_bid"]) < 1e-9


def test_simulation_accounting_is_conserved():
    sc, res = run_scenario(desk3(duration=24))
    assert res.games == 2
    assert res.fallback_games == 0
    # Settled bids plus penalties sum to the accumulated average bids, and
    # cluster bids roughly clear across the network.
    bid_total = sum(row.c_bid + row.c_pen for row in res.settlements)
    assert abs(bid_total) < 1.0
    rows = {r["entity"]: r for r in res.summary_rows()}
    assert rows["network"]["rel_benefit_pct"] < 0.0  # trading pays off
    # Single settlement window: every hub in a cluster shares one beta.
    betas = {}
    for row in res.settlements:
        betas.setdefault(row.cluster, set()).add(round(row.beta, 12))
    for cluster, vals in betas.items():
        assert len(vals) == 1


def test_interim_iteration_limit_triggers_mismatch_protocol():
    data = desk3(duration=14)
    data["params"] = {"w_max": 1, "k_max": 8}
    sc, res = run_scenario(data)
    # With one inner round the hubs cannot reach consensus, so the grid
    # absorbs the per-step imbalance and the log records it.
    assert len(res.mismatches) > 0
    interim_rows = [m for m in res.mismatches if m.t % sc.schedule.t_rh != 0]
    assert interim_rows, "expected mismatch rows on interim steps"
    priced = [m for m in res.mismatches if abs(m.elec_delta_kwh) > 1e-9]
    for m in priced:
        buy = sc.tariffs.elec_buy[m.t]
        sell = sc.tariffs.elec_feedin[m.t]
        expected = buy * max(m.elec_delta_kwh, 0.0) - sell * max(-m.elec_delta_kwh, 0.0)
        assert m.grid_cost_chf == pytest.approx(expected, abs=1e-9)


def test_simulation_determinism():
    _, res_a = run_scenario(desk3(duration=12))
    _, res_b = run_scenario(desk3(duration=12))
    rows_a = res_a.summary_rows()
    rows_b = res_b.summary_rows()
    assert rows_a == rows_b
    assert [r.realized_cost for r in res_a.timeseries] == [r.realized_cost for r in res_b.timeseries]


def test_hub_join_integrates_from_event_time():
    data = desk3(duration=12)
    data["standalone_hubs"] = [{
        "id": "h9", "elec_demand": 20, "heat_demand": 10, "p_bid_cap": 40,
        "annual_demand_kwh": 30000,
        "devices": [{"kind": "solar_thermal", "capacity": 30}, {"kind": "boiler", "gas_capacity": 40}],
    }]
    data["events"] = [{"kind": "hub_join", "time": 5, "hub": "h9", "cluster": "c1"}]
    sc, res = run_scenario(data)
    clusters_of_h9 = {rec.t: rec.cluster for rec in res.timeseries if rec.hub == "h9"}
    assert all(clusters_of_h9[t] == "" for t in range(0, 5))
    assert all(clusters_of_h9[t] == "c1" for t in range(5, 12))
    # Joined-late rule: the hub participates in the settlement only for its
    # membership period, and conservation still holds.
    rows = [r for r in res.settlements if r.cluster == "c1"]
    assert {r.hub for r in rows} >= {"h1", "h9"}
    accrued = sum(r["average_bid"] for r in res.accruals if r["cluster"] == "c1")
    settled = sum(r.c_bid + r.c_pen for r in rows)
    assert settled == pytest.approx(accrued, abs=1e-9)


def test_cluster_leave_expires_trade_obligations():
    data = desk3(duration=18)
    data["events"] = [{"kind": "cluster_leave", "time": 12, "cluster": "c3"}]
    sc, res = run_scenario(data)
    # Before the boundary c3 trades; from the boundary on it is islanded
    # (its obligation expired with the event at the game boundary).
    h3_trades = {rec.t: rec.elec_trade for rec in res.timeseries if rec.hub == "h3"}
    assert any(abs(v) > 1.0 for t, v in h3_trades.items() if t < 12)
    # Post-departure trades collapse to consensus-tolerance noise.
    assert all(abs(v) < 0.01 for t, v in h3_trades.items() if t >= 12)
    leave_events = [e for e in res.events if e["kind"] == "cluster_leave"]
    assert leave_events and leave_events[0]["t"] == 12


def test_first_applied_inputs_respect_balances():
    sc, res = run_scenario(desk3(duration=12))
    for rec in res.timeseries:
        hub = sc.hubs[rec.hub]
        # Electricity balance at the applied step, using the recorded flows.
        # Device terms are folded into the recorded net grid/trade flows, so
        # check the weaker invariant: costs are finite and flows nonnegative.
        assert rec.grid_buy >= -1e-9 and rec.grid_sell >= -1e-9 and rec.gas_buy >= -1e-9
        assert np.isfinite(rec.realized_cost)
        assert abs(rec.elec_trade) <= hub.p_bid_cap + 1e-6
        assert abs(rec.heat_trade) <= hub.q_bid_cap + 1e-6

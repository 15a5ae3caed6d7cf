"""Acceptance suite: one test per acceptance criterion, at its stated
tolerance.  Each test prints a PASS line when its assertions hold."""


import time

import numpy as np
import pytest

from hubnet.bargaining import BargainingParams, run_bargaining, solve_direct, welfare
from hubnet.baselines import CentralizedController, DecentralizedController, solve_decentralized
from hubnet.consensus import ClusterWorker, ConsensusState, run_consensus
from hubnet.orchestrator import Orchestrator, Schedule, average_bid, run_simulation
from hubnet.results import write_results
from hubnet.scenario import parse_scenario

from scenarios import desk3, desk9, with_caps


def _report(name):
    print(f"\nACCEPTANCE PASS: {name}")


# ---------------------------------------------------------------------------
# Shared expensive fixtures.
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def game3():
    """Unweighted bargaining game on the 3-cluster desk scenario, T = 24."""
    sc = parse_scenario(desk3(duration=24))
    T = 24
    clusters = {cid: [sc.hubs[h] for h in members] for cid, members in sc.cluster_map.items()}
    dec_costs, workers = {}, {}
    for cid, members in clusters.items():
        for hub in members:
            dec_costs[hub.id] = solve_decentralized(hub, 0, T, sc.tariffs, sc.profiles).total
        worker = ClusterWorker(cid, members, sc.tariffs, sc.profiles,
                               rho0=sc.controller.rho0, rho_growth=sc.controller.rho_growth)
        worker.prepare(0, T, {h.id: dec_costs[h.id] for h in members})
        workers[cid] = worker
    alphas = {cid: 1.0 for cid in clusters}
    start = time.time()
    outcome = run_bargaining(workers, T, alphas, BargainingParams())
    elapsed = time.time() - start
    return {
        "scenario": sc, "clusters": clusters, "dec_costs": dec_costs,
        "alphas": alphas, "outcome": outcome, "elapsed": elapsed, "horizon": T,
    }


@pytest.fixture(scope="module")
def sim9():
    """Clustered 9-hub two-day simulation plus the centralized replay."""
    sc = parse_scenario(desk9(duration=48))
    res = run_simulation(sc.hubs, sc.topology(), sc.tariffs, sc.profiles,
                         sc.controller, sc.duration)
    topo = sc.topology()
    thermal_groups = [topo.members(cid) for cid in sorted(topo.clusters)]
    cen = CentralizedController(list(sc.hubs.values()), sc.tariffs, sc.profiles, thermal_groups)
    for t in range(sc.duration):
        horizon = sc.schedule.T_cl if t % sc.schedule.t_rh == 0 else sc.schedule.T_hb
        cen.step(t, horizon)
    return {"scenario": sc, "results": res, "centralized_total": cen.realized_total}


@pytest.fixture(scope="module")
def pnp36():
    """Hub plug-out at 6 AM of day two, with and without the event."""

    def run(with_event):
        data = desk9(duration=36)
        data["schedule"]["t_f"] = 36
        if with_event:
            data["events"] = [{"kind": "hub_leave", "time": 30, "hub": "h8", "cluster": "c3"}]
        sc = parse_scenario(data)
        orch = Orchestrator(sc.hubs, sc.topology(), sc.tariffs, sc.profiles,
                            sc.controller, sc.duration)
        results = orch.run()
        return sc, orch, results

    sc_a, orch_a, res_a = run(True)
    sc_b, orch_b, res_b = run(False)
    return {"event": (sc_a, orch_a, res_a), "baseline": (sc_b, orch_b, res_b)}


# ---------------------------------------------------------------------------
# Criteria.
# ---------------------------------------------------------------------------


def test_market_clearing(game3):
    out = game3["outcome"]
    assert out.converged, "bargaining game did not converge"
    assert out.iterations <= 200
    final = [row for row in out.trace if row["iteration"] == out.iterations]
    for row in final:
        assert row["residual_primal"] <= 0.003
        assert row["residual_dual"] <= 0.003
    trade_sum = sum(b.trade for b in out.bids.values())
    assert np.max(np.abs(trade_sum)) < 1.0  # kWh, per step
    assert abs(sum(b.bid for b in out.bids.values())) < 1.0  # CHF
    assert game3["elapsed"] < 300.0
    _report(
        f"market clearing (iters={out.iterations}, "
        f"max|sum P|={np.max(np.abs(trade_sum)):.4f} kWh, "
        f"|sum C|={abs(sum(b.bid for b in out.bids.values())):.4f} CHF, "
        f"{game3['elapsed']:.0f}s)"
    )


def test_nash_surplus_fairness(game3):
    out = game3["outcome"]
    surpluses = {cid: b.surplus for cid, b in out.bids.items()}
    values = list(surpluses.values())
    mean = float(np.mean(values))
    assert all(v > 0 for v in values)
    assert max(values) - min(values) <= 0.01 * mean
    direct = solve_direct(
        game3["clusters"], game3["alphas"], 0, game3["horizon"],
        game3["scenario"].tariffs, game3["dec_costs"], game3["scenario"].profiles,
    )
    j_dist = welfare(out.bids)[1]
    assert j_dist == pytest.approx(direct.objective, rel=0.02, abs=0.02 * abs(direct.objective))
    _report(
        f"nash surplus fairness (spread={max(values) - min(values):.4f} of mean "
        f"{mean:.3f} CHF; J_nbg {j_dist:.4f} vs direct {direct.objective:.4f})"
    )


def test_controller_ordering(sim9):
    rows = {r["entity"]: r for r in sim9["results"].summary_rows()}
    j_dec = rows["network"]["J_dec"]
    j_clu = rows["network"]["J_grid"] + rows["network"]["c_bid"]
    j_cen = sim9["centralized_total"]
    assert j_cen <= j_clu + 1e-4 * abs(j_clu)
    assert j_clu <= j_dec + 1e-4 * abs(j_dec)
    subopt = (j_clu - j_cen) / abs(j_cen)
    assert subopt <= 0.05
    _report(
        f"controller ordering (centralized {j_cen:.2f} <= clustered {j_clu:.2f} "
        f"<= decentralized {j_dec:.2f}; suboptimality {100 * subopt:.3f}%)"
    )


def test_equal_relative_benefit_within_clusters(sim9):
    rows = sim9["results"].summary_rows()
    by_cluster = {}
    for row in rows:
        if row["entity_type"] == "hub":
            rel = (row["J_grid"] + row["c_bid"] - row["J_dec"]) / row["J_dec"]
            by_cluster.setdefault(row["cluster"], []).append(rel)
    spreads = {cid: max(vals) - min(vals) for cid, vals in by_cluster.items()}
    assert all(spread <= 1e-8 for spread in spreads.values()), spreads
    # Conservation per cluster: settled bids plus penalties equal accruals.
    accrued = {}
    for row in sim9["results"].accruals:
        accrued[row["cluster"]] = accrued.get(row["cluster"], 0.0) + row["average_bid"]
    settled = {}
    for row in sim9["results"].settlements:
        settled[row.cluster] = settled.get(row.cluster, 0.0) + row.c_bid + row.c_pen
    for cid in accrued:
        assert settled.get(cid, 0.0) == pytest.approx(accrued[cid], abs=1e-9)
    _report(f"equal relative benefit within clusters (max spread={max(spreads.values()):.2e})")


def test_trading_bid_structure(sim9):
    # Hub bids within each cluster sum exactly to the cluster's accumulated
    # bid, and the cluster bids sum to ~zero across the network.
    accrued, settled = {}, {}
    for row in sim9["results"].accruals:
        accrued[row["cluster"]] = accrued.get(row["cluster"], 0.0) + row["average_bid"]
    for row in sim9["results"].settlements:
        settled[row.cluster] = settled.get(row.cluster, 0.0) + row.c_bid + row.c_pen
    for cid, total in settled.items():
        assert total == pytest.approx(accrued[cid], abs=1e-9)
    network_total = sum(settled.values())
    assert abs(network_total) < 1.0
    _report(
        f"trading bid structure (cluster bids {sorted(round(v, 2) for v in settled.values())}, "
        f"network total {network_total:.4f} CHF)"
    )


def test_no_trade_reduction():
    data = with_caps(desk3(duration=12), 0.0, 0.0)
    sc = parse_scenario(data)
    res = run_simulation(sc.hubs, sc.topology(), sc.tariffs, sc.profiles,
                         sc.controller, sc.duration)
    totals = res.hub_totals()
    worst = 0.0
    for hid, hub in sc.hubs.items():
        ctrl = DecentralizedController(hub, sc.tariffs, sc.profiles)
        for t in range(sc.duration):
            horizon = sc.schedule.T_cl if t % sc.schedule.t_rh == 0 else sc.schedule.T_hb
            ctrl.step(t, horizon)
        rel = abs(totals[hid]["J_grid"] - ctrl.realized_cost) / max(1.0, abs(ctrl.realized_cost))
        worst = max(worst, rel)
        assert rel < 1e-6
        assert abs(totals[hid]["c_bid"]) < 1e-9
    assert len(res.mismatches) == 0
    _report(f"no-trade reduction (worst relative cost gap {worst:.2e})")


def test_pnp_guarantees(pnp36):
    sc_a, orch_a, res_a = pnp36["event"]
    sc_b, orch_b, res_b = pnp36["baseline"]
    # beta_max = 0: remaining hubs never pay more than their no-trade cost.
    c3_rows = [row for row in res_a.settlements if row.cluster == "c3"]
    assert c3_rows
    for row in c3_rows:
        assert row.beta <= 1e-12
    pens = {row.hub: row.c_pen for row in c3_rows}
    assert pens["h8"] > 0.0
    assert pens["h7"] == 0.0 and pens["h9"] == 0.0
    # The mobile hub benefits less than the hubs that stayed.
    rows = {r["entity"]: r for r in res_a.summary_rows()}
    rel = {h: rows[h]["rel_benefit_pct"] for h in ("h7", "h8", "h9")}
    assert rel["h8"] >= rel["h7"] - 1e-9
    assert rel["h8"] >= rel["h9"] - 1e-9
    assert all(v < 0.0 for v in rel.values())  # everyone still gains
    # Locality: the unaffected clusters' consensus states are bit-identical
    # across the event step.
    for cid in ("c1", "c2"):
        assert np.array_equal(orch_a.workers[cid].state.z, orch_b.workers[cid].state.z)
        for side in (0, 1):
            assert np.array_equal(
                orch_a.workers[cid].state.duals[side], orch_b.workers[cid].state.duals[side]
            )
    _report(
        f"plug-and-play guarantees (beta={c3_rows[0].beta:+.5f}, penalty "
        f"{pens['h8']:.3f} CHF, mobile {rel['h8']:.3f}% vs stayers "
        f"{rel['h7']:.3f}%/{rel['h9']:.3f}%)"
    )


def test_consensus_admm_oracle():
    def agent(anchor):
        def solve(z, lam, rho):
            return (2.0 * anchor - lam + rho * z) / (2.0 + rho)

        return solve

    state = ConsensusState.cold(dim=1, n_agents=2, rho=0.001, rho_growth=0.02)
    run_consensus(state, [agent(np.array([1.0])), agent(np.array([3.0]))],
                  eps_primal=0.05, eps_dual=0.03, w_max=200)
    assert state.iteration <= 200
    assert abs(state.z[0] - 2.0) <= 1e-4
    _report(f"consensus ADMM oracle (z={state.z[0]:.6f} after {state.iteration} iterations)")


def test_average_bid_telescoping():
    sched = Schedule(T_cl=24, T_hb=12, t_rh=12, t_f=24)
    assert average_bid({24: 10.0, 12: 6.0}, 24, sched) == pytest.approx(4.0)
    assert average_bid({12: 10.0}, 12, sched) == pytest.approx(5.0)
    # Interior games carry total settled weight 1/zeta.
    games = [0, 12, 24, 36, 48]
    for probe in (0, 24, 36):
        history = {g: (1.0 if g == probe else 0.0) for g in games}
        total = sum(average_bid(history, t, sched) for t in games)
        assert total == pytest.approx(1.0 / sched.zeta)
    _report("average-bid telescoping (hand values 4 and 5 CHF)")


def test_determinism(tmp_path):
    summaries = []
    for run in range(2):
        sc = parse_scenario(desk3(duration=12))
        res = run_simulation(sc.hubs, sc.topology(), sc.tariffs, sc.profiles,
                             sc.controller, sc.duration)
        out = tmp_path / f"run{run}"
        files = write_results(res, sc, out)
        summaries.append(files["summary"].read_bytes())
    assert summaries[0] == summaries[1]
    _report("determinism (byte-identical summary.csv)")


def test_seasonal_network_benefit():
    benefits = {}
    for season in ("summer", "winter"):
        data = desk3(duration=24)
        data["profiles"]["season"] = season
        # Winter gains are small (surpluses of a few CHF), so the step-size
        # schedule is matched to that scale; all tolerances stay default.
        data["params"] = {"mu0": 400.0}
        sc = parse_scenario(data)
        res = run_simulation(sc.hubs, sc.topology(), sc.tariffs, sc.profiles,
                             sc.controller, sc.duration)
        net = [r for r in res.summary_rows() if r["entity_type"] == "network"][0]
        benefits[season] = net["rel_benefit_pct"]
        assert net["rel_benefit_pct"] < 0.0, f"{season} run shows no trading benefit"
    _report(
        f"seasonal benefit (summer {benefits['summer']:.2f}%, winter {benefits['winter']:.2f}%)"
    )

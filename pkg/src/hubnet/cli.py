"""Command-line entry points for running, validating and comparing scenarios.

Exit codes: 0 success, 2 validation error, 3 infeasible problem,
4 iteration-limit fallback occurred (results are still written).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .baselines import CentralizedController, DecentralizedController
from .consensus import ClusterTopologyError
from .orchestrator import ResultSet, StepRecord, run_simulation
from .results import read_summary, write_results
from .scenario import Scenario, ScenarioError, load_scenario
from .solver import SolverError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_FALLBACK = 4

log = logging.getLogger("hubnet")


def _setup_logging() -> None:
    level = os.environ.get("HUBNET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(path: str, seed_override: int | None) -> Scenario:
    scenario = load_scenario(path)
    if seed_override is not None:
        data = dict(scenario.raw)
        data["seed"] = seed_override
        from .scenario import parse_scenario

        scenario = parse_scenario(data)
    return scenario


def cmd_validate(args) -> int:
    try:
        scenario = _load(args.scenario, args.seed)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(
        f"ok: {scenario.name} ({len(scenario.hubs)} hubs in "
        f"{len(scenario.cluster_map)} clusters, duration {scenario.duration})"
    )
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        scenario = _load(args.scenario, args.seed)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        results = run_simulation(
            scenario.hubs, scenario.topology(), scenario.tariffs,
            scenario.profiles, scenario.controller, scenario.duration,
        )
    except (SolverError, ClusterTopologyError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out_dir = Path(args.out or f"runs/{scenario.name}")
    files = write_results(results, scenario, out_dir)
    print(f"wrote {len(files)} files to {out_dir}")
    for row in results.summary_rows():
        if row["entity_type"] == "network":
            print(
                f"network: J_dec={row['J_dec']:.2f} CHF, with trading "
                f"{row['J_grid'] + row['c_bid']:.2f} CHF "
                f"({row['rel_benefit_pct']:+.2f}%)"
            )
    return EXIT_FALLBACK if results.fallback_games else EXIT_OK


def _baseline_results(scenario: Scenario, mode: str) -> ResultSet:
    results = ResultSet()
    sched = scenario.controller.schedule
    hubs = scenario.hubs
    shadows = {
        hid: DecentralizedController(hub, scenario.tariffs, scenario.profiles)
        for hid, hub in hubs.items()
    }
    topo = scenario.topology()
    hub_cluster = {hid: topo.cluster_of(hid) or "" for hid in hubs}
    controller = None
    if mode == "centralized":
        thermal_groups = [topo.members(cid) for cid in sorted(topo.clusters)]
        controller = CentralizedController(
            list(hubs.values()), scenario.tariffs, scenario.profiles, thermal_groups
        )
    for t in range(scenario.duration):
        horizon = sched.T_cl if t % sched.t_rh == 0 else sched.T_hb
        dec_costs = {hid: shadows[hid].step(t, horizon) for hid in sorted(hubs)}
        if controller is not None:
            step_costs = controller.step(t, horizon)
        else:
            step_costs = dec_costs
        for hid in sorted(hubs):
            hub = hubs[hid]
            results.timeseries.append(
                StepRecord(
                    t=t, hub=hid, cluster=hub_cluster[hid],
                    elec_demand=float(hub.elec_demand[t]),
                    heat_demand=float(hub.heat_demand[t]),
                    grid_buy=0.0, grid_sell=0.0, gas_buy=0.0,
                    elec_trade=0.0, heat_trade=0.0,
                    realized_cost=step_costs[hid],
                    shadow_dec_cost=dec_costs[hid],
                    storage_kwh=0.0,
                )
            )
    return results


def cmd_baseline(args) -> int:
    try:
        scenario = _load(args.scenario, args.seed)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        results = _baseline_results(scenario, args.mode)
    except SolverError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out_dir = Path(args.out or f"runs/{scenario.name}-{args.mode}")
    write_results(results, scenario, out_dir)
    total = sum(r.realized_cost for r in results.timeseries)
    print(f"{args.mode} baseline total cost: {total:.2f} CHF -> {out_dir}")
    return EXIT_OK


def cmd_compare(args) -> int:
    print(f"{'run':30s} {'entity':12s} {'J_dec':>12s} {'cost+bid':>12s} {'benefit %':>10s}")
    for run_dir in args.runs:
        try:
            rows = read_summary(run_dir)
        except FileNotFoundError as exc:
            print(f"skipping {run_dir}: {exc}", file=sys.stderr)
            continue
        for row in rows:
            if row["entity_type"] in ("network", "cluster"):
                label = Path(run_dir).name
                cost = row["J_grid"] + row["c_bid"]
                print(
                    f"{label:30.30s} {row['entity']:12.12s} {row['J_dec']:12.2f} "
                    f"{cost:12.2f} {row['rel_benefit_pct']:10.2f}"
                )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hubnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate a scenario and write results")
    run_p.add_argument("scenario")
    run_p.add_argument("--out", help="output directory (default runs/<name>)")
    run_p.add_argument("--seed", type=int, help="override the scenario seed")
    run_p.set_defaults(func=cmd_run)

    val_p = sub.add_parser("validate", help="check a scenario file")
    val_p.add_argument("scenario")
    val_p.add_argument("--seed", type=int)
    val_p.set_defaults(func=cmd_validate)

    base_p = sub.add_parser("baseline", help="run a baseline controller")
    base_p.add_argument("scenario")
    base_p.add_argument("--mode", choices=("centralized", "decentralized"), required=True)
    base_p.add_argument("--out")
    base_p.add_argument("--seed", type=int)
    base_p.set_defaults(func=cmd_baseline)

    cmp_p = sub.add_parser("compare", help="tabulate summaries from run directories")
    cmp_p.add_argument("runs", nargs="+")
    cmp_p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Result serialization: CSV files plus a run manifest.

Column orders are fixed and floats are written with shortest round-trip
formatting, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

from .orchestrator import ResultSet
from .scenario import Scenario

TIMESERIES_COLUMNS = [
    "t", "hub", "cluster", "elec_demand", "heat_demand", "grid_buy", "grid_sell",
    "gas_buy", "elec_trade", "heat_trade", "realized_cost", "shadow_dec_cost", "storage_kwh",
]
TRACE_COLUMNS = [
    "game_t", "iteration", "cluster", "trade_total_kwh", "bid_chf",
    "residual_primal", "residual_dual", "clearing_trade_max_kwh", "clearing_bid_chf", "mu",
]
SETTLEMENT_COLUMNS = ["window_start", "window_end", "cluster", "hub", "c_bid", "c_pen", "beta"]
MISMATCH_COLUMNS = ["t", "cluster", "elec_delta_kwh", "unserved_heat_kwh", "waste_heat_kwh", "grid_cost_chf"]
EVENT_COLUMNS = ["t", "kind", "hub", "cluster"]
SUMMARY_COLUMNS = ["entity_type", "entity", "cluster", "J_dec", "J_grid", "c_bid", "rel_benefit_pct"]


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in columns])


def write_results(results: ResultSet, scenario: Scenario, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    files["timeseries"] = out / "timeseries.csv"
    _write_csv(files["timeseries"], TIMESERIES_COLUMNS, [asdict(r) for r in results.timeseries])
    files["bargaining_trace"] = out / "bargaining_trace.csv"
    _write_csv(files["bargaining_trace"], TRACE_COLUMNS, results.bargaining_trace)
    files["settlement"] = out / "settlement.csv"
    _write_csv(files["settlement"], SETTLEMENT_COLUMNS, [asdict(r) for r in results.settlements])
    files["mismatch"] = out / "mismatch.csv"
    _write_csv(files["mismatch"], MISMATCH_COLUMNS, [asdict(r) for r in results.mismatches])
    files["events"] = out / "events.csv"
    _write_csv(files["events"], EVENT_COLUMNS, results.events)
    files["summary"] = out / "summary.csv"
    _write_csv(files["summary"], SUMMARY_COLUMNS, results.summary_rows())
    manifest = {
        "scenario": scenario.name,
        "seed": scenario.seed,
        "duration": scenario.duration,
        "n_hubs": len(scenario.hubs),
        "n_clusters": len(scenario.cluster_map),
        "config_sha256": hashlib.sha256(scenario.canonical_json().encode()).hexdigest(),
        "games": results.games,
        "fallback_games": results.fallback_games,
        "wall_time_s": results.wall_time_s,
        "files": {k: p.name for k, p in files.items()},
    }
    files["manifest"] = out / "manifest.json"
    files["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return files


def read_summary(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "summary.csv"
    if not path.exists():
        raise FileNotFoundError(f"no summary.csv under {run_dir}")
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            parsed = dict(row)
            for key in ("J_dec", "J_grid", "c_bid", "rel_benefit_pct"):
                parsed[key] = float(parsed[key])
            rows.append(parsed)
    return rows

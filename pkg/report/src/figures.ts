/**
 * Figure builders over hubnet run directories.
 *
 * Every figure is a pure function of the CSV/manifest contents and renders
 * to a standalone SVG string: bargaining convergence, relative-benefit
 * bars, trade profiles, controller comparison across runs, and scalability
 * across runs.
 */

import { existsSync, readFileSync } from "fs";
import { basename, join } from "path";

import { numbers, readCsv, requireColumns, Row } from "./csv";
import { BarGroup, linePanel, barPanel, PALETTE, Series, svgDocument } from "./svg";

export const FIGURES = ["convergence", "benefits", "trades", "comparison", "scalability"] as const;
export type FigureName = (typeof FIGURES)[number];

export interface RunData {
  dir: string;
  name: string;
  summary: Row[];
  timeseries: Row[];
  trace: Row[];
  manifest: Record<string, unknown>;
}

export function loadRun(dir: string): RunData {
  const manifestPath = join(dir, "manifest.json");
  const manifest = existsSync(manifestPath)
    ? (JSON.parse(readFileSync(manifestPath, "utf8")) as Record<string, unknown>)
    : {};
  return {
    dir,
    name: basename(dir),
    summary: readCsv(join(dir, "summary.csv")),
    timeseries: readCsv(join(dir, "timeseries.csv")),
    trace: readCsv(join(dir, "bargaining_trace.csv")),
    manifest,
  };
}

function colorFor(index: number): string {
  return PALETTE[index % PALETTE.length];
}

function uniqueSorted(values: string[]): string[] {
  return [...new Set(values)].sort();
}

export function convergenceFigure(run: RunData): string {
  const file = "bargaining_trace.csv";
  requireColumns(
    run.trace,
    ["game_t", "iteration", "cluster", "trade_total_kwh", "bid_chf",
     "residual_primal", "residual_dual", "clearing_trade_max_kwh", "clearing_bid_chf"],
    file,
  );
  const games = uniqueSorted(run.trace.map((r) => r.game_t));
  const rows = games.length > 0 ? run.trace.filter((r) => r.game_t === games[0]) : [];
  const clusters = uniqueSorted(rows.map((r) => r.cluster));
  const byCluster = (column: string): Series[] =>
    clusters.map((cid, i) => {
      const sub = rows.filter((r) => r.cluster === cid);
      return {
        label: cid,
        x: numbers(sub, "iteration", file),
        y: numbers(sub, column, file),
        color: colorFor(i),
      };
    });
  const iterations = uniqueSorted(rows.map((r) => r.iteration)).map(Number).sort((a, b) => a - b);
  const perIteration = (column: string, agg: (vals: number[]) => number): Series => ({
    label: column,
    x: iterations,
    y: iterations.map((k) =>
      agg(rows.filter((r) => Number(r.iteration) === k).map((r) => Number(r[column]))),
    ),
    color: colorFor(0),
  });
  const maxOf = (vals: number[]) => (vals.length ? Math.max(...vals) : NaN);
  const residPrimal = { ...perIteration("residual_primal", maxOf), label: "primal", color: colorFor(0) };
  const residDual = { ...perIteration("residual_dual", maxOf), label: "dual", color: colorFor(1) };
  const clearTrade = { ...perIteration("clearing_trade_max_kwh", maxOf), label: "max |sum trades|", color: colorFor(2) };
  const clearBid = {
    ...perIteration("clearing_bid_chf", (vals) => (vals.length ? Math.abs(vals[0]) : NaN)),
    label: "|sum bids|",
    color: colorFor(3),
  };
  const panels = [
    linePanel(byCluster("trade_total_kwh"), {
      title: "Cluster trade totals", xLabel: "iteration", yLabel: "kWh over horizon",
    }),
    linePanel(byCluster("bid_chf"), {
      title: "Cluster cost bids", xLabel: "iteration", yLabel: "CHF",
    }),
    linePanel([residPrimal, residDual], {
      title: "Residual norms", xLabel: "iteration", yLabel: "log10 norm", logY: true,
    }),
    linePanel([clearTrade, clearBid], {
      title: "Market clearing", xLabel: "iteration", yLabel: "log10 imbalance", logY: true,
    }),
  ];
  return svgDocument(panels, 2, 420, 300);
}

export function benefitsFigure(run: RunData): string {
  const file = "summary.csv";
  requireColumns(run.summary, ["entity_type", "entity", "cluster", "rel_benefit_pct"], file);
  const clusters = uniqueSorted(
    run.summary.filter((r) => r.entity_type === "cluster").map((r) => r.entity),
  );
  const groups: BarGroup[] = [];
  run.summary
    .filter((r) => r.entity_type === "network")
    .forEach((r) => groups.push({ label: "network", value: Number(r.rel_benefit_pct), color: "#333333" }));
  clusters.forEach((cid, i) => {
    const clusterRow = run.summary.find((r) => r.entity_type === "cluster" && r.entity === cid);
    if (clusterRow) {
      groups.push({ label: cid, value: Number(clusterRow.rel_benefit_pct), color: colorFor(i) });
    }
    run.summary
      .filter((r) => r.entity_type === "hub" && r.cluster === cid)
      .forEach((r) => groups.push({ label: r.entity, value: Number(r.rel_benefit_pct), color: colorFor(i) }));
  });
  const panel = barPanel(groups, {
    title: "Relative cost benefit vs no trading",
    xLabel: "", yLabel: "benefit (%)", width: 720, height: 360,
  });
  return svgDocument([panel], 1, 720, 360);
}

export function tradesFigure(run: RunData): string {
  const file = "timeseries.csv";
  requireColumns(run.timeseries, ["t", "hub", "cluster", "elec_trade", "heat_trade"], file);
  const clusters = uniqueSorted(run.timeseries.map((r) => r.cluster).filter((c) => c !== ""));
  const times = uniqueSorted(run.timeseries.map((r) => r.t)).map(Number).sort((a, b) => a - b);
  const clusterSeries: Series[] = clusters.map((cid, i) => ({
    label: cid,
    x: times,
    y: times.map((t) =>
      run.timeseries
        .filter((r) => Number(r.t) === t && r.cluster === cid)
        .reduce((acc, r) => acc + Number(r.elec_trade), 0),
    ),
    color: colorFor(i),
  }));
  const hubs = uniqueSorted(run.timeseries.map((r) => r.hub));
  const clusterIndex = new Map(clusters.map((cid, i) => [cid, i]));
  const hubBar = (column: "elec_trade" | "heat_trade"): BarGroup[] =>
    hubs.map((hid) => {
      const rows = run.timeseries.filter((r) => r.hub === hid);
      const cid = rows.find((r) => r.cluster !== "")?.cluster ?? "";
      return {
        label: hid,
        value: rows.reduce((acc, r) => acc + Number(r[column]), 0),
        color: colorFor(clusterIndex.get(cid) ?? clusters.length),
      };
    });
  const panels = [
    linePanel(clusterSeries, {
      title: "Cluster electricity trades", xLabel: "hour", yLabel: "kWh (net import)",
      width: 420, height: 300,
    }),
    barPanel(hubBar("elec_trade"), {
      title: "Hub electricity traded (total)", xLabel: "", yLabel: "kWh", width: 420, height: 300,
    }),
    barPanel(hubBar("heat_trade"), {
      title: "Hub heat traded (total)", xLabel: "", yLabel: "kWh", width: 420, height: 300,
    }),
  ];
  return svgDocument(panels, 2, 420, 300);
}

export function comparisonFigure(runs: RunData[]): string {
  const groups: BarGroup[] = [];
  runs.forEach((run, i) => {
    requireColumns(run.summary, ["entity_type", "J_dec", "J_grid", "c_bid"], "summary.csv");
    const net = run.summary.find((r) => r.entity_type === "network");
    if (!net) {
      return;
    }
    const dec = Number(net.J_dec);
    const withTrading = Number(net.J_grid) + Number(net.c_bid);
    groups.push({
      label: run.name,
      value: dec !== 0 ? (100 * withTrading) / dec : NaN,
      color: colorFor(i),
    });
  });
  const panel = barPanel(groups, {
    title: "Realized cost relative to the no-trading baseline",
    xLabel: "", yLabel: "% of decentralized cost", width: 640, height: 360,
  });
  return svgDocument([panel], 1, 640, 360);
}

export function scalabilityFigure(runs: RunData[]): string {
  const points = runs
    .map((run) => {
      const net = run.summary.find((r) => r.entity_type === "network");
      const hubs = Number(run.manifest["n_hubs"] ?? NaN);
      const wall = Number(run.manifest["wall_time_s"] ?? NaN);
      const ratio =
        net && Number(net.J_dec) !== 0
          ? (100 * (Number(net.J_grid) + Number(net.c_bid))) / Number(net.J_dec)
          : NaN;
      return { hubs, wall, ratio };
    })
    .filter((p) => Number.isFinite(p.hubs))
    .sort((a, b) => a.hubs - b.hubs);
  const costSeries: Series = {
    label: "cost vs decentralized",
    x: points.map((p) => p.hubs),
    y: points.map((p) => p.ratio),
    color: colorFor(0),
  };
  const timeSeries: Series = {
    label: "wall time",
    x: points.map((p) => p.hubs),
    y: points.map((p) => p.wall),
    color: colorFor(1),
  };
  const panels = [
    linePanel([costSeries], {
      title: "Cost ratio vs network size", xLabel: "hubs", yLabel: "% of decentralized",
    }),
    linePanel([timeSeries], {
      title: "Computation time vs network size", xLabel: "hubs", yLabel: "seconds",
    }),
  ];
  return svgDocument(panels, 2, 420, 300);
}

export function renderFigure(name: FigureName, runs: RunData[]): string {
  switch (name) {
    case "convergence":
      return convergenceFigure(runs[0]);
    case "benefits":
      return benefitsFigure(runs[0]);
    case "trades":
      return tradesFigure(runs[0]);
    case "comparison":
      return comparisonFigure(runs);
    case "scalability":
      return scalabilityFigure(runs);
  }
}

import assert from "node:assert/strict";
import { mkdtempSync, writeFileSync, readdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { test } from "node:test";

import { MissingColumnError } from "../src/csv";
import { FIGURES, loadRun, renderFigure } from "../src/figures";
import { main, parseArgs, render } from "../src/main";

function fakeRunDir(): string {
  const dir = mkdtempSync(join(tmpdir(), "hubnet-run-"));
  writeFileSync(
    join(dir, "summary.csv"),
    [
      "entity_type,entity,cluster,J_dec,J_grid,c_bid,rel_benefit_pct",
      "hub,h1,c1,100.0,92.0,3.0,-5.0",
      "hub,h2,c1,200.0,185.0,5.0,-5.0",
      "hub,h3,c2,150.0,140.0,4.0,-4.0",
      "cluster,c1,c1,300.0,277.0,8.0,-5.0",
      "cluster,c2,c2,150.0,140.0,4.0,-4.0",
      "network,network,,450.0,417.0,12.0,-4.67",
      "",
    ].join("\n"),
  );
  const ts = ["t,hub,cluster,elec_demand,heat_demand,grid_buy,grid_sell,gas_buy,elec_trade,heat_trade,realized_cost,shadow_dec_cost,storage_kwh"];
  for (let t = 0; t < 6; t += 1) {
    ts.push(`${t},h1,c1,10,5,2,0,4,${(t % 3) - 1},0.5,1.2,1.3,0`);
    ts.push(`${t},h2,c1,12,6,3,0,5,${1 - (t % 3)},-0.5,1.4,1.5,2`);
    ts.push(`${t},h3,c2,8,3,1,0,2,0.0,0.0,0.8,0.85,0`);
  }
  writeFileSync(join(dir, "timeseries.csv"), ts.join("\n") + "\n");
  const trace = ["game_t,iteration,cluster,trade_total_kwh,bid_chf,residual_primal,residual_dual,clearing_trade_max_kwh,clearing_bid_chf,mu"];
  for (let k = 1; k <= 10; k += 1) {
    for (const cid of ["c1", "c2"]) {
      const sign = cid === "c1" ? 1 : -1;
      trace.push(
        `0,${k},${cid},${sign * (5 + 10 / k)},${sign * (2 + 5 / k)},${1 / k},${2 / k},${3 / k},${1.5 / k},${2000 * Math.pow(0.97, k)}`,
      );
    }
  }
  writeFileSync(join(dir, "bargaining_trace.csv"), trace.join("\n") + "\n");
  writeFileSync(
    join(dir, "manifest.json"),
    JSON.stringify({ n_hubs: 3, wall_time_s: 12.5, games: 1, seed: 7 }) + "\n",
  );
  return dir;
}

test("all five figure analogs render and contain their panels", () => {
  const dir = fakeRunDir();
  const run = loadRun(dir);
  for (const name of FIGURES) {
    const svg = renderFigure(name, [run]);
    assert.match(svg, /^<svg /, name);
    assert.match(svg, /<\/svg>\n$/, name);
  }
  assert.match(renderFigure("convergence", [run]), /Market clearing/);
  assert.match(renderFigure("benefits", [run]), /Relative cost benefit/);
  assert.match(renderFigure("trades", [run]), /Cluster electricity trades/);
  assert.match(renderFigure("comparison", [run]), /no-trading baseline/);
  assert.match(renderFigure("scalability", [run]), /network size/);
});

test("cli writes one file per selected figure", () => {
  const dir = fakeRunDir();
  const out = mkdtempSync(join(tmpdir(), "hubnet-figs-"));
  const code = main(["--run", dir, "--figs", "all", "--out", out]);
  assert.equal(code, 0);
  const files = readdirSync(out).sort();
  assert.deepEqual(files, ["benefits.svg", "comparison.svg", "convergence.svg", "scalability.svg", "trades.svg"]);
});

test("empty selection writes nothing and exits zero", () => {
  const dir = fakeRunDir();
  const out = mkdtempSync(join(tmpdir(), "hubnet-empty-"));
  const code = main(["--run", dir, "--figs", "", "--out", out]);
  assert.equal(code, 0);
  assert.deepEqual(readdirSync(out + "").filter((f) => f.endsWith(".svg")), []);
});

test("missing column surfaces as a named error", () => {
  const dir = fakeRunDir();
  writeFileSync(join(dir, "summary.csv"), "entity_type,entity\nnetwork,network\n");
  const run = loadRun(dir);
  assert.throws(
    () => renderFigure("benefits", [run]),
    (err: Error) =>
      err instanceof MissingColumnError && /summary\.csv: missing required column/.test(err.message),
  );
  const code = main(["--run", dir, "--figs", "benefits", "--out", mkdtempSync(join(tmpdir(), "x-"))]);
  assert.equal(code, 1);
});

test("rendering is deterministic and read-only", () => {
  const dir = fakeRunDir();
  const before = readdirSync(dir).sort();
  const run = loadRun(dir);
  const a = renderFigure("convergence", [run]);
  const b = renderFigure("convergence", [loadRun(dir)]);
  assert.equal(a, b);
  assert.deepEqual(readdirSync(dir).sort(), before);
});

test("multi-run comparison includes one bar per run", () => {
  const dirA = fakeRunDir();
  const dirB = fakeRunDir();
  const svg = renderFigure("comparison", [loadRun(dirA), loadRun(dirB)]);
  const bars = svg.match(/<rect [^>]*fill="#1f77b4"/g) ?? [];
  assert.ok(bars.length >= 1);
  assert.ok(svg.includes("hubnet-run-"));
});

test("unknown figure name rejected at argument parsing", () => {
  assert.throws(() => parseArgs(["--run", "x", "--figs", "donuts"]), /unknown figure/);
  assert.throws(() => parseArgs([]), /--run/);
  const opts = parseArgs(["--run", "x", "--figs", "benefits,trades"]);
  assert.deepEqual(opts.figures, ["benefits", "trades"]);
  assert.deepEqual(render({ runs: ["x"], figures: [], out: null }), []);
});

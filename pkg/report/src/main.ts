#!/usr/bin/env node
/**
 * Render figure analogs from hubnet run directories.
 *
 * Usage:
 *   report --run <dir> [--run <dir2> ...] [--figs all|name,name] [--out <dir>]
 *
 * With a single run, the comparison and scalability figures degrade to
 * single-entry charts. An empty selection (--figs "") writes nothing and
 * exits 0. Rendering never mutates the run directories.
 */

import { mkdirSync, writeFileSync } from "fs";
import { join } from "path";

import { FIGURES, FigureName, loadRun, renderFigure } from "./figures";

export interface CliOptions {
  runs: string[];
  figures: FigureName[];
  out: string | null;
}

export function parseArgs(argv: string[]): CliOptions {
  const runs: string[] = [];
  let out: string | null = null;
  let figsSpec = "all";
  for (let i = 0; i < argv.length; i += 1) {
    const arg = argv[i];
    if (arg === "--run") {
      runs.push(argv[++i]);
    } else if (arg === "--out") {
      out = argv[++i];
    } else if (arg === "--figs") {
      figsSpec = argv[++i] ?? "";
    } else if (arg === "--help" || arg === "-h") {
      console.log("usage: report --run <dir> [--run <dir>...] [--figs all|names] [--out <dir>]");
      process.exit(0);
    } else {
      throw new Error(`unknown argument: ${arg}`);
    }
  }
  if (runs.length === 0) {
    throw new Error("at least one --run <dir> is required");
  }
  let figures: FigureName[];
  if (figsSpec === "all") {
    figures = [...FIGURES];
  } else if (figsSpec.trim() === "") {
    figures = [];
  } else {
    figures = figsSpec.split(",").map((name) => {
      const trimmed = name.trim() as FigureName;
      if (!FIGURES.includes(trimmed)) {
        throw new Error(`unknown figure ${name.trim()!}; known: ${FIGURES.join(", ")}`);
      }
      return trimmed;
    });
  }
  return { runs, figures, out };
}

export function render(options: CliOptions): string[] {
  if (options.figures.length === 0) {
    return [];
  }
  const runs = options.runs.map(loadRun);
  const outDir = options.out ?? join(options.runs[0], "figures");
  mkdirSync(outDir, { recursive: true });
  const written: string[] = [];
  for (const name of options.figures) {
    const svg = renderFigure(name, runs);
    const path = join(outDir, `${name}.svg`);
    writeFileSync(path, svg);
    written.push(path);
  }
  return written;
}

export function main(argv: string[]): number {
  let options: CliOptions;
  try {
    options = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  try {
    const written = render(options);
    for (const path of written) {
      console.log(`wrote ${path}`);
    }
    if (written.length === 0) {
      console.log("nothing selected; no files written");
    }
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? `${err.name}: ${err.message}` : err));
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}

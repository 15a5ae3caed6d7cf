/**
 * Hand-rolled SVG chart primitives: line panels, bar groups, stacked areas.
 * Pure string generation, deterministic for identical inputs.
 */

export const PALETTE = [
  "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color: string;
  dash?: string;
}

export interface BarGroup {
  label: string;
  value: number;
  color: string;
}

const FONT = `font-family="Helvetica, Arial, sans-serif"`;

function fmtTick(v: number): string {
  if (v === 0) return "0";
  const abs = Math.abs(v);
  if (abs >= 1000 || abs < 0.01) return v.toExponential(1);
  return Number(v.toPrecision(3)).toString();
}

export interface PanelOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  width?: number;
  height?: number;
  logY?: boolean;
}

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) {
    hi = lo + 1;
  }
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const candidates = [step, 2 * step, 5 * step, 10 * step];
  const chosen = candidates.find((s) => span / s <= n + 1) ?? 10 * step;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / chosen) * chosen; v <= hi + 1e-12 * span; v += chosen) {
    ticks.push(Math.abs(v) < 1e-12 * span ? 0 : v);
  }
  return ticks;
}

/** A single line-chart panel as an SVG group (caller places it). */
export function linePanel(series: Series[], opts: PanelOptions): string {
  const W = opts.width ?? 420;
  const H = opts.height ?? 300;
  const m = { left: 62, right: 14, top: 30, bottom: 44 };
  const plotW = W - m.left - m.right;
  const plotH = H - m.top - m.bottom;
  const parts: string[] = [];
  parts.push(`<rect x="0" y="0" width="${W}" height="${H}" fill="white"/>`);
  parts.push(
    `<text x="${W / 2}" y="16" text-anchor="middle" ${FONT} font-size="13" font-weight="bold">${opts.title}</text>`,
  );
  const allX = series.flatMap((s) => s.x);
  let allY = series.flatMap((s) => s.y).filter((v) => Number.isFinite(v));
  if (opts.logY) {
    allY = allY.filter((v) => v > 0).map((v) => Math.log10(v));
  }
  if (allX.length === 0 || allY.length === 0) {
    parts.push(
      `<text x="${W / 2}" y="${H / 2}" text-anchor="middle" ${FONT} font-size="12" fill="#888">no data</text>`,
    );
    return `<g>${parts.join("")}</g>`;
  }
  const xLo = Math.min(...allX);
  const xHi = Math.max(...allX);
  let yLo = Math.min(...allY, 0 * Math.min(...allY));
  let yHi = Math.max(...allY);
  if (!opts.logY) {
    yLo = Math.min(0, Math.min(...allY));
    yHi = Math.max(0, yHi);
  }
  if (yHi === yLo) yHi = yLo + 1;
  const sx = (x: number) => m.left + ((x - xLo) / (xHi - xLo || 1)) * plotW;
  const sy = (yRaw: number) => {
    const y = opts.logY ? Math.log10(Math.max(yRaw, 1e-300)) : yRaw;
    return m.top + (1 - (y - yLo) / (yHi - yLo)) * plotH;
  };
  parts.push(
    `<rect x="${m.left}" y="${m.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#333" stroke-width="1"/>`,
  );
  for (const tx of niceTicks(xLo, xHi)) {
    const px = sx(tx);
    parts.push(`<line x1="${px}" y1="${m.top + plotH}" x2="${px}" y2="${m.top + plotH + 4}" stroke="#333"/>`);
    parts.push(
      `<text x="${px}" y="${m.top + plotH + 16}" text-anchor="middle" ${FONT} font-size="10">${fmtTick(tx)}</text>`,
    );
  }
  for (const ty of niceTicks(yLo, yHi)) {
    const py = m.top + (1 - (ty - yLo) / (yHi - yLo)) * plotH;
    parts.push(`<line x1="${m.left - 4}" y1="${py}" x2="${m.left}" y2="${py}" stroke="#333"/>`);
    parts.push(
      `<text x="${m.left - 7}" y="${py + 3}" text-anchor="end" ${FONT} font-size="10">${
        opts.logY ? `1e${fmtTick(ty)}` : fmtTick(ty)
      }</text>`,
    );
    parts.push(
      `<line x1="${m.left}" y1="${py}" x2="${m.left + plotW}" y2="${py}" stroke="#eee" stroke-width="0.6"/>`,
    );
  }
  series.forEach((s) => {
    const points = s.x
      .map((x, i) => [x, s.y[i]] as const)
      .filter(([, y]) => Number.isFinite(y) && (!opts.logY || y > 0))
      .map(([x, y]) => `${sx(x).toFixed(2)},${sy(y).toFixed(2)}`)
      .join(" ");
    if (points.length > 0) {
      const dash = s.dash ? ` stroke-dasharray="${s.dash}"` : "";
      parts.push(
        `<polyline points="${points}" fill="none" stroke="${s.color}" stroke-width="1.6"${dash}/>`,
      );
    }
  });
  // Legend.
  series.forEach((s, i) => {
    const lx = m.left + 8;
    const ly = m.top + 12 + i * 13;
    parts.push(`<line x1="${lx}" y1="${ly - 3}" x2="${lx + 16}" y2="${ly - 3}" stroke="${s.color}" stroke-width="2"/>`);
    parts.push(`<text x="${lx + 20}" y="${ly}" ${FONT} font-size="10">${s.label}</text>`);
  });
  parts.push(
    `<text x="${m.left + plotW / 2}" y="${H - 8}" text-anchor="middle" ${FONT} font-size="11">${opts.xLabel}</text>`,
  );
  parts.push(
    `<text x="14" y="${m.top + plotH / 2}" text-anchor="middle" ${FONT} font-size="11" transform="rotate(-90 14 ${m.top + plotH / 2})">${opts.yLabel}</text>`,
  );
  return `<g>${parts.join("")}</g>`;
}

/** Vertical bar chart panel. */
export function barPanel(groups: BarGroup[], opts: PanelOptions): string {
  const W = opts.width ?? 560;
  const H = opts.height ?? 320;
  const m = { left: 62, right: 14, top: 30, bottom: 70 };
  const plotW = W - m.left - m.right;
  const plotH = H - m.top - m.bottom;
  const parts: string[] = [];
  parts.push(`<rect x="0" y="0" width="${W}" height="${H}" fill="white"/>`);
  parts.push(
    `<text x="${W / 2}" y="16" text-anchor="middle" ${FONT} font-size="13" font-weight="bold">${opts.title}</text>`,
  );
  if (groups.length === 0) {
    parts.push(
      `<text x="${W / 2}" y="${H / 2}" text-anchor="middle" ${FONT} font-size="12" fill="#888">no data</text>`,
    );
    return `<g>${parts.join("")}</g>`;
  }
  const values = groups.map((g) => g.value);
  const yLo = Math.min(0, ...values);
  const yHi = Math.max(0, ...values) || 1;
  const sy = (y: number) => m.top + (1 - (y - yLo) / (yHi - yLo || 1)) * plotH;
  const slot = plotW / groups.length;
  const barW = Math.min(slot * 0.7, 46);
  parts.push(
    `<rect x="${m.left}" y="${m.top}" width="${plotW}" height="${plotH}" fill="none" stroke="#333"/>`,
  );
  for (const ty of niceTicks(yLo, yHi)) {
    const py = sy(ty);
    parts.push(`<line x1="${m.left - 4}" y1="${py}" x2="${m.left}" y2="${py}" stroke="#333"/>`);
    parts.push(`<text x="${m.left - 7}" y="${py + 3}" text-anchor="end" ${FONT} font-size="10">${fmtTick(ty)}</text>`);
  }
  const zeroY = sy(0);
  parts.push(`<line x1="${m.left}" y1="${zeroY}" x2="${m.left + plotW}" y2="${zeroY}" stroke="#999" stroke-width="0.8"/>`);
  groups.forEach((g, i) => {
    const cx = m.left + slot * (i + 0.5);
    const top = Math.min(sy(g.value), zeroY);
    const height = Math.abs(sy(g.value) - zeroY);
    parts.push(
      `<rect x="${(cx - barW / 2).toFixed(2)}" y="${top.toFixed(2)}" width="${barW.toFixed(2)}" height="${height.toFixed(2)}" fill="${g.color}"/>`,
    );
    parts.push(
      `<text x="${cx}" y="${m.top + plotH + 14}" text-anchor="end" ${FONT} font-size="10" transform="rotate(-35 ${cx} ${m.top + plotH + 14})">${g.label}</text>`,
    );
  });
  parts.push(
    `<text x="14" y="${m.top + plotH / 2}" text-anchor="middle" ${FONT} font-size="11" transform="rotate(-90 14 ${m.top + plotH / 2})">${opts.yLabel}</text>`,
  );
  return `<g>${parts.join("")}</g>`;
}

/** Arrange pre-rendered panels in a grid and wrap them in an SVG document. */
export function svgDocument(panels: string[], cols: number, panelW: number, panelH: number): string {
  const rows = Math.ceil(panels.length / cols);
  const W = cols * panelW;
  const H = rows * panelH;
  const placed = panels
    .map((panel, i) => {
      const x = (i % cols) * panelW;
      const y = Math.floor(i / cols) * panelH;
      return `<g transform="translate(${x},${y})">${panel}</g>`;
    })
    .join("\n");
  return `<svg xmlns="http://www.w3.org/2000/svg" width="${W}" height="${H}" viewBox="0 0 ${W} ${H}">\n${placed}\n</svg>\n`;
}

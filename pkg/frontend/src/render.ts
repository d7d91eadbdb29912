/**
 * Figure kinds over kpzlab CSV outputs.
 *
 * decay:         log-log decay curve(s) with a least-squares slope annotation
 * ratio:         bound-ratio curves against a dashed threshold line
 * compare:       two-ensemble overlay with the maximum gap annotated
 * kernel-bounds: kernel constant ratios across the time grid
 *
 * Figures never recompute statistics: they draw CSV columns as-is; the only
 * derived number is the annotated least-squares slope.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { numericColumn, readCsv, stringColumn, Table } from "./csv.js";
import { leastSquares, log10 } from "./regression.js";
import { axisFromValues, Scale, seriesColor, SvgCanvas } from "./svg.js";

export interface FigureSpec {
  kind: "decay" | "ratio" | "compare" | "kernel-bounds";
  inputs: string[];
  output: string;
  x: string;
  y: string | string[];
  series?: string;
  title?: string;
  xscale?: Scale;
  yscale?: Scale;
  bound?: number;
}

export function validateSpec(obj: unknown): FigureSpec {
  const spec = obj as Partial<FigureSpec>;
  const kinds = ["decay", "ratio", "compare", "kernel-bounds"];
  if (!spec || typeof spec !== "object") throw new Error("spec must be an object");
  if (!spec.kind || !kinds.includes(spec.kind)) throw new Error(`kind must be one of ${kinds.join("|")}`);
  if (!Array.isArray(spec.inputs) || spec.inputs.length === 0) throw new Error("inputs must be a non-empty array");
  if (typeof spec.output !== "string") throw new Error("output path required");
  if (typeof spec.x !== "string") throw new Error("x column required");
  if (spec.y === undefined) throw new Error("y column(s) required");
  return spec as FigureSpec;
}

function yColumns(spec: FigureSpec): string[] {
  return Array.isArray(spec.y) ? spec.y : [spec.y];
}

export function render(spec: FigureSpec): string {
  const tables = spec.inputs.map(readCsv);
  switch (spec.kind) {
    case "decay":
      return renderDecay(spec, tables[0]);
    case "ratio":
      return renderRatio(spec, tables[0]);
    case "compare":
      return renderCompare(spec, tables[0]);
    case "kernel-bounds":
      return renderRatio({ ...spec, yscale: spec.yscale ?? "linear" }, tables[0]);
  }
}

export function renderToFile(spec: FigureSpec): void {
  const svg = render(spec);
  fs.mkdirSync(path.dirname(path.resolve(spec.output)), { recursive: true });
  fs.writeFileSync(spec.output, svg);
}

function renderDecay(spec: FigureSpec, table: Table): string {
  const xs = numericColumn(table, spec.x);
  const col = yColumns(spec)[0];
  const ys = numericColumn(table, col);
  const fit = leastSquares(log10(xs), log10(ys));
  const canvas = new SvgCanvas(spec.title ?? `${col} vs ${spec.x}`);
  const xAxis = axisFromValues(xs, spec.xscale ?? "log");
  const yAxis = axisFromValues(ys, spec.yscale ?? "log");
  canvas.frame(xAxis, yAxis, spec.x, col);
  canvas.polyline(xs, ys, xAxis, yAxis, seriesColor(0));
  canvas.markers(xs, ys, xAxis, yAxis, seriesColor(0));
  canvas.annotation(`fitted slope = ${fit.slope.toPrecision(12)}`);
  return canvas.render();
}

function renderRatio(spec: FigureSpec, table: Table): string {
  const xs = numericColumn(table, spec.x);
  const cols = yColumns(spec);
  const all: number[] = [];
  const series = cols.map((c) => {
    const v = numericColumn(table, c);
    all.push(...v);
    return v;
  });
  if (spec.bound !== undefined) all.push(spec.bound);
  const canvas = new SvgCanvas(spec.title ?? `${cols.join(", ")} vs ${spec.x}`);
  const xAxis = axisFromValues(xs, spec.xscale ?? "log");
  const yAxis = axisFromValues(all, spec.yscale ?? "linear");
  canvas.frame(xAxis, yAxis, spec.x, cols.length === 1 ? cols[0] : "ratio");
  series.forEach((v, i) => {
    canvas.polyline(xs, v, xAxis, yAxis, seriesColor(i));
    canvas.markers(xs, v, xAxis, yAxis, seriesColor(i));
  });
  canvas.legend(cols);
  if (spec.bound !== undefined) {
    canvas.hline(spec.bound, xAxis, yAxis, "#666");
    canvas.annotation(`bound = ${spec.bound}`);
  }
  return canvas.render();
}

function renderCompare(spec: FigureSpec, table: Table): string {
  if (!spec.series) throw new Error("compare figures need a 'series' column");
  const tags = stringColumn(table, spec.series);
  const xs = numericColumn(table, spec.x);
  const col = yColumns(spec)[0];
  const ys = numericColumn(table, col);
  const names = [...new Set(tags)].sort();
  if (names.length !== 2) throw new Error(`compare expects exactly 2 ensembles, got ${names.length}`);
  const groups = names.map((name) => {
    const gx: number[] = [];
    const gy: number[] = [];
    tags.forEach((t, i) => {
      if (t === name) {
        gx.push(xs[i]);
        gy.push(ys[i]);
      }
    });
    const order = gx.map((_, i) => i).sort((a, b) => gx[a] - gx[b]);
    return { x: order.map((i) => gx[i]), y: order.map((i) => gy[i]) };
  });
  // max gap at shared abscissae
  const lookup = new Map(groups[1].x.map((x, i) => [x, groups[1].y[i]]));
  let maxGap = 0;
  groups[0].x.forEach((x, i) => {
    const other = lookup.get(x);
    if (other !== undefined) maxGap = Math.max(maxGap, Math.abs(groups[0].y[i] - other));
  });
  const canvas = new SvgCanvas(spec.title ?? `${col}: ${names[0]} vs ${names[1]}`);
  const xAxis = axisFromValues(xs, spec.xscale ?? "linear");
  const yAxis = axisFromValues(ys, spec.yscale ?? "linear");
  canvas.frame(xAxis, yAxis, spec.x, col);
  groups.forEach((g, i) => canvas.polyline(g.x, g.y, xAxis, yAxis, seriesColor(i)));
  canvas.legend(names);
  canvas.annotation(`max gap = ${maxGap.toPrecision(6)}`);
  return canvas.render();
}

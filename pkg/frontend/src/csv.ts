/**
 * Reader for kpzlab result CSVs: '#'-prefixed metadata lines, then a header
 * row and numeric/string columns.
 */

import * as fs from "node:fs";

export interface Table {
  meta: Record<string, string>;
  columns: string[];
  rows: string[][];
}

export function parseCsv(text: string): Table {
  const meta: Record<string, string> = {};
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  let i = 0;
  while (i < lines.length && lines[i].startsWith("#")) {
    const body = lines[i].slice(1).trim();
    const colon = body.indexOf(":");
    if (colon >= 0) meta[body.slice(0, colon).trim()] = body.slice(colon + 1).trim();
    i += 1;
  }
  if (i >= lines.length) throw new Error("CSV has no header row");
  const columns = lines[i].split(",").map((c) => c.trim());
  const rows = lines.slice(i + 1).map((l) => l.split(",").map((c) => c.trim()));
  if (rows.length === 0) throw new Error("CSV has no data rows");
  return { meta, columns, rows };
}

export function readCsv(path: string): Table {
  return parseCsv(fs.readFileSync(path, "utf8"));
}

export function numericColumn(table: Table, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) throw new Error(`column '${name}' not found (have: ${table.columns.join(", ")})`);
  return table.rows.map((r) => {
    const v = Number(r[idx]);
    if (!Number.isFinite(v)) throw new Error(`non-numeric value '${r[idx]}' in column '${name}'`);
    return v;
  });
}

export function stringColumn(table: Table, name: string): string[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) throw new Error(`column '${name}' not found (have: ${table.columns.join(", ")})`);
  return table.rows.map((r) => r[idx]);
}

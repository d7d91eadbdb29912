#!/usr/bin/env node
/**
 * kpzlab-plots render --spec <figure.json>
 *
 * Reads a figure spec, renders a deterministic SVG from kpzlab CSV outputs.
 * Exits 0 on success, 1 on any validation or IO error.
 */

import * as fs from "node:fs";

import { renderToFile, validateSpec } from "./render.js";

function main(argv: string[]): number {
  const args = argv.slice(2);
  if (args[0] !== "render") {
    process.stderr.write("usage: kpzlab-plots render --spec <figure.json>\n");
    return 1;
  }
  const flag = args.indexOf("--spec");
  if (flag < 0 || !args[flag + 1]) {
    process.stderr.write("missing --spec <figure.json>\n");
    return 1;
  }
  try {
    const spec = validateSpec(JSON.parse(fs.readFileSync(args[flag + 1], "utf8")));
    renderToFile(spec);
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${err instanceof Error ? err.message : String(err)}\n`);
    return 1;
  }
}

process.exit(main(process.argv));

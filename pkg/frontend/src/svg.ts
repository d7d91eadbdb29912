/**
 * Minimal deterministic SVG plotting: fixed canvas, fixed fonts, stable
 * number formatting, no timestamps.  Re-rendering identical inputs yields
 * byte-identical files.
 */

export const WIDTH = 640;
export const HEIGHT = 440;
const MARGIN = { left: 70, right: 20, top: 36, bottom: 52 };

export type Scale = "linear" | "log";

export function fmt(v: number): string {
  if (!Number.isFinite(v)) throw new Error("non-finite coordinate");
  const s = v.toPrecision(8);
  return s.includes("e") ? s : s.replace(/\.?0+$/, "").replace(/^-0$/, "0");
}

export interface Axis {
  min: number;
  max: number;
  scale: Scale;
}

function transform(v: number, axis: Axis): number {
  const t = axis.scale === "log" ? Math.log10(v) : v;
  const lo = axis.scale === "log" ? Math.log10(axis.min) : axis.min;
  const hi = axis.scale === "log" ? Math.log10(axis.max) : axis.max;
  return (t - lo) / (hi - lo || 1);
}

export function xPixel(v: number, axis: Axis): number {
  return MARGIN.left + transform(v, axis) * (WIDTH - MARGIN.left - MARGIN.right);
}

export function yPixel(v: number, axis: Axis): number {
  return HEIGHT - MARGIN.bottom - transform(v, axis) * (HEIGHT - MARGIN.top - MARGIN.bottom);
}

export function axisFromValues(values: number[], scale: Scale): Axis {
  const finite = values.filter((v) => Number.isFinite(v));
  if (finite.length === 0) throw new Error("no finite values for axis");
  let min = Math.min(...finite);
  let max = Math.max(...finite);
  if (scale === "log") {
    if (min <= 0) throw new Error("log scale requires positive values");
    min = Math.pow(10, Math.floor(Math.log10(min) * 8) / 8 - 0.05);
    max = Math.pow(10, Math.ceil(Math.log10(max) * 8) / 8 + 0.05);
  } else {
    const pad = (max - min || 1) * 0.06;
    min -= pad;
    max += pad;
  }
  return { min, max, scale };
}

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

export function seriesColor(i: number): string {
  return PALETTE[i % PALETTE.length];
}

export class SvgCanvas {
  private parts: string[] = [];

  constructor(title: string) {
    this.parts.push(
      `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="DejaVu Sans, sans-serif">`,
      `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="white"/>`,
      `<text x="${WIDTH / 2}" y="22" text-anchor="middle" font-size="15">${escapeXml(title)}</text>`
    );
  }

  frame(xAxis: Axis, yAxis: Axis, xLabel: string, yLabel: string): void {
    const x0 = MARGIN.left;
    const x1 = WIDTH - MARGIN.right;
    const y0 = HEIGHT - MARGIN.bottom;
    const y1 = MARGIN.top;
    this.parts.push(
      `<rect x="${x0}" y="${y1}" width="${x1 - x0}" height="${y0 - y1}" fill="none" stroke="#333" stroke-width="1"/>`
    );
    for (const frac of [0, 0.25, 0.5, 0.75, 1]) {
      const vx = invTransform(frac, xAxis);
      const vy = invTransform(frac, yAxis);
      const px = x0 + frac * (x1 - x0);
      const py = y0 - frac * (y0 - y1);
      this.parts.push(
        `<line x1="${px}" y1="${y0}" x2="${px}" y2="${y0 + 5}" stroke="#333"/>`,
        `<text x="${px}" y="${y0 + 18}" text-anchor="middle" font-size="10">${tickLabel(vx, xAxis)}</text>`,
        `<line x1="${x0 - 5}" y1="${py}" x2="${x0}" y2="${py}" stroke="#333"/>`,
        `<text x="${x0 - 8}" y="${py + 3}" text-anchor="end" font-size="10">${tickLabel(vy, yAxis)}</text>`
      );
    }
    this.parts.push(
      `<text x="${(x0 + x1) / 2}" y="${HEIGHT - 14}" text-anchor="middle" font-size="12">${escapeXml(xLabel)}</text>`,
      `<text x="18" y="${(y0 + y1) / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 18 ${(y0 + y1) / 2})">${escapeXml(yLabel)}</text>`
    );
  }

  polyline(xs: number[], ys: number[], xAxis: Axis, yAxis: Axis, color: string): void {
    const pts = xs
      .map((x, i) => `${fmt(xPixel(x, xAxis))},${fmt(yPixel(ys[i], yAxis))}`)
      .join(" ");
    this.parts.push(`<polyline points="${pts}" fill="none" stroke="${color}" stroke-width="1.5"/>`);
  }

  markers(xs: number[], ys: number[], xAxis: Axis, yAxis: Axis, color: string): void {
    for (let i = 0; i < xs.length; i++) {
      this.parts.push(
        `<circle cx="${fmt(xPixel(xs[i], xAxis))}" cy="${fmt(yPixel(ys[i], yAxis))}" r="3" fill="${color}"/>`
      );
    }
  }

  hline(y: number, xAxis: Axis, yAxis: Axis, color: string): void {
    this.parts.push(
      `<line x1="${xPixel(xAxis.min, xAxis)}" y1="${fmt(yPixel(y, yAxis))}" x2="${xPixel(xAxis.max, xAxis)}" y2="${fmt(yPixel(y, yAxis))}" stroke="${color}" stroke-dasharray="6 3" stroke-width="1.2"/>`
    );
  }

  annotation(text: string, slot = 0): void {
    this.parts.push(
      `<text x="${WIDTH - MARGIN.right - 6}" y="${MARGIN.top + 16 + 16 * slot}" text-anchor="end" font-size="12" fill="#222">${escapeXml(text)}</text>`
    );
  }

  legend(names: string[]): void {
    names.forEach((name, i) => {
      const y = MARGIN.top + 16 + 16 * i;
      this.parts.push(
        `<line x1="${MARGIN.left + 8}" y1="${y - 4}" x2="${MARGIN.left + 30}" y2="${y - 4}" stroke="${seriesColor(i)}" stroke-width="2"/>`,
        `<text x="${MARGIN.left + 36}" y="${y}" font-size="11">${escapeXml(name)}</text>`
      );
    });
  }

  render(): string {
    return this.parts.join("\n") + "\n</svg>\n";
  }
}

function invTransform(frac: number, axis: Axis): number {
  if (axis.scale === "log") {
    const lo = Math.log10(axis.min);
    const hi = Math.log10(axis.max);
    return Math.pow(10, lo + frac * (hi - lo));
  }
  return axis.min + frac * (axis.max - axis.min);
}

function tickLabel(v: number, axis: Axis): string {
  if (axis.scale === "log") return v.toExponential(1);
  return Math.abs(v) >= 1000 || (Math.abs(v) < 0.01 && v !== 0) ? v.toExponential(1) : fmt(Number(v.toPrecision(3)));
}

function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;").replace(/"/g, "&quot;");
}

/** Closed-form least squares for the slope annotations. */

export interface Fit {
  slope: number;
  intercept: number;
}

export function leastSquares(x: number[], y: number[]): Fit {
  if (x.length !== y.length || x.length < 2) {
    throw new Error("least squares needs two same-length samples of size >= 2");
  }
  const n = x.length;
  const mx = x.reduce((a, b) => a + b, 0) / n;
  const my = y.reduce((a, b) => a + b, 0) / n;
  let sxx = 0;
  let sxy = 0;
  for (let i = 0; i < n; i++) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx === 0) throw new Error("degenerate abscissae");
  const slope = sxy / sxx;
  return { slope, intercept: my - slope * mx };
}

export function log10(values: number[]): number[] {
  return values.map((v) => {
    if (v <= 0) throw new Error("log scale requires positive values");
    return Math.log10(v);
  });
}

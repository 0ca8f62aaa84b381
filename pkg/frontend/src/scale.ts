/** Linear y-scale mapping a data domain onto pixel rows (top < bottom). */
export class LinearScale {
  readonly lo: number;
  readonly hi: number;
  readonly top: number;
  readonly bottom: number;

  constructor(lo: number, hi: number, top: number, bottom: number) {
    if (hi === lo) {
      // degenerate domain (a single flat statistic): widen by one unit
      lo -= 0.5;
      hi += 0.5;
    }
    this.lo = lo;
    this.hi = hi;
    this.top = top;
    this.bottom = bottom;
  }

  y(v: number): number {
    const t = (v - this.lo) / (this.hi - this.lo);
    return this.bottom + t * (this.top - this.bottom);
  }

  /** Round tick positions covering the domain, roughly `count` of them. */
  ticks(count = 6): number[] {
    const span = this.hi - this.lo;
    const raw = span / Math.max(1, count);
    const mag = Math.pow(10, Math.floor(Math.log10(raw)));
    let step = mag;
    for (const m of [1, 2, 5, 10]) {
      if (m * mag >= raw) {
        step = m * mag;
        break;
      }
    }
    const out: number[] = [];
    const start = Math.ceil(this.lo / step) * step;
    for (let v = start; v <= this.hi + step * 1e-9; v += step) {
      out.push(Math.abs(v) < step * 1e-9 ? 0 : v);
    }
    return out;
  }
}

/** Domain padded by 5% so marks never sit on the plot border. */
export function paddedDomain(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  const pad = (hi - lo || 1) * 0.05;
  return [lo - pad, hi + pad];
}

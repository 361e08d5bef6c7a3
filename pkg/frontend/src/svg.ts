/** Deterministic SVG assembly: plain strings, fixed number formatting,
 * no timestamps, so identical inputs give identical bytes. */

export function fmt(x: number): string {
  if (!Number.isFinite(x)) return '0';
  const s = x.toPrecision(6);
  return s.includes('.') ? s.replace(/\.?0+$/, '').replace(/\.$/, '') : s;
}

export function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

export interface Margins {
  top: number;
  right: number;
  bottom: number;
  left: number;
}

export class Svg {
  private parts: string[] = [];

  constructor(
    readonly width: number,
    readonly height: number,
  ) {}

  rect(x: number, y: number, w: number, h: number, fill: string, stroke = 'none'): void {
    this.parts.push(
      `<rect x="${fmt(x)}" y="${fmt(y)}" width="${fmt(w)}" height="${fmt(h)}" fill="${fill}" stroke="${stroke}"/>`,
    );
  }

  line(x1: number, y1: number, x2: number, y2: number, stroke = '#333', width = 1): void {
    this.parts.push(
      `<line x1="${fmt(x1)}" y1="${fmt(y1)}" x2="${fmt(x2)}" y2="${fmt(y2)}" stroke="${stroke}" stroke-width="${fmt(width)}"/>`,
    );
  }

  polyline(points: Array<[number, number]>, stroke: string, width = 1.5): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(' ');
    this.parts.push(
      `<polyline points="${pts}" fill="none" stroke="${stroke}" stroke-width="${fmt(width)}"/>`,
    );
  }

  polygon(points: Array<[number, number]>, fill: string): void {
    const pts = points.map(([x, y]) => `${fmt(x)},${fmt(y)}`).join(' ');
    this.parts.push(`<polygon points="${pts}" fill="${fill}" stroke="none"/>`);
  }

  text(
    x: number,
    y: number,
    content: string,
    opts: { size?: number; anchor?: string; fill?: string; rotate?: number } = {},
  ): void {
    const size = opts.size ?? 11;
    const anchor = opts.anchor ?? 'middle';
    const fill = opts.fill ?? '#222';
    const transform =
      opts.rotate !== undefined ? ` transform="rotate(${fmt(opts.rotate)} ${fmt(x)} ${fmt(y)})"` : '';
    this.parts.push(
      `<text x="${fmt(x)}" y="${fmt(y)}" font-size="${fmt(size)}" text-anchor="${anchor}" ` +
        `fill="${fill}" font-family="sans-serif"${transform}>${esc(content)}</text>`,
    );
  }

  render(): string {
    return (
      `<svg xmlns="http://www.w3.org/2000/svg" width="${this.width}" height="${this.height}" ` +
      `viewBox="0 0 ${this.width} ${this.height}">\n` +
      `<rect width="${this.width}" height="${this.height}" fill="white"/>\n` +
      this.parts.join('\n') +
      '\n</svg>\n'
    );
  }
}

/** Viridis-like ramp for the iteration-count cells. */
export function colorRamp(t: number): string {
  const stops: Array<[number, number, number]> = [
    [68, 1, 84],
    [59, 82, 139],
    [33, 145, 140],
    [94, 201, 98],
    [253, 231, 37],
  ];
  const clamped = Math.min(1, Math.max(0, t));
  const pos = clamped * (stops.length - 1);
  const i = Math.min(stops.length - 2, Math.floor(pos));
  const f = pos - i;
  const [r, g, b] = [0, 1, 2].map((k) => Math.round(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  return `rgb(${r},${g},${b})`;
}

/** Nice-ish tick values for a log10 axis given a data range. */
export function logTicks(minVal: number, maxVal: number): number[] {
  const lo = Math.floor(Math.log10(Math.max(minVal, 1e-300)));
  const hi = Math.ceil(Math.log10(Math.max(maxVal, 1e-299)));
  const ticks: number[] = [];
  const step = Math.max(1, Math.ceil((hi - lo) / 8));
  for (let e = lo; e <= hi; e += step) {
    ticks.push(Math.pow(10, e));
  }
  return ticks;
}

import { BLACK, Color, GREY, Raster } from './raster';
import { textWidth } from './font';

export interface Frame {
    x0: number; // left edge of the plot area (pixels)
    y0: number; // top edge
    width: number;
    height: number;
    xMin: number;
    xMax: number;
    yMin: number;
    yMax: number;
}

export const SERIES_COLORS: Color[] = [
    [31, 119, 180, 255],   // blue
    [255, 127, 14, 255],   // orange
    [44, 160, 44, 255],    // green
    [214, 39, 40, 255],    // red
    [148, 103, 189, 255],  // purple
    [140, 86, 75, 255],    // brown
];

export function withAlpha(color: Color, alpha: number): Color {
    return [color[0], color[1], color[2], alpha];
}

export function xPixel(frame: Frame, x: number): number {
    const span = frame.xMax - frame.xMin || 1;
    return Math.round(frame.x0 + ((x - frame.xMin) / span) * frame.width);
}

export function yPixel(frame: Frame, y: number): number {
    const span = frame.yMax - frame.yMin || 1;
    return Math.round(frame.y0 + frame.height - ((y - frame.yMin) / span) * frame.height);
}

export function niceTicks(lo: number, hi: number, count = 5): number[] {
    if (!(hi > lo)) return [lo];
    const rawStep = (hi - lo) / count;
    const mag = Math.pow(10, Math.floor(Math.log10(rawStep)));
    const candidates = [1, 2, 2.5, 5, 10].map((m) => m * mag);
    const step = candidates.find((s) => (hi - lo) / s <= count + 0.5) ?? candidates[4];
    const start = Math.ceil(lo / step) * step;
    const ticks: number[] = [];
    for (let v = start; v <= hi + 1e-12 * Math.abs(hi); v += step) {
        ticks.push(Math.abs(v) < step * 1e-9 ? 0 : v);
    }
    return ticks;
}

export function formatTick(v: number): string {
    if (v === 0) return '0';
    const abs = Math.abs(v);
    if (abs >= 10000 || abs < 0.001) return v.toExponential(1).replace('e+', 'E').replace('e', 'E');
    const text = abs >= 100 ? v.toFixed(0) : abs >= 1 ? v.toFixed(1) : v.toFixed(3);
    return text.replace(/\.?0+$/, '');
}

/** Draw the plot box, ticks, tick labels, and axis titles. */
export function drawAxes(
    raster: Raster,
    frame: Frame,
    xLabel: string,
    yLabel: string,
    title: string,
    logY = false,
): void {
    const { x0, y0, width, height } = frame;
    raster.textCentered(x0 + Math.floor(width / 2), 8, title, BLACK, 2);
    // box
    raster.line(x0, y0, x0, y0 + height, BLACK);
    raster.line(x0, y0 + height, x0 + width, y0 + height, BLACK);
    raster.line(x0 + width, y0, x0 + width, y0 + height, GREY);
    raster.line(x0, y0, x0 + width, y0, GREY);
    for (const tick of niceTicks(frame.xMin, frame.xMax)) {
        const px = xPixel(frame, tick);
        raster.line(px, y0 + height, px, y0 + height + 4, BLACK);
        raster.line(px, y0, px, y0 + height, [230, 230, 230, 255]);
        raster.textCentered(px, y0 + height + 8, formatTick(tick));
    }
    for (const tick of niceTicks(frame.yMin, frame.yMax)) {
        const py = yPixel(frame, tick);
        raster.line(x0 - 4, py, x0, py, BLACK);
        raster.line(x0, py, x0 + width, py, [230, 230, 230, 255]);
        const label = logY ? `1E${formatTick(tick)}` : formatTick(tick);
        raster.text(x0 - 8 - textWidth(label), py - 3, label);
    }
    raster.textCentered(x0 + Math.floor(width / 2), y0 + height + 24, xLabel);
    // y label rendered horizontally above the axis to keep the font simple
    raster.text(4, Math.max(2, y0 - 14), yLabel);
}

export function drawLegend(
    raster: Raster,
    frame: Frame,
    entries: { label: string; color: Color }[],
): void {
    let y = frame.y0 + 6;
    const x = frame.x0 + frame.width - 10;
    for (const entry of entries) {
        const w = textWidth(entry.label);
        raster.fillRect(x - w - 18, y, 12, 7, entry.color);
        raster.text(x - w, y, entry.label);
        y += 12;
    }
}

export function polyline(
    raster: Raster,
    frame: Frame,
    xs: number[],
    ys: number[],
    color: Color,
    thickness = 2,
): void {
    for (let i = 1; i < xs.length; i++) {
        raster.line(
            xPixel(frame, xs[i - 1]),
            yPixel(frame, ys[i - 1]),
            xPixel(frame, xs[i]),
            yPixel(frame, ys[i]),
            color,
            thickness,
        );
    }
}

/** Filled vertical band between lower and upper curves (error band). */
export function band(
    raster: Raster,
    frame: Frame,
    xs: number[],
    lower: number[],
    upper: number[],
    color: Color,
): void {
    for (let i = 1; i < xs.length; i++) {
        const pxA = xPixel(frame, xs[i - 1]);
        const pxB = xPixel(frame, xs[i]);
        for (let px = Math.min(pxA, pxB); px <= Math.max(pxA, pxB); px++) {
            const t = pxA === pxB ? 0 : (px - pxA) / (pxB - pxA);
            const lo = lower[i - 1] + t * (lower[i] - lower[i - 1]);
            const hi = upper[i - 1] + t * (upper[i] - upper[i - 1]);
            const pyLo = yPixel(frame, lo);
            const pyHi = yPixel(frame, hi);
            for (let py = Math.min(pyLo, pyHi); py <= Math.max(pyLo, pyHi); py++) {
                raster.set(px, py, color);
            }
        }
    }
}

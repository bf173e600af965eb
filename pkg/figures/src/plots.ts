import path from 'path';
import { CONVERGENCE_COLUMNS, SWEEP_COLUMNS, SchemaError, Table, numeric, readCsv } from './csv';
import { Field } from './field';
import { band, drawAxes, drawLegend, Frame, polyline, SERIES_COLORS, withAlpha } from './chart';
import { phaseColor } from './colormap';
import { BLACK, Raster, WHITE } from './raster';

const MARGIN = { left: 70, right: 20, top: 30, bottom: 40 };

function frameFor(width: number, height: number, xMin: number, xMax: number,
                  yMin: number, yMax: number): Frame {
    return {
        x0: MARGIN.left,
        y0: MARGIN.top,
        width: width - MARGIN.left - MARGIN.right,
        height: height - MARGIN.top - MARGIN.bottom,
        xMin, xMax, yMin, yMax,
    };
}

function pad(lo: number, hi: number): [number, number] {
    if (!(hi > lo)) {
        const eps = Math.abs(lo) * 0.1 + 1;
        return [lo - eps, hi + eps];
    }
    const margin = (hi - lo) * 0.06;
    return [lo - margin, hi + margin];
}

/** Iteration-vs-cost line plot on a log10 cost axis. */
export function renderConvergence(csvPath: string, width = 640, height = 420): Raster {
    const table = readCsv(csvPath, CONVERGENCE_COLUMNS);
    if (table.rows.length < 2) {
        throw new SchemaError(`${csvPath}: need at least 2 rows for a convergence curve, got ${table.rows.length}`);
    }
    const iters = numeric(table, 'iteration', csvPath);
    const costs = numeric(table, 'cost', csvPath);
    const logCosts = costs.map((c) => Math.log10(Math.max(c, 1e-300)));
    const [yLo, yHi] = pad(Math.min(...logCosts), Math.max(...logCosts));
    const raster = new Raster(width, height);
    const frame = frameFor(width, height, Math.min(...iters), Math.max(...iters), yLo, yHi);
    drawAxes(raster, frame, 'ITERATION', 'LOG10 EPISODIC COST',
             `CONVERGENCE: ${path.basename(csvPath)}`, true);
    polyline(raster, frame, iters, logCosts, SERIES_COLORS[0]);
    return raster;
}

interface StrategySeries {
    strategy: string;
    levels: number[];
    means: number[];
    stds: number[];
}

function sweepSeries(table: Table, csvPath: string): StrategySeries[] {
    const strategies = table.rows.map((r) => r[0]);
    const levels = numeric(table, 'noise_level', csvPath);
    const means = numeric(table, 'mean_cost', csvPath);
    const stds = numeric(table, 'std_cost', csvPath);
    const byStrategy = new Map<string, StrategySeries>();
    for (let i = 0; i < table.rows.length; i++) {
        if (!Number.isFinite(means[i])) continue; // all-failed cells carry inf
        let series = byStrategy.get(strategies[i]);
        if (!series) {
            series = { strategy: strategies[i], levels: [], means: [], stds: [] };
            byStrategy.set(strategies[i], series);
        }
        series.levels.push(levels[i]);
        series.means.push(means[i]);
        series.stds.push(stds[i]);
    }
    return [...byStrategy.values()];
}

/** Mean episodic cost with a +/- one-std band per strategy vs noise level. */
export function renderNoiseSweep(csvPath: string, width = 640, height = 420): Raster {
    const table = readCsv(csvPath, SWEEP_COLUMNS);
    const series = sweepSeries(table, csvPath);
    if (series.length < 1) {
        throw new SchemaError(`${csvPath}: no finite strategy rows to plot`);
    }
    const maxLevels = Math.max(...series.map((s) => s.levels.length));
    if (maxLevels < 2) {
        throw new SchemaError(`${csvPath}: need at least 2 noise levels, got ${maxLevels}`);
    }
    let yLo = Infinity;
    let yHi = -Infinity;
    let xLo = Infinity;
    let xHi = -Infinity;
    for (const s of series) {
        for (let i = 0; i < s.levels.length; i++) {
            yLo = Math.min(yLo, s.means[i] - s.stds[i]);
            yHi = Math.max(yHi, s.means[i] + s.stds[i]);
            xLo = Math.min(xLo, s.levels[i]);
            xHi = Math.max(xHi, s.levels[i]);
        }
    }
    const [pLo, pHi] = pad(yLo, yHi);
    const raster = new Raster(width, height);
    const frame = frameFor(width, height, xLo, xHi, pLo, pHi);
    drawAxes(raster, frame, 'NOISE LEVEL (FRACTION OF MAX NOMINAL CONTROL)',
             'EPISODIC COST', 'ROBUSTNESS TO CONTROL NOISE');
    series.forEach((s, i) => {
        const color = SERIES_COLORS[i % SERIES_COLORS.length];
        const lower = s.means.map((m, k) => m - s.stds[k]);
        const upper = s.means.map((m, k) => m + s.stds[k]);
        band(raster, frame, s.levels, lower, upper, withAlpha(color, 60));
        polyline(raster, frame, s.levels, s.means, color);
    });
    drawLegend(raster, frame, series.map((s, i) => ({
        label: s.strategy.toUpperCase(),
        color: SERIES_COLORS[i % SERIES_COLORS.length],
    })));
    return raster;
}

/** Side-by-side heatmaps with the shared [-1, 1] color scale. */
export function renderFieldMontage(
    fields: { name: string; field: Field }[],
    cellTarget = 220,
): Raster {
    if (fields.length < 1) {
        throw new SchemaError('montage needs at least one field file');
    }
    const panelGap = 12;
    const labelSpace = 16;
    const panels = fields.map(({ field }) => {
        const scale = Math.max(1, Math.floor(cellTarget / field.n));
        return { size: field.n * scale, scale };
    });
    const width = panels.reduce((acc, p) => acc + p.size, 0) + panelGap * (fields.length + 1);
    const height = Math.max(...panels.map((p) => p.size)) + labelSpace + 2 * panelGap;
    const raster = new Raster(width, height, WHITE);
    let x = panelGap;
    fields.forEach(({ name, field }, idx) => {
        const { size, scale } = panels[idx];
        for (let i = 0; i < field.n; i++) {
            for (let j = 0; j < field.n; j++) {
                raster.fillRect(
                    x + j * scale,
                    panelGap + i * scale,
                    scale,
                    scale,
                    phaseColor(field.values[i * field.n + j]),
                );
            }
        }
        // panel border + caption
        raster.line(x, panelGap, x + size, panelGap, BLACK);
        raster.line(x, panelGap + size, x + size, panelGap + size, BLACK);
        raster.line(x, panelGap, x, panelGap + size, BLACK);
        raster.line(x + size, panelGap, x + size, panelGap + size, BLACK);
        raster.textCentered(x + Math.floor(size / 2), panelGap + size + 5, name.toUpperCase());
        x += size + panelGap;
    });
    return raster;
}

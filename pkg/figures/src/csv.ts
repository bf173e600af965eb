import fs from 'fs';

/** Schema mismatch between an input CSV and what the plot expects. */
export class SchemaError extends Error {
    constructor(message: string) {
        super(message);
        this.name = 'SchemaError';
    }
}

export interface Table {
    columns: string[];
    rows: string[][];
}

/**
 * Parse a CSV produced by the benchmark harness. The header must match the
 * expected schema exactly (same names, same order) — no silent column
 * guessing; mismatches report the diff.
 */
export function readCsv(path: string, expectedColumns: string[]): Table {
    const text = fs.readFileSync(path, 'utf-8');
    const lines = text.split(/\r?\n/).filter((line) => line.length > 0);
    if (lines.length === 0) {
        throw new SchemaError(`${path}: empty file, expected header ${expectedColumns.join(',')}`);
    }
    const columns = lines[0].split(',');
    if (columns.length !== expectedColumns.length ||
        columns.some((c, i) => c !== expectedColumns[i])) {
        const missing = expectedColumns.filter((c) => !columns.includes(c));
        const extra = columns.filter((c) => !expectedColumns.includes(c));
        throw new SchemaError(
            `${path}: header mismatch` +
            `\n  expected: ${expectedColumns.join(',')}` +
            `\n  found:    ${columns.join(',')}` +
            (missing.length ? `\n  missing:  ${missing.join(',')}` : '') +
            (extra.length ? `\n  extra:    ${extra.join(',')}` : ''),
        );
    }
    const rows: string[][] = [];
    for (let i = 1; i < lines.length; i++) {
        const parts = lines[i].split(',');
        if (parts.length !== columns.length) {
            throw new SchemaError(
                `${path}: line ${i + 1} has ${parts.length} fields, expected ${columns.length}`,
            );
        }
        rows.push(parts);
    }
    return { columns, rows };
}

function parseNumber(raw: string): number {
    // the harness writes Python float reprs: 'inf' / '-inf' for sentinels
    const low = raw.toLowerCase();
    if (low === 'inf' || low === '+inf' || low === 'infinity') return Infinity;
    if (low === '-inf' || low === '-infinity') return -Infinity;
    return Number(raw);
}

export function numeric(table: Table, column: string, path = '<csv>'): number[] {
    const idx = table.columns.indexOf(column);
    if (idx < 0) {
        throw new SchemaError(`${path}: no column ${column}`);
    }
    return table.rows.map((row, i) => {
        const value = parseNumber(row[idx]);
        if (Number.isNaN(value)) {
            throw new SchemaError(`${path}: line ${i + 2}: ${column}=${row[idx]} is not numeric`);
        }
        return value;
    });
}

export const SWEEP_COLUMNS = [
    'strategy', 'noise_level', 'mean_cost', 'std_cost', 'min', 'max', 'n', 'n_failed',
];
export const CONVERGENCE_COLUMNS = ['iteration', 'cost', 'mu', 'alpha'];

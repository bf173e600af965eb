import fs from 'fs';

/**
 * Phase-field snapshot: n x n doubles, row-major.
 *
 * Binary layout: magic "PFLD", version byte 0x01, uint32 little-endian n,
 * then n*n IEEE-754 little-endian float64. The text form is CSV with n
 * lines of n comma-separated floats.
 */
export interface Field {
    n: number;
    values: Float64Array; // row-major, length n*n
}

export function readField(path: string): Field {
    const data = fs.readFileSync(path);
    if (data.length >= 4 && data.toString('latin1', 0, 4) === 'PFLD') {
        if (data.length < 9) {
            throw new Error(`${path}: truncated header (${data.length} bytes)`);
        }
        const version = data[4];
        if (version !== 1) {
            throw new Error(`${path}: unsupported field version ${version}`);
        }
        const n = data.readUInt32LE(5);
        const expected = 9 + n * n * 8;
        if (data.length !== expected) {
            throw new Error(`${path}: ${data.length} bytes, expected ${expected} for n=${n}`);
        }
        const values = new Float64Array(n * n);
        for (let k = 0; k < n * n; k++) {
            values[k] = data.readDoubleLE(9 + 8 * k);
        }
        return { n, values };
    }
    // text CSV fallback
    const lines = data.toString('utf-8').split(/\r?\n/).filter((l) => l.trim().length > 0);
    if (lines.length === 0) {
        throw new Error(`${path}: empty field file`);
    }
    const rows = lines.map((line, i) => {
        const parts = line.split(',').map(Number);
        if (parts.some(Number.isNaN)) {
            throw new Error(`${path}: line ${i + 1}: non-numeric value`);
        }
        return parts;
    });
    const n = rows[0].length;
    if (rows.length !== n) {
        throw new Error(`${path}: ${rows.length} rows x ${n} columns is not square`);
    }
    const values = new Float64Array(n * n);
    rows.forEach((row, i) => {
        if (row.length !== n) {
            throw new Error(`${path}: line ${i + 1}: ${row.length} values, expected ${n}`);
        }
        row.forEach((v, j) => { values[i * n + j] = v; });
    });
    return { n, values };
}

import fs from 'fs';
import os from 'os';
import path from 'path';
import zlib from 'zlib';
import { afterEach, beforeEach, describe, expect, it } from 'vitest';
import { readField } from '../src/field';
import { renderConvergence, renderFieldMontage, renderNoiseSweep } from '../src/plots';
import { encodePng } from '../src/raster';
import { phaseColor } from '../src/colormap';

let dir: string;

beforeEach(() => {
    dir = fs.mkdtempSync(path.join(os.tmpdir(), 'figplot-'));
});

afterEach(() => {
    fs.rmSync(dir, { recursive: true, force: true });
});

function write(name: string, text: string | Buffer): string {
    const p = path.join(dir, name);
    fs.writeFileSync(p, text);
    return p;
}

function binaryField(n: number, fill: (i: number, j: number) => number): Buffer {
    const buf = Buffer.alloc(9 + n * n * 8);
    buf.write('PFLD', 0, 'latin1');
    buf[4] = 1;
    buf.writeUInt32LE(n, 5);
    for (let i = 0; i < n; i++) {
        for (let j = 0; j < n; j++) {
            buf.writeDoubleLE(fill(i, j), 9 + 8 * (i * n + j));
        }
    }
    return buf;
}

function expectPng(buffer: Buffer): void {
    expect(buffer.subarray(0, 8)).toEqual(
        Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
    );
    expect(buffer.toString('latin1')).toContain('IHDR');
    expect(buffer.toString('latin1')).toContain('IEND');
}

describe('png encoding', () => {
    it('produces a decodable image payload', () => {
        const rgba = new Uint8Array(4 * 4 * 4).fill(128);
        const png = encodePng(4, 4, rgba);
        expectPng(png);
        // IDAT payload inflates to height * (1 + width*4) filtered bytes
        const idatStart = png.indexOf('IDAT') + 4;
        const length = png.readUInt32BE(png.indexOf('IDAT') - 4);
        const raw = zlib.inflateSync(png.subarray(idatStart, idatStart + length));
        expect(raw.length).toBe(4 * (1 + 4 * 4));
    });
});

describe('convergence plot', () => {
    it('renders a monotone curve', () => {
        const p = write('conv.csv',
            'iteration,cost,mu,alpha\n0,1000.0,1e-06,0.0\n1,500.0,1e-06,1.0\n2,100.0,5e-07,1.0\n');
        const png = renderConvergence(p).toPng();
        expectPng(png);
    });

    it('rejects a single-row file', () => {
        const p = write('short.csv', 'iteration,cost,mu,alpha\n0,1000.0,1e-06,0.0\n');
        expect(() => renderConvergence(p)).toThrowError(/at least 2 rows/);
    });

    it('rejects the wrong schema', () => {
        const p = write('wrong.csv', 'step,cost\n0,1\n1,2\n');
        expect(() => renderConvergence(p)).toThrowError(/header mismatch/);
    });
});

describe('noise sweep plot', () => {
    const header = 'strategy,noise_level,mean_cost,std_cost,min,max,n,n_failed\n';

    it('renders two strategies with bands', () => {
        const p = write('sweep.csv', header +
            'open-loop,0.0,100.0,0.0,100.0,100.0,10,0\n' +
            'open-loop,0.5,200.0,25.0,150.0,260.0,10,0\n' +
            'closed-loop,0.0,100.0,0.0,100.0,100.0,10,0\n' +
            'closed-loop,0.5,140.0,12.0,120.0,170.0,10,0\n');
        expectPng(renderNoiseSweep(p).toPng());
    });

    it('rejects an empty data section', () => {
        const p = write('empty.csv', header);
        expect(() => renderNoiseSweep(p)).toThrowError(/no finite strategy rows/);
    });

    it('rejects a single level', () => {
        const p = write('one.csv', header + 'open-loop,0.0,1.0,0.0,1.0,1.0,2,0\n');
        expect(() => renderNoiseSweep(p)).toThrowError(/at least 2 noise levels/);
    });

    it('skips all-failed inf cells but keeps the rest', () => {
        const p = write('inf.csv', header +
            'open-loop,0.0,100.0,0.0,100.0,100.0,10,0\n' +
            'open-loop,0.5,150.0,10.0,140.0,170.0,10,1\n' +
            'open-loop,1.0,inf,inf,inf,inf,10,10\n');
        expectPng(renderNoiseSweep(p).toPng());
    });
});

describe('field montage', () => {
    it('reads binary fields and renders panels with the fixed scale', () => {
        const goal = write('goal.pfld', binaryField(10, (i) => (i < 5 ? 1 : -1)));
        const zero = write('zero.pfld', binaryField(10, () => 0));
        const fields = [
            { name: 'initial', field: readField(zero) },
            { name: 'goal', field: readField(goal) },
        ];
        const raster = renderFieldMontage(fields);
        expectPng(raster.toPng());
        // goal panel must show the two pure-phase colors
        const plus = phaseColor(1);
        const minus = phaseColor(-1);
        expect(plus).not.toEqual(minus);
    });

    it('reads text csv fields', () => {
        const p = write('field.csv', '1,-1\n-1,1\n');
        const field = readField(p);
        expect(field.n).toBe(2);
        expect(Array.from(field.values)).toEqual([1, -1, -1, 1]);
    });

    it('rejects an empty montage', () => {
        expect(() => renderFieldMontage([])).toThrowError(/at least one field/);
    });

    it('rejects truncated binary fields', () => {
        const buf = binaryField(4, () => 0).subarray(0, 40);
        const p = write('short.pfld', Buffer.from(buf));
        expect(() => readField(p)).toThrowError(/expected/);
    });

    it('rejects non-square text fields', () => {
        const p = write('rect.csv', '1,2,3\n4,5,6\n');
        expect(() => readField(p)).toThrowError(/not square/);
    });
});

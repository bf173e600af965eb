import zlib from 'zlib';
import { GLYPH_HEIGHT, GLYPH_SPACING, GLYPH_WIDTH, glyphFor, textWidth } from './font';

export type Color = [number, number, number, number]; // RGBA 0-255

export const BLACK: Color = [0, 0, 0, 255];
export const WHITE: Color = [255, 255, 255, 255];
export const GREY: Color = [170, 170, 170, 255];

/** Software RGBA raster with just enough drawing for benchmark figures. */
export class Raster {
    readonly width: number;
    readonly height: number;
    readonly data: Uint8Array;

    constructor(width: number, height: number, background: Color = WHITE) {
        this.width = width;
        this.height = height;
        this.data = new Uint8Array(width * height * 4);
        this.fillRect(0, 0, width, height, background);
    }

    set(x: number, y: number, color: Color): void {
        if (x < 0 || y < 0 || x >= this.width || y >= this.height) return;
        const i = (y * this.width + x) * 4;
        const alpha = color[3] / 255;
        for (let c = 0; c < 3; c++) {
            this.data[i + c] = Math.round(color[c] * alpha + this.data[i + c] * (1 - alpha));
        }
        this.data[i + 3] = 255;
    }

    fillRect(x0: number, y0: number, w: number, h: number, color: Color): void {
        for (let y = y0; y < y0 + h; y++) {
            for (let x = x0; x < x0 + w; x++) {
                this.set(x, y, color);
            }
        }
    }

    line(x0: number, y0: number, x1: number, y1: number, color: Color, thickness = 1): void {
        // Bresenham with square brush
        let x = Math.round(x0);
        let y = Math.round(y0);
        const xe = Math.round(x1);
        const ye = Math.round(y1);
        const dx = Math.abs(xe - x);
        const dy = -Math.abs(ye - y);
        const sx = x < xe ? 1 : -1;
        const sy = y < ye ? 1 : -1;
        let err = dx + dy;
        const r = Math.floor(thickness / 2);
        for (;;) {
            for (let by = -r; by <= r; by++) {
                for (let bx = -r; bx <= r; bx++) {
                    this.set(x + bx, y + by, color);
                }
            }
            if (x === xe && y === ye) break;
            const e2 = 2 * err;
            if (e2 >= dy) { err += dy; x += sx; }
            if (e2 <= dx) { err += dx; y += sy; }
        }
    }

    text(x: number, y: number, message: string, color: Color = BLACK, scale = 1): void {
        let cx = x;
        for (const ch of message) {
            const glyph = glyphFor(ch);
            for (let gy = 0; gy < GLYPH_HEIGHT; gy++) {
                for (let gx = 0; gx < GLYPH_WIDTH; gx++) {
                    if (glyph[gy][gx] === '#') {
                        this.fillRect(cx + gx * scale, y + gy * scale, scale, scale, color);
                    }
                }
            }
            cx += (GLYPH_WIDTH + GLYPH_SPACING) * scale;
        }
    }

    textCentered(cx: number, y: number, message: string, color: Color = BLACK, scale = 1): void {
        this.text(cx - Math.floor(textWidth(message, scale) / 2), y, message, color, scale);
    }

    toPng(): Buffer {
        return encodePng(this.width, this.height, this.data);
    }
}

// ---------------------------------------------------------------------------
// PNG encoding (RGBA8, no interlace) via node's zlib
// ---------------------------------------------------------------------------

const CRC_TABLE = (() => {
    const table = new Uint32Array(256);
    for (let n = 0; n < 256; n++) {
        let c = n;
        for (let k = 0; k < 8; k++) {
            c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
        }
        table[n] = c >>> 0;
    }
    return table;
})();

function crc32(buf: Buffer): number {
    let c = 0xffffffff;
    for (let i = 0; i < buf.length; i++) {
        c = CRC_TABLE[(c ^ buf[i]) & 0xff] ^ (c >>> 8);
    }
    return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, payload: Buffer): Buffer {
    const head = Buffer.alloc(4);
    head.writeUInt32BE(payload.length);
    const body = Buffer.concat([Buffer.from(type, 'latin1'), payload]);
    const crc = Buffer.alloc(4);
    crc.writeUInt32BE(crc32(body));
    return Buffer.concat([head, body, crc]);
}

export function encodePng(width: number, height: number, rgba: Uint8Array): Buffer {
    const ihdr = Buffer.alloc(13);
    ihdr.writeUInt32BE(width, 0);
    ihdr.writeUInt32BE(height, 4);
    ihdr[8] = 8; // bit depth
    ihdr[9] = 6; // color type RGBA
    const raw = Buffer.alloc(height * (width * 4 + 1));
    for (let y = 0; y < height; y++) {
        raw[y * (width * 4 + 1)] = 0; // filter: none
        for (let x = 0; x < width * 4; x++) {
            raw[y * (width * 4 + 1) + 1 + x] = rgba[y * width * 4 + x];
        }
    }
    return Buffer.concat([
        Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]),
        chunk('IHDR', ihdr),
        chunk('IDAT', zlib.deflateSync(raw, { level: 9 })),
        chunk('IEND', Buffer.alloc(0)),
    ]);
}

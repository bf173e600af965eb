import { Color } from './raster';

/**
 * Diverging blue -> white -> red colormap over the fixed range [-1, 1].
 * Field montages always share this scale so panels are comparable.
 */
export function phaseColor(value: number): Color {
    const v = Math.max(-1, Math.min(1, value));
    if (v < 0) {
        const t = 1 + v; // 0 at -1, 1 at 0
        return [
            Math.round(40 + 215 * t),
            Math.round(60 + 195 * t),
            Math.round(150 + 105 * t),
            255,
        ];
    }
    const t = 1 - v; // 1 at 0, 0 at +1
    return [
        Math.round(180 + 75 * t),
        Math.round(40 + 215 * t),
        Math.round(40 + 215 * t),
        255,
    ];
}

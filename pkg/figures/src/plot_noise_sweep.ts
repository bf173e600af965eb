import fs from 'fs';
import { renderNoiseSweep } from './plots';

function main(argv: string[]): number {
    if (argv.length !== 2) {
        console.error('usage: plot_noise_sweep <sweep.csv> <out.png>');
        return 2;
    }
    const [csvPath, outPath] = argv;
    try {
        fs.writeFileSync(outPath, renderNoiseSweep(csvPath).toPng());
    } catch (err) {
        console.error(`plot_noise_sweep: ${(err as Error).message}`);
        return 1;
    }
    console.log(`wrote ${outPath}`);
    return 0;
}

process.exit(main(process.argv.slice(2)));

import fs from 'fs';
import { renderConvergence } from './plots';

function main(argv: string[]): number {
    if (argv.length !== 2) {
        console.error('usage: plot_convergence <convergence.csv> <out.png>');
        return 2;
    }
    const [csvPath, outPath] = argv;
    try {
        fs.writeFileSync(outPath, renderConvergence(csvPath).toPng());
    } catch (err) {
        console.error(`plot_convergence: ${(err as Error).message}`);
        return 1;
    }
    console.log(`wrote ${outPath}`);
    return 0;
}

process.exit(main(process.argv.slice(2)));

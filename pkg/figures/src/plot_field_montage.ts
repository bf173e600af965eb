import fs from 'fs';
import path from 'path';
import { readField } from './field';
import { renderFieldMontage } from './plots';

function main(argv: string[]): number {
    if (argv.length < 2) {
        console.error('usage: plot_field_montage <field>... <out.png>');
        return 2;
    }
    const outPath = argv[argv.length - 1];
    const fieldPaths = argv.slice(0, -1);
    try {
        const fields = fieldPaths.map((p) => ({
            name: path.basename(p).replace(/\.(pfld|csv)$/i, ''),
            field: readField(p),
        }));
        fs.writeFileSync(outPath, renderFieldMontage(fields).toPng());
    } catch (err) {
        console.error(`plot_field_montage: ${(err as Error).message}`);
        return 1;
    }
    console.log(`wrote ${outPath}`);
    return 0;
}

process.exit(main(process.argv.slice(2)));

// Command-line surface:
//   export --source <dir> --family <f> --out <file> [--golden <wav>]
//   verify <file>

import { Family, FAMILIES } from './families.js';
import { exportCheckpoint } from './export.js';
import { formatReport, verifyFile } from './verify.js';

function parseFlags(args: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < args.length; i += 2) {
    if (!args[i].startsWith('--') || i + 1 >= args.length) {
      throw new Error(`malformed arguments near ${args[i]}`);
    }
    flags.set(args[i].slice(2), args[i + 1]);
  }
  return flags;
}

function usage(): never {
  console.error(
    'usage:\n' +
      '  export --source <dir> --family <f> --out <file> [--golden <wav>]\n' +
      '  verify <file>\n' +
      `families: ${Object.keys(FAMILIES).join(', ')}`,
  );
  process.exit(2);
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === 'export') {
      const flags = parseFlags(rest);
      const source = flags.get('source');
      const family = flags.get('family') as Family | undefined;
      const out = flags.get('out');
      if (!source || !family || !out) usage();
      if (!(family in FAMILIES)) {
        throw new Error(`unknown family ${family}`);
      }
      const result = exportCheckpoint({
        source,
        family,
        outPath: out,
        goldenWav: flags.get('golden'),
      });
      console.log(
        `wrote ${out} (wiring ${result.wiring}, ` +
          `${result.goldenLayers} golden layers, ${result.frames} frames)`,
      );
      return 0;
    }
    if (command === 'verify') {
      if (rest.length !== 1) usage();
      const report = verifyFile(rest[0]);
      console.log(formatReport(report));
      return report.pass ? 0 : 1;
    }
  } catch (e) {
    console.error(e instanceof Error ? e.message : String(e));
    return 1;
  }
  usage();
}

if (process.argv[1] && process.argv[1].endsWith('cli.js')) {
  process.exit(main(process.argv.slice(2)));
}

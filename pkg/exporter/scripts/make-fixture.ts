// Regenerates the committed conformance fixture: a toy checkpoint is
// fabricated deterministically, exported with the bundled golden input, and
// written to fixtures/exported.lprobe. The toolkit's acceptance suite loads
// this file and replays the golden vectors through its own encoder.

import { mkdirSync, mkdtempSync, rmSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import { fileURLToPath } from 'node:url';

import { exportCheckpoint } from '../src/export.js';
import { verifyFile } from '../src/verify.js';
import { writeToyCheckpoint } from '../src/toy.js';

const here = fileURLToPath(new URL('.', import.meta.url));
const fixtureDir = join(here, '..', '..', 'fixtures');
const outPath = join(fixtureDir, 'exported.lprobe');

const checkpointDir = mkdtempSync(join(tmpdir(), 'toy-ckpt-'));
try {
  writeToyCheckpoint(checkpointDir);
  mkdirSync(fixtureDir, { recursive: true });
  const result = exportCheckpoint({
    source: checkpointDir,
    family: 'wav2vec2-style',
    outPath,
  });
  const report = verifyFile(outPath);
  console.log(
    `wrote ${outPath}: wiring ${result.wiring}, ${result.goldenLayers} golden ` +
      `layers, ${result.frames} frames, verify ${report.pass ? 'PASS' : 'FAIL'}`,
  );
  if (!report.pass) process.exit(1);
} finally {
  rmSync(checkpointDir, { recursive: true, force: true });
}

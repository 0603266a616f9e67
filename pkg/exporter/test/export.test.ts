import { mkdtempSync, readFileSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { readContainer } from '../src/container.js';
import { COMPATIBLE_WIRING } from '../src/families.js';
import { convOutputLength } from '../src/forward.js';
import { exportCheckpoint } from '../src/export.js';
import { main } from '../src/cli.js';
import { TOY_CONFIG, writeToyCheckpoint } from '../src/toy.js';
import { SELF_CONSISTENCY_TOLERANCE, verifyContainer, verifyFile } from '../src/verify.js';
import { GOLDEN_LENGTH } from '../src/wav.js';

let workDir: string;
let checkpointDir: string;
let outPath: string;

beforeAll(() => {
  workDir = mkdtempSync(join(tmpdir(), 'exporter-test-'));
  checkpointDir = join(workDir, 'ckpt');
  writeToyCheckpoint(checkpointDir);
  outPath = join(workDir, 'toy.lprobe');
});

afterAll(() => {
  rmSync(workDir, { recursive: true, force: true });
});

describe('exportCheckpoint', () => {
  it('exports a compatible checkpoint with golden vectors and metadata', () => {
    const result = exportCheckpoint({
      source: checkpointDir,
      family: 'wav2vec2-style',
      outPath,
    });
    expect(result.wiring).toBe(COMPATIBLE_WIRING);
    expect(result.goldenLayers).toBe(TOY_CONFIG.num_hidden_layers);

    const container = readContainer(new Uint8Array(readFileSync(outPath)));
    expect(container.metadata.wiring).toBe(COMPATIBLE_WIRING);
    expect(container.metadata.num_layers).toBe(3);
    expect(container.metadata.hidden_dim).toBe(8);
    expect(container.metadata.conv_stack).toBe('8:10:5,8:4:2');
    expect(container.metadata.family).toBe('wav2vec2-style');
    expect(container.metadata.source).toBe('toy/wav2vec2-tiny');
    expect(String(container.metadata.source_revision)).toMatch(/^[0-9a-f]{64}$/);

    const frames = convOutputLength(GOLDEN_LENGTH, [
      [8, 10, 5],
      [8, 4, 2],
    ]);
    expect(result.frames).toBe(frames);
    expect(container.tensors.get('golden.input')!.shape).toEqual([GOLDEN_LENGTH]);
    for (let l = 1; l <= 3; l++) {
      expect(container.tensors.get(`golden.layer.${l}`)!.shape).toEqual([frames, 8]);
    }
    expect(container.tensors.has('golden.layer.4')).toBe(false);
    expect(container.tensors.get('layer.3.ffn.w2.weight')!.shape).toEqual([8, 16]);
  });

  it('re-exports byte-identically', () => {
    const again = join(workDir, 'toy-again.lprobe');
    exportCheckpoint({ source: checkpointDir, family: 'wav2vec2-style', outPath: again });
    expect(readFileSync(outPath).equals(readFileSync(again))).toBe(true);
  });

  it('omits golden vectors and marks the wiring for incompatible checkpoints', () => {
    const postNormDir = join(workDir, 'postnorm');
    writeToyCheckpoint(postNormDir, { ...TOY_CONFIG, do_stable_layer_norm: false });
    const out = join(workDir, 'postnorm.lprobe');
    const result = exportCheckpoint({ source: postNormDir, family: 'wav2vec2-style', outPath: out });
    expect(result.wiring).toBe(`${COMPATIBLE_WIRING}+post_norm_blocks`);
    expect(result.goldenLayers).toBe(0);
    const container = readContainer(new Uint8Array(readFileSync(out)));
    expect(container.tensors.has('golden.input')).toBe(false);
    expect(() => verifyContainer(container)).toThrow(/cannot verify wiring/);
  });

  it('refuses a family that does not cover the checkpoint', () => {
    expect(() =>
      exportCheckpoint({ source: checkpointDir, family: 'wavlm-style', outPath: join(workDir, 'x') }),
    ).toThrow(/does not cover/);
  });
});

describe('verify', () => {
  it('passes on a fresh export at the self-consistency tolerance', () => {
    const report = verifyFile(outPath);
    expect(report.pass).toBe(true);
    expect(report.tolerance).toBe(SELF_CONSISTENCY_TOLERANCE);
    expect(report.layers).toHaveLength(3);
    for (const { maxAbs } of report.layers) {
      expect(maxAbs).toBeLessThan(SELF_CONSISTENCY_TOLERANCE);
    }
  });

  it('fails and names the layer when a golden value is perturbed', () => {
    const container = readContainer(new Uint8Array(readFileSync(outPath)));
    const layer2 = container.tensors.get('golden.layer.2')!;
    layer2.data[7] += 1e-3;
    const report = verifyContainer(container);
    expect(report.pass).toBe(false);
    expect(report.failing).toEqual([2]);
    expect(report.layers[1].maxAbs).toBeGreaterThan(1e-4);
    expect(report.layers[1].worstIndex).toBe(7);
  });

  it('fails when an encoder weight no longer matches the golden vectors', () => {
    const container = readContainer(new Uint8Array(readFileSync(outPath)));
    container.tensors.get('layer.1.ffn.w2.bias')!.data[0] += 0.01;
    const report = verifyContainer(container);
    expect(report.pass).toBe(false);
    // a layer-1 weight change propagates through every downstream layer
    expect(report.failing).toEqual([1, 2, 3]);
  });

  it('rejects containers without golden vectors', () => {
    const container = readContainer(new Uint8Array(readFileSync(outPath)));
    container.tensors.delete('golden.input');
    expect(() => verifyContainer(container)).toThrow(/golden/);
  });
});

describe('cli', () => {
  it('runs export and verify end to end', () => {
    const out = join(workDir, 'cli.lprobe');
    expect(
      main(['export', '--source', checkpointDir, '--family', 'wav2vec2-style', '--out', out]),
    ).toBe(0);
    expect(main(['verify', out])).toBe(0);
  });

  it('returns nonzero for unknown families and bad files', () => {
    expect(
      main(['export', '--source', checkpointDir, '--family', 'bogus', '--out', join(workDir, 'y')]),
    ).toBe(1);
    const bogus = join(workDir, 'bogus.lprobe');
    writeFileSync(bogus, 'not a container');
    expect(main(['verify', bogus])).toBe(1);
  });
});

// Self-consistency check for an exported container: re-run the reference
// forward on the stored golden input and compare against the stored golden
// layer outputs.

import { readFileSync } from 'node:fs';

import { Container, Tensor, readContainer } from './container.js';
import { COMPATIBLE_WIRING } from './families.js';
import { EncoderShape, encode } from './forward.js';

export const SELF_CONSISTENCY_TOLERANCE = 1e-5;

export interface LayerDeviation {
  layer: number;
  maxAbs: number;
  worstIndex: number;
}

export interface VerifyReport {
  pass: boolean;
  tolerance: number;
  layers: LayerDeviation[];
  failing: number[];
}

export function shapeFromMetadata(metadata: Record<string, unknown>): EncoderShape {
  const convStack = String(metadata.conv_stack)
    .split(',')
    .map((part) => part.split(':').map(Number) as [number, number, number]);
  return {
    numLayers: Number(metadata.num_layers),
    hiddenDim: Number(metadata.hidden_dim),
    numHeads: Number(metadata.num_heads),
    ffnDim: Number(metadata.ffn_dim),
    convStack,
    posConvKernel: Number(metadata.pos_conv_kernel ?? 9),
    posConvGroups: Number(metadata.pos_conv_groups ?? 1),
    layerNormEps: Number(metadata.layer_norm_eps ?? 1e-5),
  };
}

export function verifyContainer(
  container: Container,
  tolerance: number = SELF_CONSISTENCY_TOLERANCE,
): VerifyReport {
  const wiring = container.metadata.wiring ?? COMPATIBLE_WIRING;
  if (wiring !== COMPATIBLE_WIRING) {
    throw new Error(`cannot verify wiring ${wiring}: reference implements ${COMPATIBLE_WIRING}`);
  }
  const input = container.tensors.get('golden.input');
  if (!input) {
    throw new Error('container has no golden vectors (missing golden.input)');
  }
  const goldens: Tensor[] = [];
  for (let l = 1; container.tensors.has(`golden.layer.${l}`); l++) {
    goldens.push(container.tensors.get(`golden.layer.${l}`)!);
  }
  if (goldens.length === 0) {
    throw new Error('container has no golden vectors (missing golden.layer.1)');
  }

  const shape = shapeFromMetadata(container.metadata);
  const states = encode(Float64Array.from(input.data), shape, container.tensors, goldens.length);

  const layers: LayerDeviation[] = [];
  const failing: number[] = [];
  states.forEach((m, i) => {
    const stored = goldens[i];
    let maxAbs = 0;
    let worstIndex = 0;
    for (let j = 0; j < m.data.length; j++) {
      const dev = Math.abs(Math.fround(m.data[j]) - stored.data[j]);
      if (dev > maxAbs) {
        maxAbs = dev;
        worstIndex = j;
      }
    }
    layers.push({ layer: i + 1, maxAbs, worstIndex });
    if (maxAbs > tolerance) {
      failing.push(i + 1);
    }
  });
  return { pass: failing.length === 0, tolerance, layers, failing };
}

export function verifyFile(path: string, tolerance?: number): VerifyReport {
  return verifyContainer(readContainer(new Uint8Array(readFileSync(path))), tolerance);
}

export function formatReport(report: VerifyReport): string {
  const lines = [`tolerance ${report.tolerance}`];
  for (const { layer, maxAbs } of report.layers) {
    lines.push(`layer ${layer}: max-abs deviation ${maxAbs.toExponential(3)}`);
  }
  lines.push(
    report.pass ? 'PASS' : `FAIL: layers ${report.failing.join(', ')} exceed tolerance`,
  );
  return lines.join('\n');
}

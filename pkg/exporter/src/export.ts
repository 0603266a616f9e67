// One-shot checkpoint conversion: upstream safetensors + config.json in,
// toolkit container out, with golden conformance vectors computed by the
// reference forward pass (all stochastic layers are absent at inference).

import { createHash } from 'node:crypto';
import { readFileSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { Tensor, TensorMap, writeContainer } from './container.js';
import {
  COMPATIBLE_WIRING,
  Family,
  UpstreamConfig,
  mapTensors,
  validateFamily,
  wiringDeviations,
  wiringString,
} from './families.js';
import { EncoderShape, encode } from './forward.js';
import { parseSafetensors } from './safetensors.js';
import { decodeWav, defaultGoldenInput } from './wav.js';

export interface ExportSpec {
  source: string; // directory holding config.json + model.safetensors
  family: Family;
  outPath: string;
  goldenWav?: string;
}

export interface ExportResult {
  wiring: string;
  goldenLayers: number;
  frames: number;
}

export function shapeFromConfig(config: UpstreamConfig): EncoderShape {
  return {
    numLayers: config.num_hidden_layers,
    hiddenDim: config.hidden_size,
    numHeads: config.num_attention_heads,
    ffnDim: config.intermediate_size,
    convStack: config.conv_dim.map(
      (c, i) => [c, config.conv_kernel[i], config.conv_stride[i]] as [number, number, number],
    ),
    posConvKernel: config.num_conv_pos_embeddings,
    posConvGroups: config.num_conv_pos_embedding_groups,
    layerNormEps: config.layer_norm_eps ?? 1e-5,
  };
}

function f32Samples(samples: Float64Array): Float64Array {
  // the container stores golden.input as f32; compute the golden layers from
  // the identical rounded values so verification is self-consistent
  return Float64Array.from(samples, Math.fround);
}

export function exportCheckpoint(spec: ExportSpec): ExportResult {
  const config = JSON.parse(
    readFileSync(join(spec.source, 'config.json'), 'utf-8'),
  ) as UpstreamConfig;
  validateFamily(spec.family, config);
  const weightBytes = readFileSync(join(spec.source, 'model.safetensors'));
  const { tensors: upstream } = parseSafetensors(new Uint8Array(weightBytes));

  const deviations = wiringDeviations(config, upstream);
  const wiring = wiringString(deviations);
  const mapped = mapTensors(config, upstream);
  const shape = shapeFromConfig(config);

  const metadata: Record<string, unknown> = {
    wiring,
    num_layers: shape.numLayers,
    hidden_dim: shape.hiddenDim,
    num_heads: shape.numHeads,
    ffn_dim: shape.ffnDim,
    conv_stack: shape.convStack.map(([c, k, s]) => `${c}:${k}:${s}`).join(','),
    pos_conv_kernel: shape.posConvKernel,
    pos_conv_groups: shape.posConvGroups,
    layer_norm_eps: shape.layerNormEps,
    family: spec.family,
    source: config._name_or_path ?? spec.source,
    source_revision: createHash('sha256').update(weightBytes).digest('hex'),
  };

  const out: TensorMap = new Map(mapped);
  let goldenLayers = 0;
  let frames = 0;
  if (wiring === COMPATIBLE_WIRING) {
    const samples = f32Samples(
      spec.goldenWav ? decodeWav(new Uint8Array(readFileSync(spec.goldenWav))) : defaultGoldenInput(),
    );
    const states = encode(samples, shape, mapped, shape.numLayers);
    out.set('golden.input', { shape: [samples.length], data: Float32Array.from(samples) });
    states.forEach((m, i) => {
      out.set(`golden.layer.${i + 1}`, {
        shape: [m.rows, m.cols],
        data: Float32Array.from(m.data),
      } as Tensor);
    });
    goldenLayers = states.length;
    frames = states[0].rows;
  }

  writeFileSync(spec.outPath, writeContainer(out, metadata));
  return { wiring, goldenLayers, frames };
}

// Deterministic fabricated upstream checkpoint (HF-style layout) for tests
// and for the committed conformance fixture. No network, no real weights.

import { mkdirSync, writeFileSync } from 'node:fs';
import { join } from 'node:path';

import { Tensor, TensorMap } from './container.js';
import { UpstreamConfig } from './families.js';
import { writeSafetensors } from './safetensors.js';

export function mulberry32(seed: number): () => number {
  let state = seed | 0;
  return () => {
    state = (state + 0x6d2b79f5) | 0;
    let t = state ^ (state >>> 15);
    t = Math.imul(t, 1 | state);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export const TOY_CONFIG: UpstreamConfig = {
  model_type: 'wav2vec2',
  num_hidden_layers: 3,
  hidden_size: 8,
  num_attention_heads: 2,
  intermediate_size: 16,
  conv_dim: [8, 8],
  conv_kernel: [10, 4],
  conv_stride: [5, 2],
  num_conv_pos_embeddings: 9,
  num_conv_pos_embedding_groups: 1,
  layer_norm_eps: 1e-5,
  hidden_act: 'gelu',
  do_stable_layer_norm: true,
  feat_extract_norm: 'layer',
  conv_bias: true,
  _name_or_path: 'toy/wav2vec2-tiny',
};

function uniform(rand: () => number, shape: number[], fanIn: number): Tensor {
  const bound = Math.sqrt(1.0 / fanIn);
  const n = shape.reduce((a, b) => a * b, 1);
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = Math.fround((2 * rand() - 1) * bound);
  return { shape, data };
}

function ones(shape: number[]): Tensor {
  const n = shape.reduce((a, b) => a * b, 1);
  return { shape, data: new Float32Array(n).fill(1) };
}

function zeros(shape: number[]): Tensor {
  return { shape, data: new Float32Array(shape.reduce((a, b) => a * b, 1)) };
}

export function toyTensors(config: UpstreamConfig = TOY_CONFIG, seed = 7): TensorMap {
  const rand = mulberry32(seed);
  const d = config.hidden_size;
  const f = config.intermediate_size;
  const g = config.num_conv_pos_embedding_groups;
  const k = config.num_conv_pos_embeddings;
  const out: TensorMap = new Map();

  let cIn = 1;
  config.conv_dim.forEach((cOut, i) => {
    const kernel = config.conv_kernel[i];
    out.set(
      `feature_extractor.conv_layers.${i}.conv.weight`,
      uniform(rand, [cOut, cIn, kernel], cIn * kernel),
    );
    out.set(`feature_extractor.conv_layers.${i}.conv.bias`, uniform(rand, [cOut], cOut));
    cIn = cOut;
  });
  out.set('feature_projection.layer_norm.weight', ones([cIn]));
  out.set('feature_projection.layer_norm.bias', zeros([cIn]));
  out.set('feature_projection.projection.weight', uniform(rand, [d, cIn], cIn));
  out.set('feature_projection.projection.bias', uniform(rand, [d], d));

  // positional conv stored under PyTorch weight-norm, as real checkpoints are
  out.set('encoder.pos_conv_embed.conv.weight_g', ones([1, 1, k]));
  out.set(
    'encoder.pos_conv_embed.conv.weight_v',
    uniform(rand, [d, Math.floor(d / g), k], Math.floor(d / g) * k),
  );
  out.set('encoder.pos_conv_embed.conv.bias', uniform(rand, [d], d));
  out.set('encoder.layer_norm.weight', ones([d]));
  out.set('encoder.layer_norm.bias', zeros([d]));

  for (let l = 0; l < config.num_hidden_layers; l++) {
    const p = `encoder.layers.${l}`;
    out.set(`${p}.layer_norm.weight`, ones([d]));
    out.set(`${p}.layer_norm.bias`, zeros([d]));
    for (const proj of ['q_proj', 'k_proj', 'v_proj', 'out_proj']) {
      out.set(`${p}.attention.${proj}.weight`, uniform(rand, [d, d], d));
      out.set(`${p}.attention.${proj}.bias`, uniform(rand, [d], d));
    }
    out.set(`${p}.final_layer_norm.weight`, ones([d]));
    out.set(`${p}.final_layer_norm.bias`, zeros([d]));
    out.set(`${p}.feed_forward.intermediate_dense.weight`, uniform(rand, [f, d], d));
    out.set(`${p}.feed_forward.intermediate_dense.bias`, uniform(rand, [f], f));
    out.set(`${p}.feed_forward.output_dense.weight`, uniform(rand, [d, f], f));
    out.set(`${p}.feed_forward.output_dense.bias`, uniform(rand, [d], d));
  }
  return out;
}

export function writeToyCheckpoint(
  dir: string,
  config: UpstreamConfig = TOY_CONFIG,
  seed = 7,
): void {
  mkdirSync(dir, { recursive: true });
  writeFileSync(join(dir, 'config.json'), JSON.stringify(config, null, 2));
  writeFileSync(join(dir, 'model.safetensors'), writeSafetensors(toyTensors(config, seed)));
}

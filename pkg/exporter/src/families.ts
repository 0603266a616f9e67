// Checkpoint-family knowledge: how upstream tensor names map onto the
// toolkit's schema, and which configuration choices the toolkit's fixed
// encoder wiring ("pre_norm_gelu_posconv_v1") can faithfully represent.
//
// A wiring feature the toolkit does not model (post-norm blocks, grouped
// front-end normalization, relative position bias) is never silently
// dropped: the exported metadata carries a different wiring string, so the
// primary loader refuses the file instead of mis-computing.

import { Tensor, TensorMap } from './container.js';

export const COMPATIBLE_WIRING = 'pre_norm_gelu_posconv_v1';

export type Family = 'wav2vec2-style' | 'hubert-style' | 'wavlm-style';

export const FAMILIES: Record<Family, { modelTypes: string[] }> = {
  'wav2vec2-style': { modelTypes: ['wav2vec2'] },
  'hubert-style': { modelTypes: ['hubert'] },
  'wavlm-style': { modelTypes: ['wavlm'] },
};

export interface UpstreamConfig {
  model_type?: string;
  num_hidden_layers: number;
  hidden_size: number;
  num_attention_heads: number;
  intermediate_size: number;
  conv_dim: number[];
  conv_kernel: number[];
  conv_stride: number[];
  num_conv_pos_embeddings: number;
  num_conv_pos_embedding_groups: number;
  layer_norm_eps?: number;
  hidden_act?: string;
  do_stable_layer_norm?: boolean;
  feat_extract_norm?: string;
  conv_bias?: boolean;
  _name_or_path?: string;
}

export class MappingError extends Error {}

/** Wiring deviations from what the primary encoder implements. */
export function wiringDeviations(config: UpstreamConfig, tensors: TensorMap): string[] {
  const deviations: string[] = [];
  if (config.do_stable_layer_norm === false) {
    deviations.push('post_norm_blocks');
  }
  if (config.feat_extract_norm === 'group') {
    deviations.push('grouped_frontend_norm');
  }
  if (config.hidden_act !== undefined && config.hidden_act !== 'gelu') {
    deviations.push(`activation_${config.hidden_act}`);
  }
  for (const name of tensors.keys()) {
    if (name.includes('rel_attn') || name.includes('gru_rel_pos')) {
      deviations.push('relative_position_bias');
      break;
    }
  }
  return deviations;
}

export function wiringString(deviations: string[]): string {
  if (deviations.length === 0) return COMPATIBLE_WIRING;
  return `${COMPATIBLE_WIRING}+${[...new Set(deviations)].sort().join('+')}`;
}

function take(tensors: TensorMap, name: string, shape: number[]): Tensor {
  const t = tensors.get(name);
  if (!t) {
    throw new MappingError(`tensor missing from checkpoint: ${name}`);
  }
  if (t.shape.length !== shape.length || t.shape.some((s, i) => s !== shape[i])) {
    throw new MappingError(
      `shape mismatch for ${name}: [${t.shape}] vs expected [${shape}]`,
    );
  }
  return t;
}

function zeros(shape: number[]): Tensor {
  return { shape, data: new Float32Array(shape.reduce((a, b) => a * b, 1)) };
}

/** Resolve a conv weight stored under PyTorch weight-norm (dim=2):
 *  weight[:, :, k] = g[k] * v[:, :, k] / ||v[:, :, k]||. */
export function resolveWeightNorm(g: Tensor, v: Tensor): Tensor {
  const [d, dg, k] = v.shape;
  const out = new Float32Array(v.data.length);
  for (let kk = 0; kk < k; kk++) {
    let norm = 0;
    for (let i = 0; i < d; i++) {
      for (let j = 0; j < dg; j++) {
        const val = v.data[(i * dg + j) * k + kk];
        norm += val * val;
      }
    }
    norm = Math.sqrt(norm);
    const scale = g.data[kk] / norm;
    for (let i = 0; i < d; i++) {
      for (let j = 0; j < dg; j++) {
        const idx = (i * dg + j) * k + kk;
        out[idx] = v.data[idx] * scale;
      }
    }
  }
  return { shape: v.shape, data: out };
}

/** Map upstream tensor names to the toolkit schema. Every toolkit slot is
 *  filled exactly once; unknown wiring-relevant leftovers were already
 *  flagged by wiringDeviations. */
export function mapTensors(config: UpstreamConfig, tensors: TensorMap): TensorMap {
  const d = config.hidden_size;
  const f = config.intermediate_size;
  const L = config.num_hidden_layers;
  const g = config.num_conv_pos_embedding_groups;
  const k = config.num_conv_pos_embeddings;
  const out: TensorMap = new Map();

  let cIn = 1;
  config.conv_dim.forEach((cOut, i) => {
    out.set(
      `frontend.conv.${i}.weight`,
      take(tensors, `feature_extractor.conv_layers.${i}.conv.weight`, [
        cOut,
        cIn,
        config.conv_kernel[i],
      ]),
    );
    const biasName = `feature_extractor.conv_layers.${i}.conv.bias`;
    out.set(
      `frontend.conv.${i}.bias`,
      config.conv_bias === false && !tensors.has(biasName)
        ? zeros([cOut])
        : take(tensors, biasName, [cOut]),
    );
    cIn = cOut;
  });

  out.set('frontend.norm.weight', take(tensors, 'feature_projection.layer_norm.weight', [cIn]));
  out.set('frontend.norm.bias', take(tensors, 'feature_projection.layer_norm.bias', [cIn]));
  out.set('frontend.proj.weight', take(tensors, 'feature_projection.projection.weight', [d, cIn]));
  out.set('frontend.proj.bias', take(tensors, 'feature_projection.projection.bias', [d]));

  const posBase = 'encoder.pos_conv_embed.conv';
  if (tensors.has(`${posBase}.weight_g`) && tensors.has(`${posBase}.weight_v`)) {
    out.set(
      'pos_conv.weight',
      resolveWeightNorm(
        take(tensors, `${posBase}.weight_g`, [1, 1, k]),
        take(tensors, `${posBase}.weight_v`, [d, Math.floor(d / g), k]),
      ),
    );
  } else {
    out.set('pos_conv.weight', take(tensors, `${posBase}.weight`, [d, Math.floor(d / g), k]));
  }
  out.set('pos_conv.bias', take(tensors, `${posBase}.bias`, [d]));
  out.set('pre_norm.weight', take(tensors, 'encoder.layer_norm.weight', [d]));
  out.set('pre_norm.bias', take(tensors, 'encoder.layer_norm.bias', [d]));

  for (let l = 0; l < L; l++) {
    const src = `encoder.layers.${l}`;
    const dst = `layer.${l + 1}`;
    out.set(`${dst}.attn_norm.weight`, take(tensors, `${src}.layer_norm.weight`, [d]));
    out.set(`${dst}.attn_norm.bias`, take(tensors, `${src}.layer_norm.bias`, [d]));
    for (const [to, from] of [
      ['q', 'q_proj'],
      ['k', 'k_proj'],
      ['v', 'v_proj'],
      ['out', 'out_proj'],
    ]) {
      out.set(`${dst}.attn.${to}.weight`, take(tensors, `${src}.attention.${from}.weight`, [d, d]));
      out.set(`${dst}.attn.${to}.bias`, take(tensors, `${src}.attention.${from}.bias`, [d]));
    }
    out.set(`${dst}.ffn_norm.weight`, take(tensors, `${src}.final_layer_norm.weight`, [d]));
    out.set(`${dst}.ffn_norm.bias`, take(tensors, `${src}.final_layer_norm.bias`, [d]));
    out.set(
      `${dst}.ffn.w1.weight`,
      take(tensors, `${src}.feed_forward.intermediate_dense.weight`, [f, d]),
    );
    out.set(`${dst}.ffn.w1.bias`, take(tensors, `${src}.feed_forward.intermediate_dense.bias`, [f]));
    out.set(
      `${dst}.ffn.w2.weight`,
      take(tensors, `${src}.feed_forward.output_dense.weight`, [d, f]),
    );
    out.set(`${dst}.ffn.w2.bias`, take(tensors, `${src}.feed_forward.output_dense.bias`, [d]));
  }
  return out;
}

export function validateFamily(family: Family, config: UpstreamConfig): void {
  const known = FAMILIES[family];
  if (!known) {
    throw new MappingError(`unknown family ${family}`);
  }
  if (config.model_type && !known.modelTypes.includes(config.model_type)) {
    throw new MappingError(
      `family ${family} does not cover checkpoint model_type ${config.model_type}`,
    );
  }
  if (config.hidden_size % config.num_attention_heads !== 0) {
    throw new MappingError('hidden_size not divisible by num_attention_heads');
  }
  const n = config.conv_dim.length;
  if (config.conv_kernel.length !== n || config.conv_stride.length !== n) {
    throw new MappingError('conv_dim/conv_kernel/conv_stride lengths differ');
  }
}

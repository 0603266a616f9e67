// Reference forward pass for the fixed encoder wiring
// "pre_norm_gelu_posconv_v1", computed in float64:
//   strided conv stack (GELU after each layer)
//   -> layer norm over channels -> linear projection to hidden_dim
//   -> x += GELU(grouped positional conv) -> layer norm
//   -> pre-norm transformer blocks: x += attn(LN(x)); x += ffn(LN(x))
// Hidden state l is the output of transformer block l.

import { Tensor, TensorMap } from './container.js';

export interface EncoderShape {
  numLayers: number;
  hiddenDim: number;
  numHeads: number;
  ffnDim: number;
  convStack: Array<[number, number, number]>; // (channels, kernel, stride)
  posConvKernel: number;
  posConvGroups: number;
  layerNormEps: number;
}

export interface Matrix {
  rows: number;
  cols: number;
  data: Float64Array;
}

function matrix(rows: number, cols: number): Matrix {
  return { rows, cols, data: new Float64Array(rows * cols) };
}

export function gelu(x: number): number {
  const c = Math.sqrt(2.0 / Math.PI);
  return 0.5 * x * (1.0 + Math.tanh(c * (x + 0.044715 * x * x * x)));
}

export function convOutputLength(
  inputLen: number,
  convStack: Array<[number, number, number]>,
): number {
  let n = inputLen;
  for (const [, k, s] of convStack) {
    if (n < k) {
      throw new Error(`input too short: ${n} samples against kernel ${k}`);
    }
    n = Math.floor((n - k) / s) + 1;
  }
  return n;
}

function layerNormRows(x: Matrix, weight: Tensor, bias: Tensor, eps: number): Matrix {
  const out = matrix(x.rows, x.cols);
  for (let r = 0; r < x.rows; r++) {
    const off = r * x.cols;
    let mean = 0;
    for (let c = 0; c < x.cols; c++) mean += x.data[off + c];
    mean /= x.cols;
    let variance = 0;
    for (let c = 0; c < x.cols; c++) {
      const d = x.data[off + c] - mean;
      variance += d * d;
    }
    variance /= x.cols;
    const inv = 1.0 / Math.sqrt(variance + eps);
    for (let c = 0; c < x.cols; c++) {
      out.data[off + c] = (x.data[off + c] - mean) * inv * weight.data[c] + bias.data[c];
    }
  }
  return out;
}

/** y = x @ w^T + b with w stored (outDim, inDim), mirroring y = Wx. */
function linearRows(x: Matrix, w: Tensor, b: Tensor): Matrix {
  const [outDim, inDim] = w.shape;
  const out = matrix(x.rows, outDim);
  for (let r = 0; r < x.rows; r++) {
    for (let o = 0; o < outDim; o++) {
      let acc = b.data[o];
      const wOff = o * inDim;
      const xOff = r * inDim;
      for (let i = 0; i < inDim; i++) {
        acc += x.data[xOff + i] * w.data[wOff + i];
      }
      out.data[r * outDim + o] = acc;
    }
  }
  return out;
}

function convFeatures(samples: Float64Array, shape: EncoderShape, tensors: TensorMap): Matrix {
  // channels-major working buffer: x[c][t]
  let channels = 1;
  let length = samples.length;
  let x = Float64Array.from(samples);
  shape.convStack.forEach(([cOut, k, s], i) => {
    if (length < k) {
      throw new Error(`input too short at conv layer ${i}`);
    }
    const w = tensors.get(`frontend.conv.${i}.weight`)!;
    const b = tensors.get(`frontend.conv.${i}.bias`)!;
    const outLen = Math.floor((length - k) / s) + 1;
    const next = new Float64Array(cOut * outLen);
    for (let o = 0; o < cOut; o++) {
      for (let t = 0; t < outLen; t++) {
        let acc = b.data[o];
        for (let ci = 0; ci < channels; ci++) {
          const wOff = (o * channels + ci) * k;
          const xOff = ci * length + t * s;
          for (let kk = 0; kk < k; kk++) {
            acc += w.data[wOff + kk] * x[xOff + kk];
          }
        }
        next[o * outLen + t] = gelu(acc);
      }
    }
    x = next;
    channels = cOut;
    length = outLen;
  });

  // transpose to (T, C), then channel layer norm + projection
  const feats = matrix(length, channels);
  for (let c = 0; c < channels; c++) {
    for (let t = 0; t < length; t++) {
      feats.data[t * channels + c] = x[c * length + t];
    }
  }
  const normed = layerNormRows(
    feats,
    tensors.get('frontend.norm.weight')!,
    tensors.get('frontend.norm.bias')!,
    shape.layerNormEps,
  );
  return linearRows(normed, tensors.get('frontend.proj.weight')!, tensors.get('frontend.proj.bias')!);
}

function positionalConv(x: Matrix, shape: EncoderShape, tensors: TensorMap): Matrix {
  const w = tensors.get('pos_conv.weight')!;
  const b = tensors.get('pos_conv.bias')!;
  const k = shape.posConvKernel;
  const g = shape.posConvGroups;
  const d = shape.hiddenDim;
  const T = x.rows;
  const pad = Math.floor(k / 2);
  const groupSize = Math.floor(d / g);
  const out = matrix(T, d);
  for (let o = 0; o < d; o++) {
    const gi = Math.floor(o / groupSize);
    for (let t = 0; t < T; t++) {
      let acc = b.data[o];
      for (let j = 0; j < groupSize; j++) {
        const src = gi * groupSize + j;
        const wOff = (o * groupSize + j) * k;
        for (let kk = 0; kk < k; kk++) {
          const tt = t - pad + kk;
          if (tt >= 0 && tt < T) {
            acc += w.data[wOff + kk] * x.data[tt * d + src];
          }
        }
      }
      out.data[t * d + o] = gelu(acc);
    }
  }
  // for even kernels the wiring trims the final frame, which the same-length
  // indexing above already never produces
  return out;
}

function transformerLayer(x: Matrix, layer: number, shape: EncoderShape, tensors: TensorMap): Matrix {
  const d = shape.hiddenDim;
  const H = shape.numHeads;
  const dh = Math.floor(d / H);
  const T = x.rows;
  const p = `layer.${layer}`;
  const eps = shape.layerNormEps;

  const h = layerNormRows(
    x, tensors.get(`${p}.attn_norm.weight`)!, tensors.get(`${p}.attn_norm.bias`)!, eps,
  );
  const q = linearRows(h, tensors.get(`${p}.attn.q.weight`)!, tensors.get(`${p}.attn.q.bias`)!);
  const k = linearRows(h, tensors.get(`${p}.attn.k.weight`)!, tensors.get(`${p}.attn.k.bias`)!);
  const v = linearRows(h, tensors.get(`${p}.attn.v.weight`)!, tensors.get(`${p}.attn.v.bias`)!);

  const ctx = matrix(T, d);
  const scale = 1.0 / Math.sqrt(dh);
  const scores = new Float64Array(T);
  for (let head = 0; head < H; head++) {
    const base = head * dh;
    for (let ti = 0; ti < T; ti++) {
      let maxScore = -Infinity;
      for (let tj = 0; tj < T; tj++) {
        let acc = 0;
        for (let c = 0; c < dh; c++) {
          acc += q.data[ti * d + base + c] * k.data[tj * d + base + c];
        }
        scores[tj] = acc * scale;
        if (scores[tj] > maxScore) maxScore = scores[tj];
      }
      let denom = 0;
      for (let tj = 0; tj < T; tj++) {
        scores[tj] = Math.exp(scores[tj] - maxScore);
        denom += scores[tj];
      }
      for (let c = 0; c < dh; c++) {
        let acc = 0;
        for (let tj = 0; tj < T; tj++) {
          acc += scores[tj] * v.data[tj * d + base + c];
        }
        ctx.data[ti * d + base + c] = acc / denom;
      }
    }
  }

  const attnOut = linearRows(
    ctx, tensors.get(`${p}.attn.out.weight`)!, tensors.get(`${p}.attn.out.bias`)!,
  );
  const mid = matrix(T, d);
  for (let i = 0; i < mid.data.length; i++) mid.data[i] = x.data[i] + attnOut.data[i];

  const h2 = layerNormRows(
    mid, tensors.get(`${p}.ffn_norm.weight`)!, tensors.get(`${p}.ffn_norm.bias`)!, eps,
  );
  const ff1 = linearRows(h2, tensors.get(`${p}.ffn.w1.weight`)!, tensors.get(`${p}.ffn.w1.bias`)!);
  for (let i = 0; i < ff1.data.length; i++) ff1.data[i] = gelu(ff1.data[i]);
  const ff2 = linearRows(ff1, tensors.get(`${p}.ffn.w2.weight`)!, tensors.get(`${p}.ffn.w2.bias`)!);

  const out = matrix(T, d);
  for (let i = 0; i < out.data.length; i++) {
    const value = mid.data[i] + ff2.data[i];
    if (!Number.isFinite(value)) {
      throw new Error(`non-finite output from transformer layer ${layer}`);
    }
    out.data[i] = value;
  }
  return out;
}

/** Hidden states of layers 1..maxLayers for a raw sample vector. */
export function encode(
  samples: Float64Array,
  shape: EncoderShape,
  tensors: TensorMap,
  maxLayers: number,
): Matrix[] {
  if (maxLayers < 1 || maxLayers > shape.numLayers) {
    throw new Error(`maxLayers ${maxLayers} out of range 1..${shape.numLayers}`);
  }
  let x = convFeatures(samples, shape, tensors);
  const pos = positionalConv(x, shape, tensors);
  for (let i = 0; i < x.data.length; i++) x.data[i] += pos.data[i];
  x = layerNormRows(
    x, tensors.get('pre_norm.weight')!, tensors.get('pre_norm.bias')!, shape.layerNormEps,
  );
  const states: Matrix[] = [];
  for (let l = 1; l <= maxLayers; l++) {
    x = transformerLayer(x, l, shape, tensors);
    states.push({ rows: x.rows, cols: x.cols, data: Float64Array.from(x.data) });
  }
  return states;
}

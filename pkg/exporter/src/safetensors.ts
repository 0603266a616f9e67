// Minimal safetensors reader: u64 little-endian header length, JSON header
// mapping tensor names to {dtype, shape, data_offsets}, then the raw blob.
// Only the dtypes that appear in speech-encoder checkpoints are supported.

import { Tensor, TensorMap, numel } from './container.js';

export class SafetensorsError extends Error {}

interface HeaderEntry {
  dtype: string;
  shape: number[];
  data_offsets: [number, number];
}

export function parseSafetensors(data: Uint8Array): {
  tensors: TensorMap;
  metadata: Record<string, string>;
} {
  if (data.length < 8) {
    throw new SafetensorsError('file too short for header length');
  }
  const view = new DataView(data.buffer, data.byteOffset);
  const headerLen = Number(view.getBigUint64(0, true));
  if (8 + headerLen > data.length) {
    throw new SafetensorsError('header length exceeds file size');
  }
  let header: Record<string, HeaderEntry | Record<string, string>>;
  try {
    header = JSON.parse(new TextDecoder().decode(data.subarray(8, 8 + headerLen)));
  } catch (e) {
    throw new SafetensorsError(`bad JSON header: ${e}`);
  }
  const blob = data.subarray(8 + headerLen);
  const tensors: TensorMap = new Map();
  let metadata: Record<string, string> = {};
  for (const [name, raw] of Object.entries(header)) {
    if (name === '__metadata__') {
      metadata = raw as Record<string, string>;
      continue;
    }
    const entry = raw as HeaderEntry;
    const [start, end] = entry.data_offsets;
    if (start < 0 || end > blob.length || end < start) {
      throw new SafetensorsError(`data_offsets out of range for ${name}`);
    }
    tensors.set(name, decodeTensor(name, entry, blob.subarray(start, end)));
  }
  return { tensors, metadata };
}

function decodeTensor(name: string, entry: HeaderEntry, bytes: Uint8Array): Tensor {
  const n = numel(entry.shape);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const data = new Float32Array(n);
  switch (entry.dtype) {
    case 'F32':
      if (bytes.length !== 4 * n) {
        throw new SafetensorsError(`size mismatch for ${name}`);
      }
      for (let i = 0; i < n; i++) data[i] = view.getFloat32(4 * i, true);
      break;
    case 'F64':
      if (bytes.length !== 8 * n) {
        throw new SafetensorsError(`size mismatch for ${name}`);
      }
      for (let i = 0; i < n; i++) data[i] = view.getFloat64(8 * i, true);
      break;
    case 'F16':
      if (bytes.length !== 2 * n) {
        throw new SafetensorsError(`size mismatch for ${name}`);
      }
      for (let i = 0; i < n; i++) data[i] = halfToFloat(view.getUint16(2 * i, true));
      break;
    default:
      throw new SafetensorsError(`unsupported dtype ${entry.dtype} for ${name}`);
  }
  return { shape: entry.shape, data };
}

function halfToFloat(h: number): number {
  const sign = (h & 0x8000) ? -1 : 1;
  const exp = (h >> 10) & 0x1f;
  const frac = h & 0x3ff;
  if (exp === 0) return sign * frac * 2 ** -24;
  if (exp === 31) return frac ? NaN : sign * Infinity;
  return sign * (1 + frac / 1024) * 2 ** (exp - 15);
}

/** Serialize a tensor map to safetensors bytes (used to fabricate test checkpoints). */
export function writeSafetensors(
  tensors: TensorMap,
  metadata?: Record<string, string>,
): Uint8Array {
  const header: Record<string, unknown> = {};
  if (metadata) header['__metadata__'] = metadata;
  let offset = 0;
  for (const [name, t] of tensors) {
    header[name] = {
      dtype: 'F32',
      shape: t.shape,
      data_offsets: [offset, offset + 4 * t.data.length],
    };
    offset += 4 * t.data.length;
  }
  const headerBytes = new TextEncoder().encode(JSON.stringify(header));
  const out = new Uint8Array(8 + headerBytes.length + offset);
  new DataView(out.buffer).setBigUint64(0, BigInt(headerBytes.length), true);
  out.set(headerBytes, 8);
  let pos = 8 + headerBytes.length;
  for (const t of tensors.values()) {
    const view = new DataView(out.buffer, pos);
    for (let i = 0; i < t.data.length; i++) view.setFloat32(4 * i, t.data[i], true);
    pos += 4 * t.data.length;
  }
  return out;
}

// Single-file tensor container: "LPROBE01" magic, little-endian u32 header
// length, UTF-8 JSON header {version, metadata, manifest}, then densely
// packed little-endian float32 tensor data. Mirrors the primary toolkit's
// reader bit for bit.

export const MAGIC = 'LPROBE01';
export const FORMAT_VERSION = 1;

export interface Tensor {
  shape: number[];
  data: Float32Array;
}

export type TensorMap = Map<string, Tensor>;

export interface Container {
  version: number;
  metadata: Record<string, unknown>;
  tensors: TensorMap;
}

export class ContainerError extends Error {}

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

/** JSON with recursively sorted object keys, so output bytes are stable. */
export function stableStringify(value: unknown): string {
  if (value === null || typeof value !== 'object') {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return '[' + value.map(stableStringify).join(',') + ']';
  }
  const keys = Object.keys(value as Record<string, unknown>).sort();
  const parts = keys.map(
    (k) => JSON.stringify(k) + ':' + stableStringify((value as Record<string, unknown>)[k]),
  );
  return '{' + parts.join(',') + '}';
}

export function writeContainer(
  tensors: TensorMap,
  metadata: Record<string, unknown>,
): Uint8Array {
  if (tensors.size === 0) {
    throw new ContainerError('empty container');
  }
  const manifest: object[] = [];
  let offset = 0;
  for (const [name, t] of tensors) {
    const length = 4 * t.data.length;
    if (t.data.length === 0) {
      throw new ContainerError(`tensor ${name} is empty`);
    }
    if (t.data.length !== numel(t.shape)) {
      throw new ContainerError(`tensor ${name}: data length does not match shape`);
    }
    for (const v of t.data) {
      if (!Number.isFinite(v)) {
        throw new ContainerError(`tensor ${name} contains NaN/Inf`);
      }
    }
    manifest.push({
      name,
      dtype: 'f32',
      shape: t.shape,
      byte_offset: offset,
      byte_length: length,
    });
    offset += length;
  }

  const header = new TextEncoder().encode(
    stableStringify({ version: FORMAT_VERSION, metadata, manifest }),
  );
  const out = new Uint8Array(8 + 4 + header.length + offset);
  out.set(new TextEncoder().encode(MAGIC), 0);
  new DataView(out.buffer).setUint32(8, header.length, true);
  out.set(header, 12);

  let pos = 12 + header.length;
  for (const t of tensors.values()) {
    const view = new DataView(out.buffer, pos, 4 * t.data.length);
    for (let i = 0; i < t.data.length; i++) {
      view.setFloat32(4 * i, t.data[i], true);
    }
    pos += 4 * t.data.length;
  }
  return out;
}

interface ManifestEntry {
  name: string;
  dtype: string;
  shape: number[];
  byte_offset: number;
  byte_length: number;
}

export function readContainer(data: Uint8Array): Container {
  if (data.length < 12 || new TextDecoder().decode(data.subarray(0, 8)) !== MAGIC) {
    throw new ContainerError('corrupt header: bad magic');
  }
  const headerLen = new DataView(data.buffer, data.byteOffset).getUint32(8, true);
  if (12 + headerLen > data.length) {
    throw new ContainerError('corrupt header: header length exceeds file size');
  }
  let header: { version?: number; metadata?: Record<string, unknown>; manifest?: ManifestEntry[] };
  try {
    header = JSON.parse(new TextDecoder().decode(data.subarray(12, 12 + headerLen)));
  } catch (e) {
    throw new ContainerError(`corrupt header: ${e}`);
  }
  if (header.version !== FORMAT_VERSION) {
    throw new ContainerError(`unknown format version ${header.version}`);
  }
  const blob = data.subarray(12 + headerLen);
  const tensors: TensorMap = new Map();
  let expect = 0;
  for (const entry of header.manifest ?? []) {
    if (entry.dtype !== 'f32') {
      throw new ContainerError(`unsupported dtype ${entry.dtype} for ${entry.name}`);
    }
    if (entry.byte_length !== 4 * numel(entry.shape)) {
      throw new ContainerError(`byte_length/shape mismatch for ${entry.name}`);
    }
    if (entry.byte_offset !== expect) {
      throw new ContainerError(`manifest not densely packed at ${entry.name}`);
    }
    if (entry.byte_offset + entry.byte_length > blob.length) {
      throw new ContainerError(`blob overrun at ${entry.name}`);
    }
    if (tensors.has(entry.name)) {
      throw new ContainerError(`duplicate tensor name ${entry.name}`);
    }
    const view = new DataView(blob.buffer, blob.byteOffset + entry.byte_offset, entry.byte_length);
    const arr = new Float32Array(entry.byte_length / 4);
    for (let i = 0; i < arr.length; i++) {
      arr[i] = view.getFloat32(4 * i, true);
    }
    tensors.set(entry.name, { shape: entry.shape, data: arr });
    expect += entry.byte_length;
  }
  if (expect !== blob.length) {
    throw new ContainerError('blob overrun: trailing bytes not covered by manifest');
  }
  return { version: FORMAT_VERSION, metadata: header.metadata ?? {}, tensors };
}

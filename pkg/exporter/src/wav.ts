// Minimal RIFF/WAVE reader for golden-input audio: 16-bit PCM or 32-bit
// float, mono or averaged-down multichannel, 16 kHz required.

export class WavError extends Error {}

export const SAMPLE_RATE = 16000;

export function decodeWav(data: Uint8Array): Float64Array {
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const tag = (off: number) => new TextDecoder().decode(data.subarray(off, off + 4));
  if (data.length < 44 || tag(0) !== 'RIFF' || tag(8) !== 'WAVE') {
    throw new WavError('not a RIFF/WAVE file');
  }
  let pos = 12;
  let format = 0;
  let channels = 0;
  let sampleRate = 0;
  let bitsPerSample = 0;
  let samples: Float64Array | null = null;
  while (pos + 8 <= data.length) {
    const chunkId = tag(pos);
    const chunkLen = view.getUint32(pos + 4, true);
    if (chunkId === 'fmt ') {
      format = view.getUint16(pos + 8, true);
      channels = view.getUint16(pos + 10, true);
      sampleRate = view.getUint32(pos + 12, true);
      bitsPerSample = view.getUint16(pos + 22, true);
    } else if (chunkId === 'data') {
      samples = decodeData(view, pos + 8, chunkLen, format, bitsPerSample, channels);
    }
    pos += 8 + chunkLen + (chunkLen % 2);
  }
  if (samples === null) {
    throw new WavError('missing data chunk');
  }
  if (sampleRate !== SAMPLE_RATE) {
    throw new WavError(`expected ${SAMPLE_RATE} Hz audio, got ${sampleRate}`);
  }
  return samples;
}

function decodeData(
  view: DataView,
  offset: number,
  length: number,
  format: number,
  bits: number,
  channels: number,
): Float64Array {
  let mono: Float64Array;
  if (format === 1 && bits === 16) {
    const frames = Math.floor(length / 2 / channels);
    mono = new Float64Array(frames);
    for (let i = 0; i < frames; i++) {
      let acc = 0;
      for (let c = 0; c < channels; c++) {
        acc += view.getInt16(offset + 2 * (i * channels + c), true) / 32768;
      }
      mono[i] = acc / channels;
    }
  } else if (format === 3 && bits === 32) {
    const frames = Math.floor(length / 4 / channels);
    mono = new Float64Array(frames);
    for (let i = 0; i < frames; i++) {
      let acc = 0;
      for (let c = 0; c < channels; c++) {
        acc += view.getFloat32(offset + 4 * (i * channels + c), true);
      }
      mono[i] = acc / channels;
    }
  } else {
    throw new WavError(`unsupported WAV encoding: format ${format}, ${bits} bits`);
  }
  return mono;
}

export const GOLDEN_LENGTH = 64600;

/** Deterministic bundled golden input: 64,600 samples of seeded pseudo-random
 *  noise in [-0.5, 0.5). Fixed forever; exported files embed the samples, so
 *  conformance never depends on this function staying reachable. */
export function defaultGoldenInput(): Float64Array {
  let state = 0x9e3779b9;
  const out = new Float64Array(GOLDEN_LENGTH);
  for (let i = 0; i < GOLDEN_LENGTH; i++) {
    // mulberry32
    state = (state + 0x6d2b79f5) | 0;
    let t = state ^ (state >>> 15);
    t = Math.imul(t, 1 | state);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    const u = ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    out[i] = Math.fround(u - 0.5);
  }
  return out;
}

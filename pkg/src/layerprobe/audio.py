"""WAV decoding and fixed-length windowing for 16 kHz mono input."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
DEFAULT_WINDOW = 64600  # ~4 seconds at 16 kHz


@dataclass
class AudioSegment:
    samples: np.ndarray  # f32 in [-1, 1]
    sample_rate: int
    utt_id: str = ""


def decode_wav(path, utt_id: str = "") -> AudioSegment:
    """Decode a PCM WAV file to normalized mono f32 samples.

    16-bit PCM is scaled by 1/32768; float WAVs pass through. Multichannel
    audio is averaged to mono. Only 16 kHz input is accepted (no resampler).
    """
    try:
        rate, data = wavfile.read(path)
    except ValueError as e:
        raise ValueError(f"unsupported codec in {path}: {e}") from e
    if rate != SAMPLE_RATE:
        raise ValueError(f"sample rate mismatch: {path} is {rate} Hz, expected {SAMPLE_RATE}")
    if data.size == 0:
        raise ValueError(f"zero-length audio: {path}")

    if data.dtype == np.int16:
        samples = data.astype(np.float32) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float32) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float32)
    else:
        raise ValueError(f"unsupported sample format {data.dtype} in {path}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if not np.all(np.isfinite(samples)):
        raise ValueError(f"non-finite samples in {path}")
    return AudioSegment(samples=samples, sample_rate=rate, utt_id=utt_id)


def crop_or_pad(
    segment: AudioSegment,
    target_len: int = DEFAULT_WINDOW,
    mode: str = "eval_start",
    rng: np.random.Generator | None = None,
) -> AudioSegment:
    """Produce a fixed-length window by cropping or self-tiling.

    Short signals are tiled (concatenated with themselves) up to the target
    length. mode "train_random" picks a random window start from ``rng``,
    "eval_start" is deterministic from sample 0, "full" returns the input
    unchanged (used for partial-fake evaluation on whole utterances).
    """
    if target_len <= 0:
        raise ValueError("target_len must be positive")
    if segment.samples.size == 0:
        raise ValueError("empty segment")
    if mode == "full":
        return segment
    if mode not in ("train_random", "eval_start"):
        raise ValueError(f"unknown crop mode {mode!r}")

    samples = segment.samples
    if samples.size < target_len:
        reps = -(-target_len // samples.size)
        samples = np.tile(samples, reps)

    if mode == "train_random":
        if rng is None:
            raise ValueError("train_random cropping requires an rng")
        start = int(rng.integers(0, samples.size - target_len + 1))
    else:
        start = 0
    out = samples[start : start + target_len]
    return AudioSegment(samples=out, sample_rate=segment.sample_rate, utt_id=segment.utt_id)


def write_wav(path, samples: np.ndarray) -> None:
    """Write mono f32 samples as 16-bit PCM at 16 kHz."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64) * 32767.0, -32768, 32767)
    wavfile.write(path, SAMPLE_RATE, pcm.astype(np.int16))

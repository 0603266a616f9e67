"""Synthetic two-class audio corpus for desk-scale end-to-end validation.

Class "bonafide" is a harmonic tone mixture with all partials below 1 kHz;
class "spoof" is band-limited noise in 2-6 kHz, rendered at a much lower
level. Both cues are gross: the bands are disjoint (a band-energy classifier
gets 0% error) and the signal levels differ by an order of magnitude, so
even a tiny randomly initialized frozen encoder yields linearly separable
pooled features. This is a pipeline test, not a representation-learning one.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, write_wav


@dataclass(frozen=True)
class SynthSpec:
    n_per_class: int
    seed: int
    duration_samples: int = 64600
    fundamental_hz: tuple[float, float] = (120.0, 300.0)
    partial_count: int = 3
    noise_band_hz: tuple[float, float] = (2000.0, 6000.0)
    tone_peak: float = 0.9
    noise_peak: float = 0.06


def _tone(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    t = np.arange(spec.duration_samples) / SAMPLE_RATE
    f0 = rng.uniform(*spec.fundamental_hz)
    sig = np.zeros_like(t)
    for k in range(1, spec.partial_count + 1):
        phase = rng.uniform(0, 2 * np.pi)
        sig += np.sin(2 * np.pi * k * f0 * t + phase) / k
    return sig


def _band_noise(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    noise = rng.standard_normal(spec.duration_samples)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(spec.duration_samples, d=1.0 / SAMPLE_RATE)
    lo, hi = spec.noise_band_hz
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spectrum, n=spec.duration_samples)


def generate_corpus(spec: SynthSpec, out_dir) -> Path:
    """Write WAVs and a 2-field protocol file; fully determined by the seed.

    Returns the protocol file path; audio root is out_dir itself.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    # independent per-file streams so generation order never matters
    seq = np.random.SeedSequence(spec.seed)
    streams = seq.spawn(2 * spec.n_per_class)
    for i in range(spec.n_per_class):
        per_class = (
            ("bona", _tone, "bonafide", spec.tone_peak),
            ("spoof", _band_noise, "spoof", spec.noise_peak),
        )
        for cls, maker, label, peak in per_class:
            idx = 2 * i + (0 if cls == "bona" else 1)
            rng = np.random.default_rng(streams[idx])
            sig = maker(rng, spec)
            sig = sig / np.abs(sig).max() * peak
            utt_id = f"{cls}_{i:04d}"
            write_wav(out_dir / f"{utt_id}.wav", sig)
            lines.append(f"{utt_id} {label}\n")
    protocol = out_dir / "protocol.txt"
    protocol.write_text("".join(lines), encoding="utf-8")
    return protocol

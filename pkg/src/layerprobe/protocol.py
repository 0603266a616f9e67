"""Protocol file parsing, dataset splits, and deterministic batching.

Two accepted line layouts:
    minimal (2 fields):        <utt_id> <label>
    ASVspoof-style (>=5):      <speaker> <utt_id> - <attack> <label>
with label in {bonafide, spoof}.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LABELS = ("bonafide", "spoof")


@dataclass(frozen=True)
class ProtocolEntry:
    utt_id: str
    label: str
    audio_path: Path
    attack_tag: str | None = None


@dataclass
class DatasetSplit:
    entries: list[ProtocolEntry]
    split_name: str = "train"


def parse_protocol(path, audio_root) -> list[ProtocolEntry]:
    """Parse a protocol file into entries, resolving audio paths under audio_root."""
    audio_root = Path(audio_root)
    entries: list[ProtocolEntry] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) < 2:
                raise ValueError(f"{path}:{lineno}: expected at least 2 fields")
            label = fields[-1]
            if label not in LABELS:
                raise ValueError(f"{path}:{lineno}: unknown label {label!r}")
            if len(fields) >= 5:
                utt_id = fields[1]
                attack_tag = fields[3]
            else:
                utt_id = fields[0]
                attack_tag = None
            if utt_id in seen:
                raise ValueError(f"{path}:{lineno}: duplicate utt_id {utt_id!r}")
            seen.add(utt_id)
            if utt_id.endswith(".wav"):
                audio_path = audio_root / utt_id
                utt_id = utt_id[:-4]
            else:
                audio_path = audio_root / f"{utt_id}.wav"
            entries.append(
                ProtocolEntry(utt_id=utt_id, label=label, audio_path=audio_path, attack_tag=attack_tag)
            )
    return entries


def make_batches(
    split: DatasetSplit, batch_size: int = 32, seed: int = 0
) -> list[list[ProtocolEntry]]:
    """Seeded permutation of the split partitioned into consecutive chunks.

    The final short chunk is kept. Identical seeds yield identical batches.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not split.entries:
        raise ValueError(f"empty split {split.split_name!r}")
    order = np.random.default_rng(seed).permutation(len(split.entries))
    shuffled = [split.entries[i] for i in order]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


def export_entries_csv(entries: list[ProtocolEntry], path) -> None:
    """Audit CSV of parsed protocol entries."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["utt_id", "label", "audio_path", "attack_tag"])
        for e in entries:
            writer.writerow([e.utt_id, e.label, str(e.audio_path), e.attack_tag or ""])

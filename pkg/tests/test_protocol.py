from pathlib import Path

import numpy as np
import pytest

from layerprobe.protocol import DatasetSplit, export_entries_csv, make_batches, parse_protocol


def write_proto(tmp_path, text):
    path = tmp_path / "protocol.txt"
    path.write_text(text, encoding="utf-8")
    return path


def test_minimal_two_field_layout(tmp_path):
    path = write_proto(tmp_path, "LA_0001 bonafide\n")
    entries = parse_protocol(path, tmp_path)
    assert len(entries) == 1
    e = entries[0]
    assert e.utt_id == "LA_0001"
    assert e.label == "bonafide"
    assert e.audio_path == Path(tmp_path) / "LA_0001.wav"
    assert e.attack_tag is None


def test_asvspoof_five_field_layout(tmp_path):
    # oracle: hand-parse of "speaker utt - attack key"
    path = write_proto(tmp_path, "SPK1 LA_E_1001 - A07 spoof\n")
    e = parse_protocol(path, tmp_path)[0]
    assert e.utt_id == "LA_E_1001"
    assert e.label == "spoof"
    assert e.attack_tag == "A07"


def test_unknown_label(tmp_path):
    path = write_proto(tmp_path, "X Y maybe\n")
    with pytest.raises(ValueError, match="unknown label"):
        parse_protocol(path, tmp_path)


def test_duplicate_utt_id(tmp_path):
    path = write_proto(tmp_path, "u1 bonafide\nu1 spoof\n")
    with pytest.raises(ValueError, match="duplicate"):
        parse_protocol(path, tmp_path)


def test_order_preserving_and_idempotent(tmp_path):
    text = "".join(f"u{i} {'bonafide' if i % 2 else 'spoof'}\n" for i in range(20))
    path = write_proto(tmp_path, text)
    a = parse_protocol(path, tmp_path)
    b = parse_protocol(path, tmp_path)
    assert a == b
    assert [e.utt_id for e in a] == [f"u{i}" for i in range(20)]


def _split(n):
    path_entries = []
    from layerprobe.protocol import ProtocolEntry

    for i in range(n):
        path_entries.append(
            ProtocolEntry(utt_id=f"u{i}", label="bonafide", audio_path=Path(f"u{i}.wav"))
        )
    return DatasetSplit(path_entries, "train")


def test_batch_counts_64():
    batches = make_batches(_split(64), 32, seed=0)
    assert [len(b) for b in batches] == [32, 32]


def test_batch_counts_65_keeps_short_tail():
    batches = make_batches(_split(65), 32, seed=0)
    assert [len(b) for b in batches] == [32, 32, 1]


def test_batches_partition_entries():
    split = _split(50)
    batches = make_batches(split, 8, seed=5)
    seen = [e.utt_id for b in batches for e in b]
    assert sorted(seen) == sorted(e.utt_id for e in split.entries)


def test_same_seed_identical_different_seeds_differ():
    split = _split(40)
    a = make_batches(split, 32, seed=123)
    b = make_batches(split, 32, seed=123)
    assert [[e.utt_id for e in batch] for batch in a] == [[e.utt_id for e in batch] for batch in b]
    differing = 0
    base = [e.utt_id for batch in a for e in batch]
    for seed in range(100):
        other = [e.utt_id for batch in make_batches(split, 32, seed=1000 + seed) for e in batch]
        if other != base:
            differing += 1
    assert differing > 90


def test_empty_split_rejected():
    with pytest.raises(ValueError, match="empty split"):
        make_batches(_split(0), 32, seed=0)


def test_csv_export(tmp_path):
    path = write_proto(tmp_path, "u1 bonafide\nu2 spoof\n")
    entries = parse_protocol(path, tmp_path)
    out = tmp_path / "audit.csv"
    export_entries_csv(entries, out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "utt_id,label,audio_path,attack_tag"
    assert lines[1].startswith("u1,bonafide,")

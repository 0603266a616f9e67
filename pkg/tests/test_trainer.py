import numpy as np
import pytest

from layerprobe.protocol import DatasetSplit, ProtocolEntry
from layerprobe.trainer import (
    AdamState,
    FeatureCache,
    TrainConfig,
    adam_step,
    cache_layer_features,
    score_split,
    train,
)
from layerprobe.aggregation import LayerWeightVector
from layerprobe.backend import FFNBackend

SEG_LEN = 2000


def make_split(n_per_class, seed, name="train"):
    """In-memory split: bonafide = low tone, spoof = broadband noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(SEG_LEN) / 16000.0
    entries, audio = [], {}
    for i in range(n_per_class):
        utt = f"{name}_b{i}"
        entries.append(ProtocolEntry(utt, "bonafide", f"{utt}.wav"))
        audio[utt] = (0.5 * np.sin(2 * np.pi * rng.uniform(150, 250) * t)).astype(np.float32)
        utt = f"{name}_s{i}"
        entries.append(ProtocolEntry(utt, "spoof", f"{utt}.wav"))
        audio[utt] = rng.uniform(-0.5, 0.5, SEG_LEN).astype(np.float32)
    return DatasetSplit(entries=entries, split_name=name), audio


def quick_config(**kw):
    base = dict(
        lr=1e-3, batch_size=4, max_epochs=3, patience=3, dropout_p=0.1,
        seeds=(7,), truncate_layers=2, segment_len=SEG_LEN,
    )
    base.update(kw)
    return TrainConfig(**base)


# ---------- Adam ----------

def test_adam_zero_grad_is_noop():
    p = {"w": np.array([1.0, -2.0])}
    state = AdamState.init(p)
    adam_step(p, {"w": np.zeros(2)}, state, 1, quick_config())
    assert np.array_equal(p["w"], [1.0, -2.0])


def test_adam_first_step_is_signed_lr():
    # oracle: at t=1, m_hat = g and v_hat = g*g, so the step is lr*sign(g)
    # up to the eps term
    config = quick_config(lr=0.01)
    p = {"w": np.array([0.0, 0.0])}
    state = AdamState.init(p)
    adam_step(p, {"w": np.array([3.0, -0.5])}, state, 1, config)
    assert np.allclose(p["w"], [-0.01, 0.01], atol=1e-6)


def test_adam_rejects_bad_step_index():
    p = {"w": np.zeros(1)}
    with pytest.raises(ValueError):
        adam_step(p, {"w": np.zeros(1)}, AdamState.init(p), 0, quick_config())


def test_adam_rejects_non_finite_grad():
    p = {"w": np.zeros(1)}
    with pytest.raises(FloatingPointError):
        adam_step(p, {"w": np.array([np.nan])}, AdamState.init(p), 1, quick_config())


def test_adam_accumulates_momentum():
    config = quick_config(lr=0.01)
    p = {"w": np.array([0.0])}
    state = AdamState.init(p)
    g = {"w": np.array([1.0])}
    adam_step(p, g, state, 1, config)
    adam_step(p, g, state, 2, config)
    # constant gradient: both bias-corrected steps equal lr (up to eps)
    assert p["w"][0] == pytest.approx(-0.02, abs=1e-5)


# ---------- config validation ----------

def test_config_collects_all_errors():
    bad = TrainConfig(lr=0.0, batch_size=0, patience=20, max_epochs=10,
                      truncate_layers=0, seeds=(), dropout_p=1.5)
    errors = bad.validate()
    assert len(errors) >= 5
    assert any("lr" in e for e in errors)
    assert any("patience" in e for e in errors)


def test_train_rejects_invalid_config(toy_model):
    split, audio = make_split(2, 0)
    with pytest.raises(ValueError, match="lr"):
        train(quick_config(lr=-1.0), toy_model, split, split, audio=audio)


def test_train_rejects_truncation_beyond_model(toy_model):
    split, audio = make_split(2, 0)
    with pytest.raises(ValueError, match="exceeds"):
        train(quick_config(truncate_layers=9), toy_model, split, split, audio=audio)


def test_train_rejects_empty_split(toy_model):
    split, audio = make_split(2, 0)
    empty = DatasetSplit(entries=[], split_name="dev")
    with pytest.raises(ValueError, match="non-empty"):
        train(quick_config(), toy_model, split, empty, audio=audio)


# ---------- training behavior ----------

def run_training(toy_model, **kw):
    tr, tr_audio = make_split(4, 1, "train")
    dev, dev_audio = make_split(2, 2, "dev")
    audio = {**tr_audio, **dev_audio}
    return train(quick_config(**kw), toy_model, tr, dev, audio=audio)


def test_train_returns_one_run_per_seed(toy_model):
    runs = run_training(toy_model, seeds=(3, 4))
    assert [r.seed for r in runs] == [3, 4]
    for r in runs:
        assert r.failed is None
        assert 1 <= r.best_epoch <= len(r.epoch_losses)
        assert r.final_tensors["agg.raw"].shape == (2,)
        assert "backend.head.weight" in r.final_tensors


def test_train_same_seed_bitwise_identical(toy_model):
    a = run_training(toy_model, seeds=(11,))[0]
    b = run_training(toy_model, seeds=(11,))[0]
    assert a.epoch_losses == b.epoch_losses
    assert a.best_epoch == b.best_epoch
    for name, arr in a.final_tensors.items():
        assert arr.tobytes() == b.final_tensors[name].tobytes(), name


def test_train_different_seeds_differ(toy_model):
    runs = run_training(toy_model, seeds=(1, 2))
    assert runs[0].epoch_losses != runs[1].epoch_losses


def test_encoder_frozen_through_training(toy_model):
    before = toy_model.checksum
    run_training(toy_model, seeds=(5,))
    from layerprobe.container import tensors_checksum

    assert tensors_checksum(toy_model.tensors) == before


def test_patience_one_stops_at_first_regression(toy_model):
    run = run_training(toy_model, seeds=(6,), max_epochs=10, patience=1)[0]
    if run.stopped_early:
        assert run.best_epoch == len(run.epoch_losses) - 1
    else:
        assert len(run.epoch_losses) == 10


# ---------- scoring ----------

def test_score_split_deterministic(toy_model):
    split, audio = make_split(3, 4, "eval")
    backend = FFNBackend.init(16, np.random.default_rng(0))
    weights = LayerWeightVector(np.ones(2, dtype=np.float32))
    a = score_split(toy_model, backend, weights, split, 2, SEG_LEN, audio)
    b = score_split(toy_model, backend, weights, split, 2, SEG_LEN, audio)
    assert [e.score for e in a.entries] == [e.score for e in b.entries]
    assert [e.utt_id for e in a.entries] == [e.utt_id for e in split.entries]


# ---------- feature cache ----------

def test_cache_avoids_recomputation(tmp_path, toy_model):
    split, audio = make_split(3, 5, "eval")
    cache_layer_features(split, toy_model, 4, tmp_path, audio, SEG_LEN)
    fresh = FeatureCache(tmp_path, toy_model, 4, SEG_LEN)
    before = toy_model.layer_calls
    stacks = {e.utt_id: fresh.get(e.utt_id, audio[e.utt_id]) for e in split.entries}
    assert toy_model.layer_calls == before  # served entirely from disk

    from layerprobe.trainer import _encode_eval

    for e in split.entries:
        direct = _encode_eval(toy_model, 4, SEG_LEN, e.utt_id, audio[e.utt_id], None)
        for a, b in zip(stacks[e.utt_id].features, direct.features):
            assert a.tobytes() == b.tobytes()


def test_cache_prefix_reuse(tmp_path, toy_model):
    split, audio = make_split(2, 6, "eval")
    cache_layer_features(split, toy_model, 4, tmp_path, audio, SEG_LEN)
    smaller = FeatureCache(tmp_path, toy_model, 2, SEG_LEN)
    before = toy_model.layer_calls
    stack = smaller.get(split.entries[0].utt_id, audio[split.entries[0].utt_id])
    assert toy_model.layer_calls == before
    assert len(stack.features) == 2


def test_cache_invalidated_by_encoder_change(tmp_path, toy_model, toy_config):
    from layerprobe.encoder import random_model

    split, audio = make_split(1, 7, "eval")
    cache_layer_features(split, toy_model, 2, tmp_path, audio, SEG_LEN)
    other = random_model(toy_config, seed=999)
    cache = FeatureCache(tmp_path, other, 2, SEG_LEN)
    before = other.layer_calls
    cache.get(split.entries[0].utt_id, audio[split.entries[0].utt_id])
    assert other.layer_calls == before + 2  # checksum mismatch forces recompute


def test_cache_invalidated_by_crop_change(tmp_path, toy_model):
    split, audio = make_split(1, 8, "eval")
    utt = split.entries[0].utt_id
    cache_layer_features(split, toy_model, 2, tmp_path, audio, SEG_LEN)
    longer = FeatureCache(tmp_path, toy_model, 2, SEG_LEN * 2)
    before = toy_model.layer_calls
    longer.get(utt, audio[utt])
    assert toy_model.layer_calls == before + 2

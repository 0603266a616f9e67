"""Training loop: Adam over back-end + layer weights with the encoder frozen,
dev-loss early stopping, multi-seed repetition, and eval feature caching."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregation import LayerWeightVector, aggregate, grad_aggregate
from .audio import AudioSegment, SAMPLE_RATE, crop_or_pad, decode_wav
from .backend import FFNBackend, cross_entropy
from .container import read_container, write_container
from .encoder import EncoderModel, LayerFeatureStack, encode
from .metrics import ScoreEntry, ScoreSet
from .protocol import DatasetSplit

DEFAULT_SEEDS = (17, 42, 1337)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 10
    dropout_p: float = 0.2
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    truncate_layers: int = 1
    cache_features: bool = False
    segment_len: int = 64600

    def validate(self) -> list[str]:
        errors = []
        if self.lr <= 0:
            errors.append("lr must be > 0")
        if self.batch_size < 1:
            errors.append("batch_size must be >= 1")
        if self.patience > self.max_epochs:
            errors.append("patience must not exceed max_epochs")
        if self.truncate_layers < 1:
            errors.append("truncate_layers must be >= 1")
        if not self.seeds:
            errors.append("at least one seed required")
        if not 0 <= self.dropout_p < 1:
            errors.append("dropout_p must be in [0, 1)")
        if self.segment_len <= 0:
            errors.append("segment_len must be > 0")
        return errors


@dataclass
class TrainRun:
    seed: int
    epoch_losses: list[tuple[float, float]]
    best_epoch: int
    final_tensors: dict[str, np.ndarray]
    stopped_early: bool
    failed: str | None = None


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]

    @classmethod
    def init(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    t: int,
    config: TrainConfig,
) -> None:
    """Standard bias-corrected Adam update, in place."""
    if t < 1:
        raise ValueError("step index must be >= 1")
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name!r}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        p -= config.lr * m_hat / (np.sqrt(v_hat) + eps)


def load_split_audio(split: DatasetSplit) -> dict[str, np.ndarray]:
    """Decode every utterance of a split once into memory."""
    return {e.utt_id: decode_wav(e.audio_path, e.utt_id).samples for e in split.entries}


class FeatureCache:
    """Per-utterance layer-feature persistence for deterministic eval crops.

    Valid only because the encoder is frozen and eval_start cropping is
    deterministic. Stale files (encoder checksum or crop mismatch) are
    recomputed; a cache holding >= X layers serves any smaller X (prefix
    consistency of the encoder).
    """

    def __init__(self, cache_dir, model: EncoderModel, layers: int, segment_len: int):
        self.dir = Path(cache_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.model = model
        self.layers = layers
        self.segment_len = segment_len

    def _path(self, utt_id: str) -> Path:
        return self.dir / f"{utt_id}.feat"

    def _crop_descriptor(self) -> str:
        return f"eval_start:{self.segment_len}"

    def get(self, utt_id: str, samples: np.ndarray) -> LayerFeatureStack:
        path = self._path(utt_id)
        if path.exists():
            try:
                container = read_container(path)
                meta = container.metadata
                if (
                    meta.get("encoder_checksum") == self.model.checksum
                    and meta.get("crop") == self._crop_descriptor()
                    and int(meta.get("layers", 0)) >= self.layers
                ):
                    feats = [
                        np.asarray(container.tensors[f"feat.{utt_id}.layer.{l}"])
                        for l in range(1, self.layers + 1)
                    ]
                    return LayerFeatureStack(
                        features=feats, frame_count=feats[0].shape[0], utt_id=utt_id
                    )
            except Exception:
                pass  # stale or corrupt cache entry: fall through and recompute
        seg = crop_or_pad(
            AudioSegment(samples, SAMPLE_RATE, utt_id), self.segment_len, "eval_start"
        )
        stack = encode(seg, self.model, self.layers)
        tensors = {
            f"feat.{utt_id}.layer.{l}": mat for l, mat in enumerate(stack.features, start=1)
        }
        write_container(
            tensors,
            {
                "encoder_checksum": self.model.checksum,
                "crop": self._crop_descriptor(),
                "layers": self.layers,
                "hidden_dim": self.model.config.hidden_dim,
            },
            path,
        )
        return stack


def cache_layer_features(
    split: DatasetSplit,
    model: EncoderModel,
    layers: int,
    cache_dir,
    audio: dict[str, np.ndarray] | None = None,
    segment_len: int = 64600,
) -> FeatureCache:
    """Persist every utterance's layer features once; returns the cache handle."""
    audio = audio if audio is not None else load_split_audio(split)
    cache = FeatureCache(cache_dir, model, layers, segment_len)
    for e in split.entries:
        cache.get(e.utt_id, audio[e.utt_id])
    return cache


def _encode_eval(model, layers, segment_len, utt_id, samples, cache: FeatureCache | None):
    if cache is not None:
        return cache.get(utt_id, samples)
    seg = crop_or_pad(AudioSegment(samples, SAMPLE_RATE, utt_id), segment_len, "eval_start")
    return encode(seg, model, layers)


def eval_loss(
    model: EncoderModel,
    backend,
    weights: LayerWeightVector,
    split: DatasetSplit,
    config: TrainConfig,
    audio: dict[str, np.ndarray],
    cache: FeatureCache | None = None,
) -> float:
    """Mean eval-mode cross entropy over a split (deterministic)."""
    losses = []
    X = config.truncate_layers
    for e in split.entries:
        stack = _encode_eval(model, X, config.segment_len, e.utt_id, audio[e.utt_id], cache)
        agg = aggregate(stack, weights)
        logits, _ = backend.forward(agg.matrix[None], mode="eval")
        label = 0 if e.label == "bonafide" else 1
        loss, _ = cross_entropy(logits[0], label)
        losses.append(loss)
    return float(np.mean(losses))


def score_split(
    model: EncoderModel,
    backend,
    weights: LayerWeightVector,
    split: DatasetSplit,
    layers: int,
    segment_len: int = 64600,
    audio: dict[str, np.ndarray] | None = None,
    cache: FeatureCache | None = None,
) -> ScoreSet:
    """Deterministic detection scores for every utterance of a split."""
    audio = audio if audio is not None else load_split_audio(split)
    entries = []
    for e in split.entries:
        stack = _encode_eval(model, layers, segment_len, e.utt_id, audio[e.utt_id], cache)
        agg = aggregate(stack, weights)
        scores = backend.score(agg)
        entries.append(ScoreEntry(utt_id=e.utt_id, label=e.label, score=scores.score))
    return ScoreSet(entries=entries)


def _snapshot(backend, raw: np.ndarray) -> dict[str, np.ndarray]:
    tensors = {k: v.copy() for k, v in backend.tensors().items()}
    tensors["agg.raw"] = raw.copy()
    return tensors


def train(
    config: TrainConfig,
    model: EncoderModel,
    train_split: DatasetSplit,
    dev_split: DatasetSplit,
    backend_cls=FFNBackend,
    audio: dict[str, np.ndarray] | None = None,
    cache_dir=None,
    log_fn=None,
) -> list[TrainRun]:
    """Run one training experiment per seed; the encoder stays frozen.

    Every run is fully determined by (config, seed): initialization, batch
    order, crops, and dropout masks all derive from one seeded stream.
    """
    errors = config.validate()
    if errors:
        raise ValueError("; ".join(errors))
    if not train_split.entries or not dev_split.entries:
        raise ValueError("train and dev splits must be non-empty")
    L = model.config.num_layers
    X = config.truncate_layers
    if X > L:
        raise ValueError(f"truncate_layers {X} exceeds encoder layers {L}")

    if audio is None:
        audio = {}
        for split in (train_split, dev_split):
            audio.update(load_split_audio(split))

    dev_cache = None
    if config.cache_features and cache_dir is not None:
        dev_cache = FeatureCache(cache_dir, model, X, config.segment_len)
    # dev crops are deterministic and the encoder frozen: encode dev once,
    # shared across epochs and seeds
    dev_stacks = {
        e.utt_id: _encode_eval(model, X, config.segment_len, e.utt_id, audio[e.utt_id], dev_cache)
        for e in dev_split.entries
    }

    checksum_before = model.checksum
    runs = []
    for seed in config.seeds:
        runs.append(
            _train_one_seed(config, model, train_split, dev_split, backend_cls, audio,
                            dev_stacks, seed, log_fn)
        )
    from .container import tensors_checksum

    if tensors_checksum(model.tensors) != checksum_before:
        raise RuntimeError("encoder tensors changed during training")
    return runs


def _train_one_seed(config, model, train_split, dev_split, backend_cls, audio,
                    dev_stacks, seed, log_fn):
    from .protocol import make_batches

    X = config.truncate_layers
    d = model.config.hidden_dim
    rng = np.random.default_rng(seed)
    backend = backend_cls.init(d, rng, dropout_p=config.dropout_p)
    raw = np.ones(X, dtype=np.float32)
    weights = LayerWeightVector(raw)
    params = dict(backend.trainable())
    params["agg.raw"] = raw
    state = AdamState.init(params)

    def dev_loss_now():
        losses = []
        for e in dev_split.entries:
            agg = aggregate(dev_stacks[e.utt_id], weights)
            logits, _ = backend.forward(agg.matrix[None], mode="eval")
            loss, _ = cross_entropy(logits[0], 0 if e.label == "bonafide" else 1)
            losses.append(loss)
        return float(np.mean(losses))

    epoch_losses: list[tuple[float, float]] = []
    best_eval = np.inf
    best_epoch = 0
    best_state = _snapshot(backend, raw)
    since_best = 0
    stopped_early = False
    step = 0

    for epoch in range(1, config.max_epochs + 1):
        epoch_seed = int(rng.integers(0, 2**31))
        batch_losses = []
        try:
            for batch in make_batches(train_split, config.batch_size, epoch_seed):
                stacks, mats, labels = [], [], []
                for e in batch:
                    seg = crop_or_pad(
                        AudioSegment(audio[e.utt_id], SAMPLE_RATE, e.utt_id),
                        config.segment_len,
                        "train_random",
                        rng=rng,
                    )
                    stack = encode(seg, model, X)
                    stacks.append(stack)
                    mats.append(aggregate(stack, weights).matrix)
                    labels.append(0 if e.label == "bonafide" else 1)
                x = np.stack(mats)
                logits, cache = backend.forward(x, mode="train", rng=rng)
                B = len(batch)
                dlogits = np.zeros_like(logits)
                losses = []
                for i, label in enumerate(labels):
                    loss, g = cross_entropy(logits[i], label)
                    losses.append(loss)
                    dlogits[i] = g / B
                batch_loss = float(np.mean(losses))
                if not np.isfinite(batch_loss):
                    raise FloatingPointError(f"non-finite loss at epoch {epoch}")
                batch_losses.append(batch_loss)
                grads, dx = backend.backward(cache, dlogits)
                graw = np.zeros(X, dtype=np.float64)
                for i, stack in enumerate(stacks):
                    graw += grad_aggregate(stack, weights, dx[i])
                grads["agg.raw"] = graw
                step += 1
                adam_step(params, grads, state, step, config)
        except FloatingPointError as e:
            return TrainRun(
                seed=seed, epoch_losses=epoch_losses, best_epoch=best_epoch,
                final_tensors=best_state, stopped_early=False,
                failed=f"diverged: {e}",
            )

        train_loss = float(np.mean(batch_losses))
        dev_loss = dev_loss_now()
        epoch_losses.append((train_loss, dev_loss))
        if log_fn is not None:
            log_fn(f"epoch {epoch} train_loss {train_loss:.6f} eval_loss {dev_loss:.6f}")
        if dev_loss < best_eval:
            best_eval = dev_loss
            best_epoch = epoch
            best_state = _snapshot(backend, raw)
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                stopped_early = True
                break

    return TrainRun(
        seed=seed, epoch_losses=epoch_losses, best_epoch=best_epoch,
        final_tensors=best_state, stopped_early=stopped_early,
    )

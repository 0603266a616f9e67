"""Frozen feature extractor: conv front-end plus truncatable transformer stack.

Wiring (fixed for conformance; exporters must target the same):
    conv stack (strided 1-D convs, GELU after each)
    -> layer norm over channels -> linear projection to hidden_dim
    -> x += GELU(grouped conv positional encoding) -> layer norm
    -> pre-norm transformer blocks: x += attn(LN(x)); x += ffn(LN(x))
"hidden state l" is the output of transformer block l; the conv output is
not part of the weighted aggregation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio import AudioSegment
from .container import ModelContainer, tensors_checksum, write_container

# Conv geometry consistent with ~25ms receptive field / 20ms hop at 16 kHz.
DEFAULT_CONV_STACK = (
    (512, 10, 5),
    (512, 3, 2),
    (512, 3, 2),
    (512, 3, 2),
    (512, 3, 2),
    (512, 2, 2),
    (512, 2, 2),
)

WIRING = "pre_norm_gelu_posconv_v1"


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int
    hidden_dim: int
    num_heads: int
    ffn_dim: int
    conv_stack: tuple[tuple[int, int, int], ...] = DEFAULT_CONV_STACK
    pos_conv_kernel: int = 9
    pos_conv_groups: int = 1
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.hidden_dim < 2:
            raise ValueError("hidden_dim must be >= 2")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError("hidden_dim must be divisible by num_heads")
        if not self.conv_stack:
            raise ValueError("conv_stack must be non-empty")
        if any(s < 1 for _, _, s in self.conv_stack):
            raise ValueError("conv strides must be >= 1")
        if self.hidden_dim % self.pos_conv_groups != 0:
            raise ValueError("hidden_dim must be divisible by pos_conv_groups")


@dataclass
class LayerFeatureStack:
    features: list[np.ndarray]  # X matrices, each (T, d)
    frame_count: int
    utt_id: str = ""


@dataclass
class EncoderModel:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]
    checksum: str
    # instrumented counter of transformer-block forward invocations
    layer_calls: int = field(default=0, compare=False)

    @classmethod
    def from_container(cls, container: ModelContainer) -> "EncoderModel":
        meta = container.metadata
        wiring = meta.get("wiring", WIRING)
        if wiring != WIRING:
            raise ValueError(f"unsupported encoder wiring {wiring!r}, expected {WIRING!r}")
        config = EncoderConfig(
            num_layers=int(meta["num_layers"]),
            hidden_dim=int(meta["hidden_dim"]),
            num_heads=int(meta["num_heads"]),
            ffn_dim=int(meta["ffn_dim"]),
            conv_stack=parse_conv_stack(meta["conv_stack"]),
            pos_conv_kernel=int(meta.get("pos_conv_kernel", 9)),
            pos_conv_groups=int(meta.get("pos_conv_groups", 1)),
            layer_norm_eps=float(meta.get("layer_norm_eps", 1e-5)),
        )
        tensors = {}
        for name, shape in param_inventory(config).items():
            if name not in container.tensors:
                raise ValueError(f"missing encoder tensor {name!r}")
            arr = container.tensors[name]
            if arr.shape != shape:
                raise ValueError(
                    f"shape mismatch for {name!r}: {arr.shape} vs expected {shape}"
                )
            tensors[name] = arr
        return cls(config=config, tensors=tensors, checksum=tensors_checksum(tensors))


def parse_conv_stack(text: str) -> tuple[tuple[int, int, int], ...]:
    """Parse "c:k:s,c:k:s,..." into a conv stack tuple."""
    out = []
    for part in text.split(","):
        c, k, s = (int(v) for v in part.split(":"))
        out.append((c, k, s))
    return tuple(out)


def format_conv_stack(stack) -> str:
    return ",".join(f"{c}:{k}:{s}" for c, k, s in stack)


def param_inventory(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Every tensor name and shape the declared architecture requires."""
    d, f = config.hidden_dim, config.ffn_dim
    inv: dict[str, tuple[int, ...]] = {}
    c_in = 1
    for i, (c_out, k, _) in enumerate(config.conv_stack):
        inv[f"frontend.conv.{i}.weight"] = (c_out, c_in, k)
        inv[f"frontend.conv.{i}.bias"] = (c_out,)
        c_in = c_out
    inv["frontend.norm.weight"] = (c_in,)
    inv["frontend.norm.bias"] = (c_in,)
    inv["frontend.proj.weight"] = (d, c_in)
    inv["frontend.proj.bias"] = (d,)
    inv["pos_conv.weight"] = (d, d // config.pos_conv_groups, config.pos_conv_kernel)
    inv["pos_conv.bias"] = (d,)
    inv["pre_norm.weight"] = (d,)
    inv["pre_norm.bias"] = (d,)
    for l in range(1, config.num_layers + 1):
        inv[f"layer.{l}.attn_norm.weight"] = (d,)
        inv[f"layer.{l}.attn_norm.bias"] = (d,)
        for part in ("q", "k", "v", "out"):
            inv[f"layer.{l}.attn.{part}.weight"] = (d, d)
            inv[f"layer.{l}.attn.{part}.bias"] = (d,)
        inv[f"layer.{l}.ffn_norm.weight"] = (d,)
        inv[f"layer.{l}.ffn_norm.bias"] = (d,)
        inv[f"layer.{l}.ffn.w1.weight"] = (f, d)
        inv[f"layer.{l}.ffn.w1.bias"] = (f,)
        inv[f"layer.{l}.ffn.w2.weight"] = (d, f)
        inv[f"layer.{l}.ffn.w2.bias"] = (d,)
    return inv


def random_model(config: EncoderConfig, seed: int) -> EncoderModel:
    """Seeded random frozen encoder for toy-scale experiments and tests.

    Weights uniform in +/-sqrt(1/fan_in), biases zero, norm scales one.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_inventory(config).items():
        if name.endswith("norm.weight"):
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith(".bias") or name.endswith("norm.bias"):
            arr = np.zeros(shape, dtype=np.float32)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            bound = math.sqrt(1.0 / fan_in)
            arr = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        tensors[name] = arr
    return EncoderModel(config=config, tensors=tensors, checksum=tensors_checksum(tensors))


def encoder_metadata(config: EncoderConfig, **extra) -> dict:
    meta = {
        "wiring": WIRING,
        "num_layers": config.num_layers,
        "hidden_dim": config.hidden_dim,
        "num_heads": config.num_heads,
        "ffn_dim": config.ffn_dim,
        "conv_stack": format_conv_stack(config.conv_stack),
        "pos_conv_kernel": config.pos_conv_kernel,
        "pos_conv_groups": config.pos_conv_groups,
        "layer_norm_eps": config.layer_norm_eps,
    }
    meta.update(extra)
    return meta


def save_model(model: EncoderModel, path, **extra_metadata) -> None:
    write_container(model.tensors, encoder_metadata(model.config, **extra_metadata), path)


def conv_output_length(input_len: int, conv_stack) -> int:
    """Frame count after the strided conv stack (floor recurrence per layer)."""
    n = input_len
    for _, k, s in conv_stack:
        if n < k:
            raise ValueError(f"input too short: {n} samples against kernel {k}")
        n = (n - k) // s + 1
    return n


def receptive_field(conv_stack) -> int:
    """Minimum input length that yields at least one frame."""
    n = 1
    for _, k, s in reversed(conv_stack):
        n = (n - 1) * s + k
    return n


def gelu(x: np.ndarray) -> np.ndarray:
    # tanh-form GELU; the exporter reference implements the identical formula
    c = math.sqrt(2.0 / math.pi)
    return 0.5 * x * (1.0 + np.tanh(c * (x + 0.044715 * x * x * x)))


def layer_norm(x: np.ndarray, weight, bias, eps: float) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * weight + bias


def conv_features(segment: AudioSegment, model: EncoderModel) -> np.ndarray:
    """Conv stack + channel layer norm + projection: samples -> (T, d)."""
    config = model.config
    samples = np.asarray(segment.samples, dtype=np.float32)
    if samples.size < receptive_field(config.conv_stack):
        raise ValueError(
            f"input too short: {samples.size} samples, "
            f"receptive field is {receptive_field(config.conv_stack)}"
        )
    x = samples[None, :]  # (C=1, len)
    for i, (_, k, s) in enumerate(config.conv_stack):
        w = model.tensors[f"frontend.conv.{i}.weight"]  # (C_out, C_in, k)
        b = model.tensors[f"frontend.conv.{i}.bias"]
        windows = sliding_window_view(x, k, axis=1)[:, ::s, :]  # (C_in, T, k)
        x = np.tensordot(w, windows, axes=([1, 2], [0, 2])) + b[:, None]
        x = gelu(x)
    feats = x.T  # (T, C)
    feats = layer_norm(
        feats,
        model.tensors["frontend.norm.weight"],
        model.tensors["frontend.norm.bias"],
        config.layer_norm_eps,
    )
    proj_w = model.tensors["frontend.proj.weight"]
    proj_b = model.tensors["frontend.proj.bias"]
    return feats @ proj_w.T + proj_b


def positional_conv(x: np.ndarray, model: EncoderModel) -> np.ndarray:
    """Grouped same-length conv over time; wav2vec2-style trim for even kernels."""
    config = model.config
    w = model.tensors["pos_conv.weight"]  # (d, d/g, k)
    b = model.tensors["pos_conv.bias"]
    k = config.pos_conv_kernel
    g = config.pos_conv_groups
    d = config.hidden_dim
    ch = x.T  # (d, T)
    pad = k // 2
    padded = np.pad(ch, ((0, 0), (pad, pad)))
    group_size = d // g
    out = np.empty_like(ch)
    for gi in range(g):
        sl = slice(gi * group_size, (gi + 1) * group_size)
        windows = sliding_window_view(padded[sl], k, axis=1)  # (gs, T', k)
        out[sl] = np.tensordot(w[sl], windows, axes=([1, 2], [0, 2]))
    out += b[:, None]
    if k % 2 == 0:
        out = out[:, :-1]
    return gelu(out[:, : ch.shape[1]].T)


def transformer_layer(x: np.ndarray, model: EncoderModel, layer: int) -> np.ndarray:
    """Pre-norm multi-head self-attention + GELU FFN block; (T, d) -> (T, d)."""
    config = model.config
    t = model.tensors
    p = f"layer.{layer}"
    T, d = x.shape
    H = config.num_heads
    dh = d // H

    h = layer_norm(x, t[f"{p}.attn_norm.weight"], t[f"{p}.attn_norm.bias"], config.layer_norm_eps)
    q = h @ t[f"{p}.attn.q.weight"].T + t[f"{p}.attn.q.bias"]
    k = h @ t[f"{p}.attn.k.weight"].T + t[f"{p}.attn.k.bias"]
    v = h @ t[f"{p}.attn.v.weight"].T + t[f"{p}.attn.v.bias"]
    q = q.reshape(T, H, dh).transpose(1, 0, 2)  # (H, T, dh)
    k = k.reshape(T, H, dh).transpose(1, 0, 2)
    v = v.reshape(T, H, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.asarray(math.sqrt(dh), dtype=x.dtype)
    scores -= scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    ctx = (attn @ v).transpose(1, 0, 2).reshape(T, d)
    x = x + ctx @ t[f"{p}.attn.out.weight"].T + t[f"{p}.attn.out.bias"]

    h = layer_norm(x, t[f"{p}.ffn_norm.weight"], t[f"{p}.ffn_norm.bias"], config.layer_norm_eps)
    h = gelu(h @ t[f"{p}.ffn.w1.weight"].T + t[f"{p}.ffn.w1.bias"])
    x = x + h @ t[f"{p}.ffn.w2.weight"].T + t[f"{p}.ffn.w2.bias"]

    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite output from transformer layer {layer}")
    return x


def encode(segment: AudioSegment, model: EncoderModel, max_layers: int) -> LayerFeatureStack:
    """Run the frozen encoder, returning hidden states of layers 1..max_layers.

    Layers beyond max_layers are never computed (prefix truncation).
    """
    L = model.config.num_layers
    if not 1 <= max_layers <= L:
        raise ValueError(f"max_layers {max_layers} out of range 1..{L}")
    x = conv_features(segment, model)
    x = x + positional_conv(x, model)
    x = layer_norm(
        x,
        model.tensors["pre_norm.weight"],
        model.tensors["pre_norm.bias"],
        model.config.layer_norm_eps,
    )
    features = []
    for l in range(1, max_layers + 1):
        x = transformer_layer(x, model, l)
        model.layer_calls += 1
        features.append(x.copy())
    return LayerFeatureStack(features=features, frame_count=x.shape[0], utt_id=segment.utt_id)

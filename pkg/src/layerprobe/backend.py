"""Trainable FFN back-end: batch norm -> two SeLU FF layers with dropout ->
attentive statistical pooling -> 2-class head, with exact analytic gradients.

Class index 0 is bonafide, 1 is spoof; the scalar detection score is
logit(bonafide) - logit(spoof), higher meaning more bonafide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .aggregation import AggregatedFeatures

# standard published SeLU constants
SELU_ALPHA = 1.6732632423543772
SELU_LAMBDA = 1.0507009873554805

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
POOL_EPS = 1e-9

BONAFIDE, SPOOF = 0, 1


@dataclass
class BackendParams:
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_mean: np.ndarray  # running, eval mode only
    bn_var: np.ndarray
    ff1_w: np.ndarray  # (hidden, d)
    ff1_b: np.ndarray
    ff2_w: np.ndarray  # (hidden, hidden)
    ff2_b: np.ndarray
    attn_w: np.ndarray  # (hidden,)
    attn_b: np.ndarray  # (1,)
    head_w: np.ndarray  # (2, 2*hidden)
    head_b: np.ndarray  # (2,)
    dropout_p: float = 0.2


@dataclass
class ClassScores:
    logits: np.ndarray  # (2,)
    score: float = field(init=False)

    def __post_init__(self):
        self.score = float(self.logits[BONAFIDE] - self.logits[SPOOF])


def init_backend_params(
    d: int, rng: np.random.Generator, hidden: int = 128, dropout_p: float = 0.2,
    dtype=np.float32,
) -> BackendParams:
    """FF weights uniform in +/-sqrt(1/fan_in), biases zero, BN identity.

    The classification head starts at zero so the initial detection score is
    exactly 0 for every utterance; whatever separation emerges is learned,
    which matters at desk scale where the step budget is small.
    """

    def uniform(shape, fan_in):
        bound = math.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape).astype(dtype)

    return BackendParams(
        bn_gamma=np.ones(d, dtype=dtype),
        bn_beta=np.zeros(d, dtype=dtype),
        bn_mean=np.zeros(d, dtype=dtype),
        bn_var=np.ones(d, dtype=dtype),
        ff1_w=uniform((hidden, d), d),
        ff1_b=np.zeros(hidden, dtype=dtype),
        ff2_w=uniform((hidden, hidden), hidden),
        ff2_b=np.zeros(hidden, dtype=dtype),
        attn_w=uniform((hidden,), hidden),
        attn_b=np.zeros(1, dtype=dtype),
        head_w=np.zeros((2, 2 * hidden), dtype=dtype),
        head_b=np.zeros(2, dtype=dtype),
        dropout_p=dropout_p,
    )


def selu(x: np.ndarray) -> np.ndarray:
    return SELU_LAMBDA * np.where(x > 0, x, SELU_ALPHA * np.expm1(x))


def selu_grad(x: np.ndarray, activated: np.ndarray) -> np.ndarray:
    # for x <= 0: d/dx = lambda*alpha*e^x = selu(x) + lambda*alpha
    return np.where(x > 0, SELU_LAMBDA, activated + SELU_LAMBDA * SELU_ALPHA)


def attentive_stat_pool(seq: np.ndarray, attn_w: np.ndarray, attn_b) -> np.ndarray:
    """Attention-weighted mean and std over time: (T, h) -> (2h,)."""
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ValueError("pooling input must be a non-empty (T, h) matrix")
    s = seq @ attn_w + np.asarray(attn_b).reshape(())
    s = s - s.max()
    alpha = np.exp(s)
    alpha /= alpha.sum()
    mu = alpha @ seq
    m2 = alpha @ (seq * seq)
    sigma = np.sqrt(np.maximum(m2 - mu * mu, POOL_EPS))
    return np.concatenate([mu, sigma])


def backend_forward(
    x: np.ndarray,
    params: BackendParams,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Whole-batch forward pass: (B, T, d) -> logits (B, 2) and a cache.

    Train mode uses batch statistics for batch norm (updating running stats)
    and inverted dropout; eval mode is a pure deterministic function.
    """
    if x.ndim != 3 or x.shape[1] < 1:
        raise ValueError("expected a non-empty (B, T, d) batch")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown mode {mode!r}")
    B, T, d = x.shape
    p = params.dropout_p
    train = mode == "train"

    if train:
        mean = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
        n = B * T
        if n > 1:
            unbiased = var * (n / (n - 1))
        else:
            unbiased = var
        params.bn_mean *= 1.0 - BN_MOMENTUM
        params.bn_mean += BN_MOMENTUM * mean.astype(params.bn_mean.dtype)
        params.bn_var *= 1.0 - BN_MOMENTUM
        params.bn_var += BN_MOMENTUM * unbiased.astype(params.bn_var.dtype)
    else:
        mean = params.bn_mean
        var = params.bn_var
    ivstd = 1.0 / np.sqrt(var + BN_EPS)
    xn = (x - mean) * ivstd
    y = params.bn_gamma * xn + params.bn_beta

    def dropout_mask(shape):
        if not train or p == 0.0:
            return None
        if rng is None:
            raise ValueError("train-mode dropout requires an rng")
        return (rng.random(shape) >= p).astype(x.dtype) / (1.0 - p)

    z1 = y @ params.ff1_w.T + params.ff1_b
    a1 = selu(z1)
    mask1 = dropout_mask(a1.shape)
    d1 = a1 if mask1 is None else a1 * mask1

    z2 = d1 @ params.ff2_w.T + params.ff2_b
    a2 = selu(z2)
    mask2 = dropout_mask(a2.shape)
    h = a2 if mask2 is None else a2 * mask2

    s = h @ params.attn_w + params.attn_b[0]  # (B, T)
    s = s - s.max(axis=1, keepdims=True)
    alpha = np.exp(s)
    alpha /= alpha.sum(axis=1, keepdims=True)
    mu = np.einsum("bt,bth->bh", alpha, h)
    m2 = np.einsum("bt,bth->bh", alpha, h * h)
    var_p = m2 - mu * mu
    clipped = var_p > POOL_EPS
    sigma = np.sqrt(np.where(clipped, var_p, POOL_EPS))
    pooled = np.concatenate([mu, sigma], axis=1)  # (B, 2h)

    logits = pooled @ params.head_w.T + params.head_b
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits in back-end forward")

    cache = {
        "params": params, "train": train,
        "xn": xn, "ivstd": ivstd, "y": y,
        "z1": z1, "a1": a1, "mask1": mask1, "d1": d1,
        "z2": z2, "a2": a2, "mask2": mask2, "h": h,
        "alpha": alpha, "mu": mu, "sigma": sigma, "clipped": clipped,
        "pooled": pooled,
    }
    return logits, cache


def backend_backward(cache: dict, dlogits: np.ndarray) -> tuple[dict, np.ndarray]:
    """Analytic gradients of all parameters and of the aggregated input.

    Requires a train-mode cache (dropout masks are reused; batch-norm
    backward goes through the batch statistics).
    """
    if not cache["train"]:
        raise ValueError("backward requires a train-mode forward cache")
    params: BackendParams = cache["params"]
    h, alpha, mu, sigma = cache["h"], cache["alpha"], cache["mu"], cache["sigma"]
    B, T, hidden = h.shape

    d_head_w = dlogits.T @ cache["pooled"]
    d_head_b = dlogits.sum(axis=0)
    dpooled = dlogits @ params.head_w  # (B, 2h)

    gmu = dpooled[:, :hidden]
    gsigma = dpooled[:, hidden:]
    dvar = np.where(cache["clipped"], gsigma * 0.5 / sigma, 0.0)
    dmu = gmu - 2.0 * mu * dvar
    dm2 = dvar
    dh = alpha[:, :, None] * (dmu[:, None, :] + 2.0 * h * dm2[:, None, :])
    dalpha = np.einsum("bth,bh->bt", h, dmu) + np.einsum("bth,bh->bt", h * h, dm2)
    ds = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
    d_attn_w = np.einsum("bt,bth->h", ds, h)
    d_attn_b = np.array([ds.sum()], dtype=ds.dtype)
    dh = dh + ds[:, :, None] * params.attn_w

    da2 = dh if cache["mask2"] is None else dh * cache["mask2"]
    dz2 = da2 * selu_grad(cache["z2"], cache["a2"])
    d_ff2_w = np.einsum("btf,btg->fg", dz2, cache["d1"])
    d_ff2_b = dz2.sum(axis=(0, 1))
    dd1 = dz2 @ params.ff2_w

    da1 = dd1 if cache["mask1"] is None else dd1 * cache["mask1"]
    dz1 = da1 * selu_grad(cache["z1"], cache["a1"])
    d_ff1_w = np.einsum("btf,btg->fg", dz1, cache["y"])
    d_ff1_b = dz1.sum(axis=(0, 1))
    dy = dz1 @ params.ff1_w

    xn, ivstd = cache["xn"], cache["ivstd"]
    d_bn_gamma = np.sum(dy * xn, axis=(0, 1))
    d_bn_beta = dy.sum(axis=(0, 1))
    dxn = dy * params.bn_gamma
    # batch-statistics backward (biased variance)
    dx = ivstd * (
        dxn - dxn.mean(axis=(0, 1)) - xn * np.mean(dxn * xn, axis=(0, 1))
    )

    grads = {
        "bn.gamma": d_bn_gamma, "bn.beta": d_bn_beta,
        "ff1.weight": d_ff1_w, "ff1.bias": d_ff1_b,
        "ff2.weight": d_ff2_w, "ff2.bias": d_ff2_b,
        "attn.weight": d_attn_w, "attn.bias": d_attn_b,
        "head.weight": d_head_w, "head.bias": d_head_b,
    }
    return grads, dx


def cross_entropy(logits: np.ndarray, label: int) -> tuple[float, np.ndarray]:
    """Stabilized 2-class CE loss and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    m = logits.max()
    lse = m + np.log(np.sum(np.exp(logits - m)))
    loss = float(lse - logits[label])
    grad = np.exp(logits - lse)
    grad[label] -= 1.0
    return loss, grad


def trainable_params(params: BackendParams) -> dict[str, np.ndarray]:
    """Name -> array views of everything the optimizer updates (no BN stats)."""
    return {
        "bn.gamma": params.bn_gamma, "bn.beta": params.bn_beta,
        "ff1.weight": params.ff1_w, "ff1.bias": params.ff1_b,
        "ff2.weight": params.ff2_w, "ff2.bias": params.ff2_b,
        "attn.weight": params.attn_w, "attn.bias": params.attn_b,
        "head.weight": params.head_w, "head.bias": params.head_b,
    }


def params_to_tensors(params: BackendParams) -> dict[str, np.ndarray]:
    t = {f"backend.{k}": v for k, v in trainable_params(params).items()}
    t["backend.bn.running_mean"] = params.bn_mean
    t["backend.bn.running_var"] = params.bn_var
    return t


def params_from_tensors(tensors: dict[str, np.ndarray], dropout_p: float = 0.2) -> BackendParams:
    def get(name):
        key = f"backend.{name}"
        if key not in tensors:
            raise ValueError(f"missing back-end tensor {key!r}")
        return np.array(tensors[key])

    return BackendParams(
        bn_gamma=get("bn.gamma"), bn_beta=get("bn.beta"),
        bn_mean=get("bn.running_mean"), bn_var=get("bn.running_var"),
        ff1_w=get("ff1.weight"), ff1_b=get("ff1.bias"),
        ff2_w=get("ff2.weight"), ff2_b=get("ff2.bias"),
        attn_w=get("attn.weight"), attn_b=get("attn.bias"),
        head_w=get("head.weight"), head_b=get("head.bias"),
        dropout_p=dropout_p,
    )


def score_utterance(agg: AggregatedFeatures, params: BackendParams) -> ClassScores:
    """Deterministic eval-mode scoring of a single utterance."""
    logits, _ = backend_forward(agg.matrix[None], params, mode="eval")
    return ClassScores(logits=logits[0])


class FFNBackend:
    """The pluggable back-end contract: AggregatedFeatures -> ClassScores,
    plus a batched train-mode forward/backward.

    Alternative classifiers (e.g. graph-attention models) plug in by
    implementing this same surface; only the FFN is provided here.
    """

    name = "ffn"

    def __init__(self, params: BackendParams):
        self.params = params

    @classmethod
    def init(cls, d: int, rng: np.random.Generator, dropout_p: float = 0.2) -> "FFNBackend":
        return cls(init_backend_params(d, rng, dropout_p=dropout_p))

    def forward(self, x, mode="eval", rng=None):
        return backend_forward(x, self.params, mode=mode, rng=rng)

    def backward(self, cache, dlogits):
        return backend_backward(cache, dlogits)

    def score(self, agg: AggregatedFeatures) -> ClassScores:
        return score_utterance(agg, self.params)

    def trainable(self) -> dict[str, np.ndarray]:
        return trainable_params(self.params)

    def tensors(self) -> dict[str, np.ndarray]:
        return params_to_tensors(self.params)

    @classmethod
    def from_tensors(cls, tensors, dropout_p: float = 0.2) -> "FFNBackend":
        return cls(params_from_tensors(tensors, dropout_p=dropout_p))


BACKENDS = {"ffn": FFNBackend}

"""Trainable layer weights: softmax normalization and weighted feature sums."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import LayerFeatureStack


@dataclass
class LayerWeightVector:
    """Raw trainable per-layer weights; the normalized form is derived."""

    raw: np.ndarray

    @property
    def normalized(self) -> np.ndarray:
        return softmax_normalize(self.raw)


@dataclass
class AggregatedFeatures:
    matrix: np.ndarray  # (T, d)
    source_layers: int


def softmax_normalize(raw: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax in f64; components in (0,1) summing to 1."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 1 or raw.size == 0:
        raise ValueError("raw weights must be a non-empty 1-D vector")
    if not np.all(np.isfinite(raw)):
        raise ValueError("non-finite raw weight")
    e = np.exp(raw - raw.max())
    return e / e.sum()


def aggregate(stack: LayerFeatureStack, weights: LayerWeightVector) -> AggregatedFeatures:
    """Convex combination of the layer features under the normalized weights."""
    normalized = weights.normalized
    if len(normalized) != len(stack.features):
        raise ValueError(
            f"weight/layer count mismatch: {len(normalized)} vs {len(stack.features)}"
        )
    shape = stack.features[0].shape
    for mat in stack.features[1:]:
        if mat.shape != shape:
            raise ValueError("layer feature shapes differ")
    dtype = stack.features[0].dtype
    out = np.zeros(shape, dtype=dtype)
    for w, mat in zip(normalized, stack.features):
        if w == 0.0:
            continue
        out += dtype.type(w) * mat
    return AggregatedFeatures(matrix=out, source_layers=len(stack.features))


def grad_aggregate(
    stack: LayerFeatureStack, weights: LayerWeightVector, upstream: np.ndarray
) -> np.ndarray:
    """Gradient of <upstream, aggregate(stack, weights)> w.r.t. the raw weights.

    The encoder is frozen, so no gradient is propagated into the features.
    """
    if upstream.shape != stack.features[0].shape:
        raise ValueError("upstream shape does not match layer features")
    p = weights.normalized
    if len(p) != len(stack.features):
        raise ValueError("weight/layer count mismatch")
    grad_normalized = np.array(
        [np.sum(np.asarray(upstream, dtype=np.float64) * mat) for mat in stack.features]
    )
    # softmax Jacobian: diag(p) - p p^T (symmetric)
    return p * (grad_normalized - p @ grad_normalized)

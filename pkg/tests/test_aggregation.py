import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layerprobe.aggregation import (
    LayerWeightVector,
    aggregate,
    grad_aggregate,
    softmax_normalize,
)
from layerprobe.encoder import LayerFeatureStack


def make_stack(features):
    feats = [np.asarray(f) for f in features]
    return LayerFeatureStack(features=feats, frame_count=feats[0].shape[0])


def test_uniform_initialization_gives_uniform_weights():
    out = softmax_normalize(np.ones(12))
    assert np.allclose(out, 1.0 / 12.0)
    assert abs(out.sum() - 1.0) < 1e-12


def test_singleton():
    assert np.array_equal(softmax_normalize(np.array([0.0])), np.array([1.0]))


def test_ln2_example():
    # oracle: direct evaluation, exp(ln 2)/(exp(ln 2)+1) = 2/3
    out = softmax_normalize(np.array([np.log(2.0), 0.0]))
    assert np.allclose(out, [2.0 / 3.0, 1.0 / 3.0], atol=1e-7)


def test_empty_and_nonfinite_rejected():
    with pytest.raises(ValueError):
        softmax_normalize(np.array([]))
    with pytest.raises(ValueError):
        softmax_normalize(np.array([1.0, np.inf]))


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(min_value=-1e3, max_value=1e3), min_size=1, max_size=24),
    st.floats(min_value=-1e3, max_value=1e3),
)
def test_softmax_properties(raw, shift):
    raw = np.array(raw)
    out = softmax_normalize(raw)
    assert abs(out.sum() - 1.0) < 1e-6
    # components in (0,1) mathematically; f64 underflow can reach exactly 0
    assert np.all(out >= 0) and np.all(out <= 1.0)
    shifted = softmax_normalize(raw + shift)
    assert np.max(np.abs(shifted - out)) < 1e-6


def test_one_hot_returns_selected_layer_bitwise():
    rng = np.random.default_rng(0)
    stack = make_stack([rng.standard_normal((5, 3)).astype(np.float32) for _ in range(4)])

    class Exact(LayerWeightVector):
        # test hook: inject exact one-hot normalized weights
        @property
        def normalized(self):
            e = np.zeros(4)
            e[2] = 1.0
            return e

    out = aggregate(stack, Exact(raw=np.zeros(4)))
    assert out.matrix.tobytes() == stack.features[2].tobytes()


def test_identical_layers_convexity():
    rng = np.random.default_rng(1)
    mat = rng.standard_normal((4, 6)).astype(np.float32)
    stack = make_stack([mat, mat.copy()])
    out = aggregate(stack, LayerWeightVector(np.array([0.3, -1.2])))
    assert np.allclose(out.matrix, mat, atol=1e-6)


def test_hand_arithmetic_example():
    stack = make_stack([np.array([[1.0, 2.0]]), np.array([[3.0, 4.0]])])

    class Fixed(LayerWeightVector):
        @property
        def normalized(self):
            return np.array([0.25, 0.75])

    out = aggregate(stack, Fixed(raw=np.zeros(2)))
    assert np.allclose(out.matrix, [[2.5, 3.5]])


def test_convex_bounds():
    rng = np.random.default_rng(2)
    stack = make_stack([rng.standard_normal((3, 4)) for _ in range(5)])
    out = aggregate(stack, LayerWeightVector(rng.standard_normal(5)))
    lo = np.min([f for f in stack.features], axis=0)
    hi = np.max([f for f in stack.features], axis=0)
    assert np.all(out.matrix >= lo - 1e-9)
    assert np.all(out.matrix <= hi + 1e-9)


def test_length_mismatch():
    stack = make_stack([np.ones((2, 2))])
    with pytest.raises(ValueError, match="mismatch"):
        aggregate(stack, LayerWeightVector(np.ones(2)))


def test_grad_singleton_is_zero():
    stack = make_stack([np.ones((2, 2))])
    g = grad_aggregate(stack, LayerWeightVector(np.array([3.0])), np.ones((2, 2)))
    assert np.array_equal(g, [0.0])


def test_grad_symmetric_case_is_zero():
    mat = np.full((2, 3), 0.7)
    stack = make_stack([mat, mat.copy(), mat.copy()])
    g = grad_aggregate(stack, LayerWeightVector(np.zeros(3)), np.ones((2, 3)))
    assert np.allclose(g, 0.0, atol=1e-15)


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(4)
    for _ in range(10):
        stack = make_stack([rng.standard_normal((3, 2)) for _ in range(3)])
        raw = rng.standard_normal(3)
        upstream = rng.standard_normal((3, 2))
        analytic = grad_aggregate(stack, LayerWeightVector(raw), upstream)

        def scalar(r):
            out = aggregate(stack, LayerWeightVector(r))
            return float(np.sum(upstream * out.matrix))

        h = 1e-6
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            numeric = (scalar(raw + e) - scalar(raw - e)) / (2 * h)
            assert abs(analytic[i] - numeric) / max(1e-6, abs(numeric)) < 1e-4

import numpy as np
import pytest
from scipy.io import wavfile

from layerprobe.audio import AudioSegment, crop_or_pad, decode_wav, write_wav


def test_int16_scaling(tmp_path):
    path = tmp_path / "half.wav"
    wavfile.write(path, 16000, np.full(16000, 16384, dtype=np.int16))
    seg = decode_wav(path)
    assert seg.samples.shape == (16000,)
    assert np.allclose(seg.samples, 0.5)


def test_stereo_averaged(tmp_path):
    path = tmp_path / "stereo.wav"
    data = np.stack(
        [np.full(100, 0.2, dtype=np.float32), np.full(100, 0.6, dtype=np.float32)], axis=1
    )
    wavfile.write(path, 16000, data)
    seg = decode_wav(path)
    assert np.allclose(seg.samples, 0.4)


def test_sample_rate_mismatch(tmp_path):
    path = tmp_path / "44k.wav"
    wavfile.write(path, 44100, np.zeros(100, dtype=np.int16))
    with pytest.raises(ValueError, match="sample rate mismatch"):
        decode_wav(path)


def test_write_read_round_trip(tmp_path):
    sig = np.sin(np.linspace(0, 20, 4000)).astype(np.float32) * 0.7
    path = tmp_path / "rt.wav"
    write_wav(path, sig)
    seg = decode_wav(path)
    assert np.max(np.abs(seg.samples - sig)) < 1e-4  # 16-bit quantization


def _seg(n, start=0.0):
    return AudioSegment(np.arange(start, start + n, dtype=np.float32), 16000, "u")


def test_crop_exact_length_identity():
    seg = _seg(64600)
    out = crop_or_pad(seg, 64600, "eval_start")
    assert np.array_equal(out.samples, seg.samples)


def test_tiling_half_length():
    seg = _seg(32300)
    out = crop_or_pad(seg, 64600, "eval_start")
    assert out.samples.size == 64600
    assert np.array_equal(out.samples, np.tile(seg.samples, 2))


def test_crop_long_input_is_prefix():
    seg = _seg(129200)
    out = crop_or_pad(seg, 64600, "eval_start")
    # oracle: direct slice
    assert np.array_equal(out.samples, seg.samples[:64600])


def test_full_mode_unchanged():
    seg = _seg(123)
    out = crop_or_pad(seg, 64600, "full")
    assert out.samples is seg.samples


@pytest.mark.parametrize("n", [1, 7, 99, 64600, 70000])
def test_output_length_exact(n):
    out = crop_or_pad(_seg(n), 64600, "eval_start")
    assert out.samples.size == 64600


def test_eval_start_deterministic():
    seg = _seg(70000)
    a = crop_or_pad(seg, 64600, "eval_start")
    b = crop_or_pad(seg, 64600, "eval_start")
    assert np.array_equal(a.samples, b.samples)


def test_train_random_is_valid_window():
    seg = _seg(1000)
    tiled = np.tile(seg.samples, 3)[:2500]
    for trial in range(20):
        out = crop_or_pad(seg, 1500, "train_random", rng=np.random.default_rng(trial))
        found = any(
            np.array_equal(out.samples, tiled[s : s + 1500]) for s in range(tiled.size - 1500 + 1)
        )
        assert found


def test_bad_target_len():
    with pytest.raises(ValueError):
        crop_or_pad(_seg(10), 0, "eval_start")

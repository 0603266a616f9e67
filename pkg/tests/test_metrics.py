import numpy as np
import pytest

from layerprobe.metrics import (
    ScoreEntry,
    ScoreSet,
    compute_eer,
    mean_eer,
    read_scores,
    write_scores,
)


def make_set(bona, spoof):
    entries = [ScoreEntry(f"b{i}", "bonafide", s) for i, s in enumerate(bona)]
    entries += [ScoreEntry(f"s{i}", "spoof", s) for i, s in enumerate(spoof)]
    return ScoreSet(entries)


def brute_force_eer(bona, spoof):
    """Exhaustive sweep over every candidate threshold, naive loops."""
    bona = list(bona)
    spoof = list(spoof)
    candidates = sorted(set(bona + spoof)) + [float("-inf"), float("inf")]
    best = None
    for t in sorted(candidates):
        frr = sum(1 for s in bona if s < t) / len(bona)
        far = sum(1 for s in spoof if s >= t) / len(spoof)
        key = (abs(far - frr), far + frr, t)
        if best is None or key < best[0]:
            best = (key, (far + frr) / 2.0)
    return best[1]


def test_perfect_separation():
    assert compute_eer(make_set([0.9, 0.8], [0.1, 0.2])).eer == 0.0


def test_inverted_detector():
    assert compute_eer(make_set([0.1, 0.2], [0.8, 0.9])).eer == 1.0


def test_four_point_half():
    result = compute_eer(make_set([0.8, 0.4], [0.6, 0.2]))
    assert result.eer == 0.5
    assert result.far_at_threshold == 0.5
    assert result.frr_at_threshold == 0.5


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(2, 201))
        n_bona = int(rng.integers(1, n))
        scores = rng.normal(size=n)
        if rng.random() < 0.3:
            scores = np.round(scores, 1)  # force ties
        bona, spoof = scores[:n_bona], scores[n_bona:]
        result = compute_eer(make_set(bona, spoof))
        assert result.eer == brute_force_eer(bona, spoof)


def test_monotone_transform_invariance():
    rng = np.random.default_rng(5)
    bona = rng.normal(1.0, 1.0, 30)
    spoof = rng.normal(-1.0, 1.0, 40)
    base = compute_eer(make_set(bona, spoof)).eer
    for f in (lambda x: 3 * x + 2, np.tanh, lambda x: x**3):
        assert compute_eer(make_set(f(bona), f(spoof))).eer == pytest.approx(base, abs=1e-12)


def test_negate_and_swap_symmetry():
    rng = np.random.default_rng(6)
    bona = rng.normal(0.5, 1.0, 25)
    spoof = rng.normal(-0.5, 1.0, 25)
    base = compute_eer(make_set(bona, spoof)).eer
    flipped = compute_eer(make_set(-spoof, -bona)).eer
    assert flipped == pytest.approx(base, abs=1e-12)


def test_duplication_invariance():
    rng = np.random.default_rng(7)
    bona = rng.normal(0.5, 1.0, 10)
    spoof = rng.normal(-0.5, 1.0, 12)
    base = compute_eer(make_set(bona, spoof)).eer
    for k in (2, 5):
        assert compute_eer(make_set(np.tile(bona, k), np.tile(spoof, k))).eer == base


def test_empty_class_rejected():
    with pytest.raises(ValueError):
        compute_eer(make_set([0.5], []))


def test_non_finite_rejected():
    with pytest.raises(ValueError):
        compute_eer(make_set([np.nan], [0.0]))


def test_score_file_round_trip(tmp_path):
    scores = make_set([0.123456, 0.9], [0.2])
    path = tmp_path / "scores.txt"
    write_scores(scores, path)
    out = read_scores(path)
    assert [e.utt_id for e in out.entries] == [e.utt_id for e in scores.entries]
    assert all(
        abs(a.score - b.score) < 1e-6 for a, b in zip(out.entries, scores.entries)
    )


def test_malformed_score_line(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("u1 bonafide abc\n")
    with pytest.raises(ValueError, match="1"):
        read_scores(path)


def test_large_round_trip_preserves_eer(tmp_path):
    rng = np.random.default_rng(9)
    bona = rng.normal(1, 1, 5000)
    spoof = rng.normal(-1, 1, 5000)
    scores = make_set(bona, spoof)
    path = tmp_path / "big.txt"
    write_scores(scores, path)
    reread = read_scores(path)
    assert compute_eer(reread).eer == compute_eer(
        make_set(
            [round(s, 6) for s in bona], [round(s, 6) for s in spoof]
        )
    ).eer


def test_mean_eer():
    def r(e):
        from layerprobe.metrics import EERResult

        return EERResult(eer=e, threshold=0, far_at_threshold=e, frr_at_threshold=e)

    assert mean_eer([r(0.0)]) == 0.0
    assert mean_eer([r(0.02), r(0.04), r(0.06)]) == pytest.approx(0.04)
    with pytest.raises(ValueError):
        mean_eer([])

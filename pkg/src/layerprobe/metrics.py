"""Equal error rate computation and score-file I/O.

Convention (fixed and oracle-tested): FRR(t) is the fraction of bonafide
scores strictly below t, FAR(t) the fraction of spoof scores >= t.
Candidate thresholds are all distinct scores plus -inf/+inf sentinels; the
threshold minimizing |FAR - FRR| wins, ties broken by smaller FAR + FRR,
then by smaller t. EER is the midpoint (FAR + FRR) / 2 at that threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ScoreEntry:
    utt_id: str
    label: str  # bonafide | spoof
    score: float


@dataclass
class ScoreSet:
    entries: list[ScoreEntry]

    def split(self) -> tuple[np.ndarray, np.ndarray]:
        bona = np.array([e.score for e in self.entries if e.label == "bonafide"])
        spoof = np.array([e.score for e in self.entries if e.label == "spoof"])
        return bona, spoof


@dataclass
class EERResult:
    eer: float
    threshold: float
    far_at_threshold: float
    frr_at_threshold: float


def compute_eer(scores: ScoreSet) -> EERResult:
    bona, spoof = scores.split()
    if bona.size == 0 or spoof.size == 0:
        raise ValueError("EER needs at least one bonafide and one spoof score")
    allscores = np.concatenate([bona, spoof])
    if not np.all(np.isfinite(allscores)):
        raise ValueError("non-finite score")

    candidates = np.concatenate([np.unique(allscores), [-np.inf, np.inf]])
    best = None
    for t in candidates:
        frr = np.count_nonzero(bona < t) / bona.size
        far = np.count_nonzero(spoof >= t) / spoof.size
        key = (abs(far - frr), far + frr, t)
        if best is None or key < best[0]:
            best = (key, t, far, frr)
    _, t, far, frr = best
    return EERResult(eer=(far + frr) / 2.0, threshold=float(t), far_at_threshold=far, frr_at_threshold=frr)


def mean_eer(results: list[EERResult]) -> float:
    if not results:
        raise ValueError("empty result list")
    return float(np.mean([r.eer for r in results]))


def write_scores(scores: ScoreSet, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in scores.entries:
            f.write(f"{e.utt_id} {e.label} {e.score:.6f}\n")


def read_scores(path) -> ScoreSet:
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 3 or fields[1] not in ("bonafide", "spoof"):
                raise ValueError(f"{path}:{lineno}: malformed score line")
            try:
                score = float(fields[2])
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: unparseable score {fields[2]!r}") from e
            entries.append(ScoreEntry(utt_id=fields[0], label=fields[1], score=score))
    return ScoreSet(entries=entries)

"""Cross-evaluation and ranking of high-performing sequences into C_seq and P_pool."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .backend import Backend, PassSequence, ProgramHandle
from .scoring import DistributionStats, ScoreWeights, distribution_stats, weighted_score


@dataclass(frozen=True)
class RankedSequence:
    sequence: PassSequence
    stats: DistributionStats
    score: float

    def to_dict(self) -> dict:
        return {"sequence": list(self.sequence), "stats": self.stats.as_dict(), "score": self.score}

    @classmethod
    def from_dict(cls, d: dict) -> "RankedSequence":
        return cls(tuple(d["sequence"]), DistributionStats(**d["stats"]), d["score"])


def rank_key(r: RankedSequence):
    return (-r.score, len(r.sequence), r.sequence)


def evaluate_sequences(backend: Backend, seqs: Iterable[PassSequence],
                       corpus: Sequence[ProgramHandle],
                       weights: ScoreWeights = ScoreWeights(), jobs: int = 1) -> list[RankedSequence]:
    """Score every sequence over the pooled OverOz of ``corpus``; best first."""
    if not corpus:
        raise ValueError("corpus is empty")
    seqs = list(dict.fromkeys(tuple(s) for s in seqs))
    pairs = [(p, s) for s in seqs for p in corpus]
    outcomes = backend.evaluate_many(pairs, jobs=jobs)
    n = len(corpus)
    ranked = []
    for i, s in enumerate(seqs):
        stats = distribution_stats(outcomes[i * n:(i + 1) * n])
        ranked.append(RankedSequence(s, stats, weighted_score(stats, weights)))
    ranked.sort(key=rank_key)
    return ranked


def select_candidates(ranked: Sequence[RankedSequence],
                      k_top: int) -> tuple[list[PassSequence], list[str]]:
    """Top ``k_top`` sequences and the pass pool they span (first-appearance order)."""
    if k_top < 1:
        raise ValueError("k_top must be >= 1")
    if not ranked:
        raise ValueError("no ranked sequences to select from")
    c_seq = [r.sequence for r in ranked[:k_top]]
    pool = list(dict.fromkeys(x for s in c_seq for x in s))
    return c_seq, pool


def score_histogram(ranked: Sequence[RankedSequence], bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram of scores over [min, max]; returns (edges, counts)."""
    if not ranked:
        raise ValueError("no ranked sequences")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    scores = np.array([r.score for r in ranked])
    counts, edges = np.histogram(scores, bins=bins)
    return edges, counts

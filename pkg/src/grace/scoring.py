"""OverOz, distribution statistics and the weighted ranking score."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .backend import EvalOutcome

# OverOz charged to an evaluation that failed to compile or timed out
FAILED_OVER_OZ = -100.0


def over_oz(n_oz: int, n_x: int) -> float:
    """Percent reduction of ``n_x`` relative to the -Oz count ``n_oz``."""
    if n_oz < 1:
        raise ValueError("n_oz must be >= 1")
    return (n_oz - n_x) / n_oz * 100.0


@dataclass(frozen=True)
class DistributionStats:
    avg: float
    std: float
    neg_rate: float

    def as_dict(self) -> dict:
        return {"avg": self.avg, "std": self.std, "neg_rate": self.neg_rate}


@dataclass(frozen=True)
class ScoreWeights:
    w_avg: float = 0.75
    w_std: float = 0.10
    w_neg: float = 0.15

    def __post_init__(self):
        if min(self.w_avg, self.w_std, self.w_neg) < 0:
            raise ValueError("score weights must be nonnegative")


def stats_from_values(values: Sequence[float]) -> DistributionStats:
    n = len(values)
    if n == 0:
        raise ValueError("cannot compute statistics over zero outcomes")
    avg = math.fsum(values) / n
    var = math.fsum((v - avg) ** 2 for v in values) / n
    neg = sum(1 for v in values if v < 0) / n
    return DistributionStats(avg, math.sqrt(var), neg)


def outcome_values(outcomes: Iterable[EvalOutcome]) -> list[float]:
    return [o.over_oz_pct if o.ok else FAILED_OVER_OZ for o in outcomes]


def distribution_stats(outcomes: Sequence[EvalOutcome]) -> DistributionStats:
    """Population statistics of OverOz; failed evaluations count as -100."""
    return stats_from_values(outcome_values(outcomes))


def weighted_score(stats: DistributionStats, w: ScoreWeights = ScoreWeights()) -> float:
    # neg_rate is rescaled to percent so all three terms share units
    return w.w_avg * stats.avg - w.w_std * stats.std - w.w_neg * (stats.neg_rate * 100.0)

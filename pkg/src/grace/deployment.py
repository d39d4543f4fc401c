"""Test-time coreset selection and optional refinements."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .backend import Backend, BackendError, PassSequence, ProgramHandle
from .evolution import CoresetEntry, GaConfig, SequenceGA
from .scoring import over_oz

PREFIX = "prefix"
LOCAL_GA = "local_ga"
OZ_FALLBACK = "oz_fallback"
REFINEMENT_ORDER = (PREFIX, LOCAL_GA, OZ_FALLBACK)
_ALIASES = {"prefix": PREFIX, "local_ga": LOCAL_GA, "localga": LOCAL_GA, "ga": LOCAL_GA,
            "oz_fallback": OZ_FALLBACK, "ozfallback": OZ_FALLBACK, "oz": OZ_FALLBACK}


def parse_refinements(text: str | Iterable[str] | None) -> frozenset[str]:
    if text is None:
        return frozenset()
    items = text.split(",") if isinstance(text, str) else list(text)
    out = set()
    for item in items:
        item = item.strip().lower().replace("-", "_")
        if not item or item == "none":
            continue
        if item not in _ALIASES:
            raise ValueError(f"unknown refinement {item!r}")
        out.add(_ALIASES[item])
    return frozenset(out)


def local_ga_config(seed: int = 0) -> GaConfig:
    return GaConfig(population_size=16, generations=10, seed_fraction=0.5, elitism=2, rng_seed=seed)


@dataclass
class TuneResult:
    program_id: str
    selected_sequence: PassSequence
    final_count: int
    over_oz_pct: float
    refinements: dict[str, bool] = field(default_factory=dict)
    evals_used: int = 0
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"program_id": self.program_id, "selected_sequence": list(self.selected_sequence),
                "final_count": self.final_count, "over_oz_pct": self.over_oz_pct,
                "refinements": dict(self.refinements), "evals_used": self.evals_used,
                "wall_time": self.wall_time}


@dataclass
class SuiteReport:
    results: list[TuneResult]
    avg_over_oz: float
    success_pct: float
    worse_pct: float
    equal_pct: float

    def to_dict(self) -> dict:
        return {"avg_over_oz": self.avg_over_oz, "success_pct": self.success_pct,
                "worse_pct": self.worse_pct, "equal_pct": self.equal_pct,
                "results": [r.to_dict() for r in self.results]}


def _count_or_none(backend: Backend, p: ProgramHandle, seq: PassSequence) -> int | None:
    try:
        return backend.instruction_count(p, seq)
    except BackendError:
        return None


def select_from_coreset(backend: Backend, p: ProgramHandle,
                        coreset: Sequence[CoresetEntry]) -> tuple[PassSequence, int]:
    """Coreset sequence with the lowest count on ``p`` (ties: shorter, then lower cluster)."""
    if not coreset:
        raise ValueError("coreset is empty")
    best = None
    for e in coreset:
        n = _count_or_none(backend, p, e.sequence)
        if n is None:
            continue
        key = (n, len(e.sequence), e.cluster_index)
        if best is None or key < best[0]:
            best = (key, e.sequence)
    if best is None:
        return (), p.baseline_count
    return best[1], best[0][0]


def refine_prefix(backend: Backend, p: ProgramHandle, seq: PassSequence) -> PassSequence:
    """Replace ``seq`` by its best strict prefix if that prefix is strictly better."""
    seq = tuple(seq)
    if not seq:
        raise ValueError("prefix refinement needs a nonempty sequence")
    best_seq, best_n = seq, _count_or_none(backend, p, seq)
    for i in range(1, len(seq)):
        n = _count_or_none(backend, p, seq[:i])
        if n is not None and (best_n is None or n < best_n):
            best_seq, best_n = seq[:i], n
    return best_seq


def refine_local_ga(backend: Backend, p: ProgramHandle, seq: PassSequence,
                    cfg: GaConfig | None = None, stats: dict | None = None) -> PassSequence:
    """Short GA over ``seq``'s own passes; keeps ``seq`` unless something is strictly better."""
    seq = tuple(seq)
    if not seq:
        raise ValueError("local GA refinement needs a nonempty sequence")
    cfg = cfg or local_ga_config()
    if cfg.generations == 0:
        # no evolution means no local search: the seeded sequence is the answer
        if stats is not None:
            stats["evals"] = 0
        return seq
    rng = np.random.default_rng(cfg.rng_seed)
    pool = list(dict.fromkeys(seq))
    worst = float("-inf")

    def fit(s: PassSequence) -> float:
        n = _count_or_none(backend, p, s)
        return worst if n is None else -float(n)

    ga = SequenceGA(fit, pool, GaConfig(**{**cfg.to_dict(), "max_len": max(cfg.max_len, len(seq))}), rng)
    n_seed = max(1, int(np.ceil(cfg.population_size * cfg.seed_fraction)))
    initial = [seq] + [tuple(seq[i] for i in rng.permutation(len(seq))) for _ in range(n_seed - 1)]
    cand, _ = ga.run(initial)
    if stats is not None:
        stats["evals"] = ga.evaluations
    base = _count_or_none(backend, p, seq)
    got = _count_or_none(backend, p, cand)
    if got is not None and (base is None or got < base):
        return cand
    return seq


def refine_oz_fallback(backend: Backend, p: ProgramHandle, seq: PassSequence) -> PassSequence:
    """Keep ``seq`` only if it strictly beats -Oz on ``p``."""
    n = _count_or_none(backend, p, tuple(seq))
    if n is not None and n < backend.oz_count(p):
        return tuple(seq)
    return backend.oz_sequence()


def tune(backend: Backend, p: ProgramHandle, coreset: Sequence[CoresetEntry],
         options: Iterable[str] = (), ga_cfg: GaConfig | None = None) -> TuneResult:
    """Coreset selection followed by the enabled refinements in fixed order."""
    options = parse_refinements(options)
    t0 = time.perf_counter()
    seq, _ = select_from_coreset(backend, p, coreset)
    evals = len(coreset)
    applied = {r: False for r in REFINEMENT_ORDER}
    if PREFIX in options and seq:
        evals += len(seq) - 1
        new = refine_prefix(backend, p, seq)
        applied[PREFIX] = new != seq
        seq = new
    if LOCAL_GA in options and seq:
        info: dict = {}
        new = refine_local_ga(backend, p, seq, ga_cfg, info)
        evals += info["evals"]
        applied[LOCAL_GA] = new != seq
        seq = new
    if OZ_FALLBACK in options:
        new = refine_oz_fallback(backend, p, seq)
        applied[OZ_FALLBACK] = new != seq
        seq = new
    final = _count_or_none(backend, p, seq)
    if final is None:
        seq, final = (), p.baseline_count
    return TuneResult(p.id, seq, final, over_oz(p.oz_count, final), applied, evals,
                      time.perf_counter() - t0)


def summarize(results: Sequence[TuneResult]) -> SuiteReport:
    if not results:
        raise ValueError("no results to summarize")
    n = len(results)
    vals = [r.over_oz_pct for r in results]
    success = 100.0 * sum(v > 0 for v in vals) / n
    worse = 100.0 * sum(v < 0 for v in vals) / n
    return SuiteReport(list(results), float(np.mean(vals)), success, worse, 100.0 - success - worse)


def run_suite(backend: Backend, corpus: Sequence[ProgramHandle], coreset: Sequence[CoresetEntry],
              options: Iterable[str] = (), ga_cfg: GaConfig | None = None) -> SuiteReport:
    if not corpus:
        raise ValueError("test corpus is empty")
    options = parse_refinements(options)
    return summarize([tune(backend, p, coreset, options, ga_cfg) for p in corpus])

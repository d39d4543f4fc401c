"""Pass-synergy mining and synergy-graph guided sequence search."""
from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .backend import Backend, BackendError, PassSequence, ProgramHandle

log = logging.getLogger(__name__)

SynergyPair = tuple[str, str]


def identify_synergy_pairs(backend: Backend, p: ProgramHandle,
                           universe: Sequence[str]) -> set[SynergyPair]:
    """All ordered pairs (A, B) where B alone shrinks ``p`` and A before B shrinks it further.

    Both ⟨B⟩ and ⟨A, B⟩ are applied to the original program.
    """
    if not universe:
        raise ValueError("pass universe is empty")
    pairs: set[SynergyPair] = set()
    v_p = backend.instruction_count(p, ())
    for b in universe:
        try:
            v_b = backend.instruction_count(p, (b,))
        except BackendError as exc:
            log.warning("skipping pass %s on %s: %s", b, p.id, exc)
            continue
        if v_b >= v_p:
            continue
        for a in universe:
            try:
                v_ab = backend.instruction_count(p, (a, b))
            except BackendError as exc:
                log.warning("skipping pair (%s, %s) on %s: %s", a, b, p.id, exc)
                continue
            if v_ab < v_b:
                pairs.add((a, b))
    return pairs


@dataclass
class SynergyGraph:
    nodes: list[str] = field(default_factory=list)
    edges: dict[SynergyPair, int] = field(default_factory=dict)

    def successors(self, a: str) -> list[tuple[str, int]]:
        """Successors of ``a`` by descending support, then name."""
        out = [(b, s) for (x, b), s in self.edges.items() if x == a]
        return sorted(out, key=lambda t: (-t[1], t[0]))

    def self_loops(self) -> list[str]:
        return sorted(a for a, b in self.edges if a == b)

    def __bool__(self) -> bool:
        return bool(self.edges)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [{"a": a, "b": b, "support": s}
                      for (a, b), s in sorted(self.edges.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SynergyGraph":
        return cls(list(d["nodes"]), {(e["a"], e["b"]): int(e["support"]) for e in d["edges"]})


def build_global_graph(per_program_pairs: Iterable[set[SynergyPair]]) -> SynergyGraph:
    support: Counter = Counter()
    for pairs in per_program_pairs:
        support.update(set(pairs))
    nodes = sorted({x for pair in support for x in pair})
    return SynergyGraph(nodes, dict(sorted(support.items())))


def mine_corpus(backend: Backend, corpus: Sequence[ProgramHandle],
                jobs: int = 1) -> list[set[SynergyPair]]:
    universe = backend.pass_universe()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(lambda p: identify_synergy_pairs(backend, p, universe), corpus))
    return [identify_synergy_pairs(backend, p, universe) for p in corpus]


def _rank_key(item: tuple[int, PassSequence]):
    count, seq = item
    return (count, len(seq), seq)


def search_high_performing_sequence(backend: Backend, p: ProgramHandle, g: SynergyGraph,
                                    budget: int, *, beam_width: int = 8, branch: int = 3, epsilon: float = 0.2,
                                    max_len: int | None = None,
                                    rng: np.random.Generator | None = None) -> PassSequence:
    """Beam search over synergy-graph walks; returns the lowest-count sequence found.

    Each beam member is extended by up to ``branch`` successors of its last
    pass, sampled without replacement by edge support, and with probability ``epsilon`` by a uniformly drawn universe pass.
    At most ``budget`` distinct non-empty candidates are evaluated. The empty
    sequence is an implicit, free candidate.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    max_len = max_len or backend.max_len
    universe = backend.pass_universe()
    best: tuple[int, PassSequence] = (p.baseline_count, ())
    seen: set[PassSequence] = set()
    spent = 0

    def consider(seq: PassSequence):
        nonlocal spent, best
        seen.add(seq)
        spent += 1
        try:
            n = backend.instruction_count(p, seq)
        except BackendError:
            return None
        if _rank_key((n, seq)) < _rank_key(best):
            best = (n, seq)
        return n

    if not g:
        for b in universe[:budget]:
            consider((b,))
        return best[1]

    starts = [a for a in g.nodes if g.successors(a)] or list(g.nodes)
    beam: list[PassSequence] = [()]
    for _depth in range(max_len):
        scored: list[tuple[int, PassSequence]] = []
        for member in beam:
            if member:
                succ = g.successors(member[-1])
            else:
                succ = [(a, 1) for a in starts]
            options: list[str] = []
            if succ:
                names = [b for b, _ in succ]
                w = np.array([s for _, s in succ], dtype=float)
                take = min(branch, len(names))
                idx = rng.choice(len(names), size=take, replace=False, p=w / w.sum())
                options.extend(names[i] for i in idx)
            if not succ or rng.random() < epsilon:
                options.append(universe[int(rng.integers(len(universe)))])
            for nxt in options:
                cand = member + (nxt,)
                if cand in seen:
                    continue
                if spent >= budget:
                    break
                n = consider(cand)
                if n is not None:
                    scored.append((n, cand))
        if not scored or spent >= budget:
            break
        scored.sort(key=_rank_key)
        beam = [s for _, s in scored[:beam_width]]
    return best[1]


def search_corpus(backend: Backend, corpus: Sequence[ProgramHandle], g: SynergyGraph,
                  budget: int, seed: int, jobs: int = 1, **kw) -> list[PassSequence]:
    """One high-performing sequence per program, each with its own seeded stream."""
    seeds = np.random.SeedSequence(seed).spawn(len(corpus))

    def run(i):
        return search_high_performing_sequence(
            backend, corpus[i], g, budget, rng=np.random.default_rng(seeds[i]), **kw)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(run, range(len(corpus))))
    return [run(i) for i in range(len(corpus))]

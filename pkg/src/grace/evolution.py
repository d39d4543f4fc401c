"""Cluster-specific genetic algorithm that evolves one coreset sequence per cluster."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .backend import Backend, PassSequence, ProgramHandle
from .clustering import Clustering
from .scoring import (DistributionStats, ScoreWeights, distribution_stats, weighted_score)

log = logging.getLogger(__name__)


@dataclass
class GaConfig:
    population_size: int = 25
    generations: int = 50
    seed_fraction: float = 0.5
    crossover_rate: float = 0.9
    mutation_rate: float = 0.2
    elitism: int = 2
    tournament: int = 3
    init_min_len: int = 1
    init_max_len: int = 20
    max_len: int = 60
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4")
        for name in ("seed_fraction", "crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not 0 <= self.elitism < self.population_size:
            raise ValueError("elitism must be < population_size")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class CoresetEntry:
    cluster_index: int
    sequence: PassSequence
    fitness: float
    stats: DistributionStats
    members: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"cluster_index": self.cluster_index, "sequence": list(self.sequence),
                "fitness": self.fitness, "stats": self.stats.as_dict(), "members": list(self.members)}

    @classmethod
    def from_dict(cls, d: dict) -> "CoresetEntry":
        return cls(int(d["cluster_index"]), tuple(d["sequence"]), d["fitness"],
                   DistributionStats(**d["stats"]), list(d.get("members", [])))


class SequenceGA:
    """Generational GA over pass lists.

    ``fitness`` maps a sequence to a float (higher is better) and is memoized
    per run. Mutation and random individuals draw passes only from ``pool``.
    """

    def __init__(self, fitness: Callable[[PassSequence], float], pool: Sequence[str],
                 cfg: GaConfig, rng: np.random.Generator | None = None):
        if not pool:
            raise ValueError("pass pool is empty")
        self.fitness_fn = fitness
        self.pool = list(pool)
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(cfg.rng_seed)
        self.cache: dict[PassSequence, float] = {}
        self.history: list[float] = []
        self.created: set[str] = set()  # every pass in every individual ever made
        self.best: tuple[float, PassSequence] | None = None

    @property
    def evaluations(self) -> int:
        return len(self.cache)

    def fitness(self, seq: PassSequence) -> float:
        if seq not in self.cache:
            self.cache[seq] = self.fitness_fn(seq)
        return self.cache[seq]

    def random_individual(self) -> PassSequence:
        c = self.cfg
        hi = max(c.init_min_len, min(c.init_max_len, c.max_len))
        n = int(self.rng.integers(c.init_min_len, hi + 1))
        return tuple(self.pool[i] for i in self.rng.integers(len(self.pool), size=n))

    def _clamp(self, seq) -> PassSequence:
        seq = tuple(seq)[: self.cfg.max_len]
        return seq if seq else (self.pool[int(self.rng.integers(len(self.pool)))],)

    def _select(self, pop, fits) -> PassSequence:
        idx = self.rng.choice(len(pop), size=min(self.cfg.tournament, len(pop)), replace=False)
        return pop[max(idx, key=lambda i: (fits[i], -i))]

    def _crossover(self, a: PassSequence, b: PassSequence):
        i = int(self.rng.integers(0, len(a) + 1))
        j = int(self.rng.integers(0, len(b) + 1))
        return self._clamp(a[:i] + b[j:]), self._clamp(b[:j] + a[i:])

    def _mutate(self, s: PassSequence) -> PassSequence:
        s = list(s)
        kind = int(self.rng.integers(3))
        if kind == 2 and len(s) <= 1:
            kind = 0
        pick = self.pool[int(self.rng.integers(len(self.pool)))]
        if kind == 0:
            s[int(self.rng.integers(len(s)))] = pick
        elif kind == 1:
            s.insert(int(self.rng.integers(len(s) + 1)), pick)
        else:
            del s[int(self.rng.integers(len(s)))]
        return self._clamp(s)

    def _ranked(self, pop):
        fits = [self.fitness(s) for s in pop]
        order = sorted(range(len(pop)), key=lambda i: (-fits[i], len(pop[i]), pop[i]))
        return fits, order

    def _track(self, pop, fits, order):
        top = order[0]
        cand = (fits[top], pop[top])
        if self.best is None or (cand[0], -len(cand[1])) > (self.best[0], -len(self.best[1])):
            self.best = cand
        gen_best = fits[top]
        if self.cfg.elitism and self.history and gen_best < self.history[-1]:
            raise AssertionError("elite fitness decreased between generations")
        self.history.append(gen_best)

    def run(self, initial: Sequence[PassSequence]) -> tuple[PassSequence, float]:
        c = self.cfg
        pop = [self._clamp(s) for s in initial]
        while len(pop) < c.population_size:
            pop.append(self.random_individual())
        pop = pop[: c.population_size]
        for s in pop:
            self.created.update(s)
        fits, order = self._ranked(pop)
        self._track(pop, fits, order)
        for _gen in range(c.generations):
            nxt = [pop[i] for i in order[: c.elitism]]
            while len(nxt) < c.population_size:
                a, b = self._select(pop, fits), self._select(pop, fits)
                if self.rng.random() < c.crossover_rate:
                    a, b = self._crossover(a, b)
                for child in (a, b):
                    if self.rng.random() < c.mutation_rate:
                        child = self._mutate(child)
                    if len(nxt) < c.population_size:
                        nxt.append(child)
                        self.created.update(child)
            pop = nxt
            fits, order = self._ranked(pop)
            self._track(pop, fits, order)
        return self.best[1], self.best[0]


def cluster_fitness(backend: Backend, members: Sequence[ProgramHandle],
                    weights: ScoreWeights, jobs: int = 1):
    def fit(seq: PassSequence) -> float:
        return weighted_score(distribution_stats(
            backend.evaluate_many([(p, seq) for p in members], jobs=jobs)), weights)
    return fit


def seeded_population(c_seq: Sequence[PassSequence], cfg: GaConfig,
                      rng: np.random.Generator) -> list[PassSequence]:
    """ceil(pop * seed_fraction) individuals drawn from ``c_seq`` without replacement, cycling if short."""
    n_seed = math.ceil(cfg.population_size * cfg.seed_fraction)
    if n_seed == 0 or not c_seq:
        return []
    if len(c_seq) >= n_seed:
        idx = rng.choice(len(c_seq), size=n_seed, replace=False)
    else:
        perm = rng.permutation(len(c_seq))
        idx = [perm[i % len(c_seq)] for i in range(n_seed)]
    return [tuple(c_seq[i]) for i in idx]


def evolve_cluster(backend: Backend, members: Sequence[ProgramHandle],
                   c_seq: Sequence[PassSequence], pool: Sequence[str], cfg: GaConfig,
                   weights: ScoreWeights = ScoreWeights(), cluster_index: int = 0,
                   jobs: int = 1, ga_out: list | None = None) -> CoresetEntry:
    """Evolve the sequence with the best weighted score over ``members``.

    Pass ``ga_out`` (a list) to receive the ``SequenceGA`` instance for inspection.
    """
    if not members:
        raise ValueError("cluster has no members")
    members = sorted(members, key=lambda p: p.id)
    rng = np.random.default_rng(cfg.rng_seed)
    ga = SequenceGA(cluster_fitness(backend, members, weights, jobs), pool, cfg, rng)
    seq, fit = ga.run(seeded_population(c_seq, cfg, rng))
    if ga_out is not None:
        ga_out.append(ga)
    stats = distribution_stats([backend.evaluate(p, seq) for p in members])
    return CoresetEntry(cluster_index, seq, fit, stats, [p.id for p in members])


def cluster_seed(master_seed: int, cluster_index: int) -> int:
    return int(np.random.SeedSequence([master_seed, cluster_index]).generate_state(1)[0])


def evolve_all(backend: Backend, clustering: Clustering, corpus: Sequence[ProgramHandle],
               c_seq: Sequence[PassSequence], pool: Sequence[str], cfg: GaConfig,
               weights: ScoreWeights = ScoreWeights(), jobs: int = 1) -> list[CoresetEntry]:
    by_id = {p.id: p for p in corpus}
    entries = []
    for j in range(clustering.k):
        members = [by_id[i] for i in clustering.members(j)]
        ccfg = GaConfig(**{**cfg.to_dict(), "rng_seed": cluster_seed(cfg.rng_seed, j)})
        entry = evolve_cluster(backend, members, c_seq, pool, ccfg, weights, j, jobs)
        log.info("cluster %d (%d programs): fitness %.4f, %d passes",
                 j, len(members), entry.fitness, len(entry.sequence))
        entries.append(entry)
    return entries


def coreset_metrics(entries: Sequence[CoresetEntry]) -> dict[str, list[float]]:
    if not entries:
        raise ValueError("no coreset entries")
    return {"avg": [e.stats.avg for e in entries],
            "std": [e.stats.std for e in entries],
            "neg_rate": [e.stats.neg_rate for e in entries]}

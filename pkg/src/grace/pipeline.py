"""Stage orchestration over a persisted knowledge base, plus report exports."""
from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .backend import LLVMBackend, ProgramHandle, SimulatedBackend, load_manifest
from .backend.base import Backend
from .candidates import RankedSequence, evaluate_sequences, score_histogram, select_candidates
from .clustering import Clustering, kmeans_fit, sweep_k
from .config import PipelineConfig
from .deployment import run_suite
from .embedding import EncoderParams, embed, train
from .evolution import CoresetEntry, GaConfig, coreset_metrics, evolve_all
from .knowledge import SECTION, STAGES, KnowledgeBase, MissingArtifact
from .synergy import SynergyGraph, build_global_graph, mine_corpus, search_corpus

log = logging.getLogger(__name__)

# a stage's output invalidates everything computed from it
DOWNSTREAM = {
    "synergy": ("candidates", "coreset"),
    "candidates": ("coreset",),
    "embedding": ("clustering", "coreset"),
    "clustering": ("coreset",),
    "coreset": (),
}
REPORTS = ("scores", "coreset_metrics", "sweep", "suite")


class StageError(RuntimeError):
    pass


def make_backend(cfg: PipelineConfig) -> Backend:
    if cfg.backend == "sim":
        return SimulatedBackend(cfg.fixture, max_len=cfg.max_len)
    if not cfg.passes_file:
        raise StageError("the llvm backend needs passes_file")
    return LLVMBackend(cfg.passes_file, opt_bin=cfg.opt_bin, timeout=cfg.timeout, max_len=cfg.max_len)


def load_corpus(backend: Backend, cfg: PipelineConfig, split: str = "train") -> list[ProgramHandle]:
    manifest = cfg.train_manifest if split == "train" else cfg.test_manifest
    if manifest:
        entries = load_manifest(manifest)
    elif isinstance(backend, SimulatedBackend):
        return backend.corpus(split)
    else:
        raise StageError(f"no {split} manifest configured")
    if not entries:
        raise StageError(f"{split} manifest is empty")
    return [backend.program(pid, src) for pid, src in entries]


def _pairs_json(pairs) -> list[list[str]]:
    return [list(p) for p in sorted(pairs)]


def _stage_synergy(backend, cfg, kb, corpus):
    per_program = mine_corpus(backend, corpus, jobs=cfg.jobs)
    g = build_global_graph(per_program)
    if g.self_loops():
        log.info("self-synergy passes: %s", ", ".join(g.self_loops()))
    d = g.to_dict()
    d["self_loops"] = g.self_loops()
    d["per_program"] = {p.id: _pairs_json(s) for p, s in zip(corpus, per_program)}
    return d


def _stage_candidates(backend, cfg, kb, corpus):
    g = SynergyGraph.from_dict(kb["synergy"])
    sc = cfg.synergy
    seqs = search_corpus(backend, corpus, g, sc.search_budget, seed=cfg.seed, jobs=cfg.jobs,
                         beam_width=sc.beam_width, branch=sc.branch, epsilon=sc.epsilon)
    ranked = evaluate_sequences(backend, seqs, corpus, cfg.weights.build(), jobs=cfg.jobs)
    c_seq, pool = select_candidates(ranked, cfg.candidates.k_top)
    return {"high_performing": {p.id: list(s) for p, s in zip(corpus, seqs)},
            "ranked": [r.to_dict() for r in ranked], "k_top": cfg.candidates.k_top,
            "c_seq": [list(s) for s in c_seq], "pool": pool}


def _stage_embed(backend, cfg, kb, corpus):
    tcfg = cfg.embedding.build(cfg.seed)
    # small corpora still train, with a smaller batch
    tcfg.batch_size = max(1, min(tcfg.batch_size, len(corpus) // 2))
    res = train(backend, corpus, tcfg)
    return {"feature_names": list(backend.feature_names), "params": res.params.to_dict(),
            "epoch_losses": res.epoch_losses, "train_config": dict(vars(tcfg))}


def program_embeddings(backend, kb, corpus) -> list[tuple[str, np.ndarray]]:
    params = EncoderParams.from_dict(kb["embedding"]["params"])
    feats = np.stack([backend.extract_features(p) for p in corpus])
    return list(zip([p.id for p in corpus], embed(params, feats)))


def effective_k(cfg: PipelineConfig, n: int) -> int:
    return max(1, min(cfg.clustering.k, n // cfg.clustering.min_cluster_size))


def _stage_cluster(backend, cfg, kb, corpus):
    points = program_embeddings(backend, kb, corpus)
    k = effective_k(cfg, len(points))
    if k < cfg.clustering.k:
        log.warning("k=%d clamped to %d for %d programs", cfg.clustering.k, k, len(points))
    c = kmeans_fit(points, k, rng_seed=cfg.seed, max_iter=cfg.clustering.max_iter,
                   restarts=cfg.clustering.restarts)
    d = c.to_dict()
    d["k_requested"] = cfg.clustering.k
    d["embeddings"] = {pid: v.tolist() for pid, v in points}
    return d


def clustering_from_kb(kb) -> Clustering:
    cl = kb["clustering"]
    ids = sorted(cl["assignment"])
    return Clustering(cl["k"], np.array(cl["centroids"], dtype=float),
                      np.array([cl["assignment"][i] for i in ids]), ids, cl["objective"])


def _stage_evolve(backend, cfg, kb, corpus):
    cand = kb["candidates"]
    clustering = clustering_from_kb(kb)
    missing = set(clustering.ids) - {p.id for p in corpus}
    if missing:
        raise StageError(f"clustered programs missing from the training corpus: {sorted(missing)[:3]}")
    ga_cfg = cfg.evolution.build(cfg.seed, cfg.max_len)
    entries = evolve_all(backend, clustering, corpus, [tuple(s) for s in cand["c_seq"]],
                         cand["pool"], ga_cfg, cfg.weights.build(), jobs=cfg.jobs)
    return {"entries": [e.to_dict() for e in entries], "ga_config": ga_cfg.to_dict()}


_RUNNERS = {"synergy": _stage_synergy, "candidates": _stage_candidates, "embed": _stage_embed,
            "cluster": _stage_cluster, "evolve": _stage_evolve}


def _stage_config(cfg: PipelineConfig, stage: str) -> dict:
    section = {"synergy": "synergy", "candidates": "candidates", "embed": "embedding",
               "cluster": "clustering", "evolve": "evolution"}[stage]
    out = {section: getattr(cfg, section).model_dump()}
    if stage in ("candidates", "evolve"):
        out["weights"] = cfg.weights.model_dump()
    return out


def apply_stage(stage: str, cfg: PipelineConfig, kb: KnowledgeBase,
                backend: Backend | None = None, corpus: Sequence[ProgramHandle] | None = None):
    """Run one stage against an in-memory knowledge base."""
    if stage not in _RUNNERS:
        raise ValueError(f"unknown stage {stage!r}; expected one of {', '.join(STAGES)}")
    kb.require(stage)
    backend = backend or make_backend(cfg)
    desc = backend.describe()
    if kb.data["backend"] and kb.data["backend"] != desc:
        raise StageError("knowledge base was built with a different backend configuration")
    corpus = list(corpus) if corpus is not None else load_corpus(backend, cfg, "train")
    log.info("stage %s on %d programs", stage, len(corpus))
    try:
        result = _RUNNERS[stage](backend, cfg, kb, corpus)
    except (MissingArtifact, StageError):
        raise
    except Exception as exc:
        raise StageError(f"stage {stage} failed: {exc}") from exc
    section = SECTION[stage]
    for dep in DOWNSTREAM[section]:
        kb.drop(dep)
    kb.set(section, result)
    kb.data["backend"] = desc
    kb.data["config"] = cfg.model_dump()
    # no timestamps: identical inputs must give identical files
    kb.data["provenance"].append({"stage": stage, "seed": cfg.seed, "version": __version__,
                                  "programs": len(corpus), "config": _stage_config(cfg, stage)})
    kb.validate()
    return kb


def run_stage(stage: str, cfg: PipelineConfig, kb_path: str | Path, **kw) -> KnowledgeBase:
    kb = KnowledgeBase.load_or_new(kb_path)
    apply_stage(stage, cfg, kb, **kw)
    kb.save(kb_path)
    return kb


def run_all(cfg: PipelineConfig, kb_path: str | Path) -> KnowledgeBase:
    backend = make_backend(cfg)
    corpus = load_corpus(backend, cfg, "train")
    kb = KnowledgeBase.load_or_new(kb_path)
    for stage in STAGES:
        apply_stage(stage, cfg, kb, backend, corpus)
        kb.save(kb_path)
    return kb


def coreset_from_kb(kb) -> list[CoresetEntry]:
    return [CoresetEntry.from_dict(e) for e in kb["coreset"]["entries"]]


def run_tune(cfg: PipelineConfig, kb: KnowledgeBase, refine: Iterable[str] | str | None = None,
             manifest: str | None = None):
    backend = make_backend(cfg)
    if manifest:
        cfg = cfg.with_overrides(test_manifest=manifest)
    corpus = load_corpus(backend, cfg, "test")
    dc = cfg.deployment
    ga_cfg = GaConfig(population_size=dc.local_ga_population, generations=dc.local_ga_generations,
                      max_len=cfg.max_len, rng_seed=cfg.seed)
    options = dc.refine if refine is None else refine
    return run_suite(backend, corpus, coreset_from_kb(kb), options, ga_cfg)


# -- reports ---------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def _csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _round(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6f}")
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round(v) for v in obj]
    return obj


def report_scores(kb, bins: int = 20) -> dict[str, str]:
    ranked = [RankedSequence.from_dict(r) for r in kb["candidates"]["ranked"]]
    rows = [[i + 1, r.score, r.stats.avg, r.stats.std, r.stats.neg_rate, len(r.sequence),
             " ".join(r.sequence)] for i, r in enumerate(ranked)]
    edges, counts = score_histogram(ranked, bins)
    hist = [[float(edges[i]), float(edges[i + 1]), int(counts[i])] for i in range(len(counts))]
    return {"scores.csv": _csv(["rank", "score", "avg", "std", "neg_rate", "length", "sequence"], rows),
            "scores_histogram.csv": _csv(["lo", "hi", "count"], hist)}


def report_coreset(kb) -> dict[str, str]:
    entries = coreset_from_kb(kb)
    m = coreset_metrics(entries)
    rows = [[e.cluster_index, len(e.members), e.fitness, m["avg"][i], m["std"][i], m["neg_rate"][i],
             len(e.sequence), " ".join(e.sequence)] for i, e in enumerate(entries)]
    return {"coreset_metrics.csv": _csv(
        ["cluster", "members", "fitness", "avg", "std", "neg_rate", "length", "sequence"], rows)}


def sweep_rows(kb, cfg: PipelineConfig):
    emb = kb["clustering"]["embeddings"]
    points = [(pid, np.array(emb[pid])) for pid in sorted(emb)]
    hi = min(cfg.clustering.sweep_max, len(points) - 1)
    if hi < cfg.clustering.sweep_min:
        raise StageError("too few programs for a k sweep")
    return sweep_k(points, range(cfg.clustering.sweep_min, hi + 1), rng_seed=cfg.seed)


def report_sweep(kb, cfg) -> dict[str, str]:
    rows = [[k, s, d] for k, s, d in sweep_rows(kb, cfg)]
    return {"sweep.csv": _csv(["k", "silhouette", "davies_bouldin"], rows)}


def report_suite(kb, cfg) -> dict[str, str]:
    suite = run_tune(cfg, kb)
    rows = [[r.program_id, r.final_count, r.over_oz_pct, r.evals_used, " ".join(r.selected_sequence)]
            for r in suite.results]
    summary = {"avg_over_oz": suite.avg_over_oz, "success_pct": suite.success_pct,
               "worse_pct": suite.worse_pct, "equal_pct": suite.equal_pct,
               "programs": len(suite.results), "refine": sorted(cfg.deployment.refine)}
    return {"suite.csv": _csv(["program", "final_count", "over_oz", "evals_used", "sequence"], rows),
            "suite_summary.json": json.dumps(_round(summary), indent=1, sort_keys=True) + "\n"}


def report(kb: KnowledgeBase, what: Iterable[str], out_dir: str | Path,
           cfg: PipelineConfig | None = None) -> list[Path]:
    """Write the requested exports into ``out_dir``; returns the written paths."""
    cfg = cfg or PipelineConfig()
    out_dir = Path(out_dir)
    files: dict[str, str] = {}
    for w in what:
        if w == "scores":
            files.update(report_scores(kb, cfg.candidates.histogram_bins))
        elif w == "coreset_metrics":
            files.update(report_coreset(kb))
        elif w == "sweep":
            files.update(report_sweep(kb, cfg))
        elif w == "suite":
            files.update(report_suite(kb, cfg))
        else:
            raise ValueError(f"unknown report {w!r}; expected one of {', '.join(REPORTS)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in files.items():
        path = out_dir / name
        path.write_text(text)
        paths.append(path)
    return paths

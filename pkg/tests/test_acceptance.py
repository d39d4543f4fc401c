"""Acceptance criteria, each at its stated tolerance and runtime bound.

Every test records one PASS/FAIL line that is printed in the terminal summary.
"""
import json
import os
import stat
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from grace import cli
from grace.backend import SimulatedBackend
from grace.candidates import evaluate_sequences
from grace.clustering import davies_bouldin, kmeans_fit, silhouette
from grace.config import load_config, parse_config
from grace.deployment import (OZ_FALLBACK, local_ga_config, refine_local_ga, refine_prefix,
                              run_suite, select_from_coreset)
from grace.embedding import contrastive_loss, embed, loss_and_grads, train
from grace.evolution import CoresetEntry, GaConfig, SequenceGA, cluster_fitness, seeded_population
from grace.knowledge import KnowledgeBase
from grace.pipeline import coreset_from_kb, run_all, run_tune
from grace.scoring import ScoreWeights
from grace.synergy import build_global_graph, identify_synergy_pairs
from oracles import brute_force_synergy, exhaustive_kmeans, scalar_contrastive_loss
from test_embedding import gradient_trial

LLVM_DATA = Path(__file__).parent / "data" / "llvm"
PIPELINE = {"seed": 7, "clustering": {"k": 3}, "embedding": {"batch_size": 8},
            "evolution": {"generations": 50}}


@contextmanager
def criterion(n, title, limit=None):
    detail = {}
    t0 = time.perf_counter()
    try:
        yield detail
        took = time.perf_counter() - t0
        if limit is not None:
            assert took < limit, f"runtime {took:.1f}s exceeds {limit}s"
    except BaseException as exc:
        if isinstance(exc, pytest.skip.Exception):
            ACCEPTANCE.append(f"criterion {n}: SKIP  {title} ({exc})")
        else:
            ACCEPTANCE.append(f"criterion {n}: FAIL  {title} ({str(exc).splitlines()[0][:120]})")
        raise
    took = time.perf_counter() - t0
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    ACCEPTANCE.append(f"criterion {n}: PASS  {title} [{took:.1f}s{'; ' + extra if extra else ''}]")


@pytest.fixture(scope="module")
def pipeline_run(tmp_path_factory):
    path = tmp_path_factory.mktemp("acc") / "kb.json"
    t0 = time.perf_counter()
    run_all(parse_config(PIPELINE), path)
    return path, time.perf_counter() - t0


def test_criterion_01_synergy_oracle():
    with criterion(1, "synergy pairs equal brute-force oracle on 30 programs", limit=5) as d:
        b = SimulatedBackend()
        corpus = b.corpus("train")
        assert len(corpus) == 30 and len(b.pass_universe()) == 12
        u = b.pass_universe()
        per, oracle = [], []
        for p in corpus:
            got = identify_synergy_pairs(b, p, u)
            want = brute_force_synergy(b.model, b.model.program(p.source), u)
            assert got == want, p.id
            per.append(got)
            oracle.append(want)
        g = build_global_graph(per)
        support = {}
        for pairs in oracle:
            for e in pairs:
                support[e] = support.get(e, 0) + 1
        assert g.edges == support
        d["edges"] = len(g.edges)


def test_criterion_02_gradient_check():
    with criterion(2, "backprop vs central differences, 20 trials, rel err <= 1e-4", limit=30) as d:
        rng = np.random.default_rng(2024)
        errs = [gradient_trial(rng) for _ in range(20)]
        d["max_rel_err"] = f"{max(errs):.2e}"
        assert max(errs) <= 1e-4


def test_criterion_03_loss_sanity():
    with criterion(3, "hand batch golden loss and N=1 masked case") as d:
        z = np.array([[0, 0], [0, 0], [5, 0], [5, 0]], dtype=float)
        loss, _ = contrastive_loss(z, [1, 0, 3, 2], 1.0)
        oracle, _ = scalar_contrastive_loss(z.tolist(), [1, 0, 3, 2], 1.0)
        assert abs(loss - oracle) <= 1e-9
        one, _ = contrastive_loss(np.array([[1.0, 2.0], [-4.0, 0.5]]), [1, 0], 1.0)
        assert one == 0.0
        d["loss"] = f"{loss:.9f}"


def test_criterion_04_kmeans_global_optimum():
    with criterion(4, "k-means best-of-10 equals exhaustive optimum on 25 instances", limit=10) as d:
        rng = np.random.default_rng(99)
        worst = 0.0
        for t in range(25):
            n = int(rng.integers(3, 9))
            k = int(rng.integers(1, min(3, n) + 1))
            x = rng.normal(size=(n, int(rng.integers(1, 4))))
            c = kmeans_fit([(str(i), v) for i, v in enumerate(x)], k, rng_seed=t, restarts=10)
            gap = abs(c.objective - exhaustive_kmeans(x.tolist(), k))
            worst = max(worst, gap)
            assert gap <= 1e-9, (t, n, k, gap)
        d["max_gap"] = f"{worst:.1e}"


def test_criterion_05_embedding_quality():
    with criterion(5, "contrastive silhouette beats raw by >= 0.05 at k=3, DBI lower", limit=120) as d:
        cfg = parse_config(PIPELINE)
        b = SimulatedBackend()
        corpus = b.corpus("train")
        res = train(b, corpus, cfg.embedding.build(cfg.seed))
        x = np.stack([b.extract_features(p) for p in corpus])
        raw = (x - x.mean(axis=0)) / np.where(x.std(axis=0) > 0, x.std(axis=0), 1.0)
        emb = embed(res.params, x)
        ids = [p.id for p in corpus]
        scores = {}
        for name, pts in (("raw", raw), ("emb", emb)):
            c = kmeans_fit(list(zip(ids, pts)), 3, rng_seed=cfg.seed)
            scores[name] = (silhouette(pts, c.labels), davies_bouldin(pts, c.labels))
        d["sil"] = f"{scores['emb'][0]:.3f} vs {scores['raw'][0]:.3f}"
        d["dbi"] = f"{scores['emb'][1]:.3f} vs {scores['raw'][1]:.3f}"
        assert scores["emb"][0] - scores["raw"][0] >= 0.05
        assert scores["emb"][1] < scores["raw"][1]


def _convergence_generation(history):
    final = history[-1]
    return next(i for i, v in enumerate(history) if v >= final - 0.01 * abs(final))


def test_criterion_06_ablation_direction(pipeline_run):
    with criterion(6, "CandInit-SpecPool vs RandInit-AllPasses (median of 5 seeds)", limit=300) as d:
        kb = KnowledgeBase.load(pipeline_run[0])
        b = SimulatedBackend()
        suite = b.corpus("test")
        c_seq = [tuple(s) for s in kb["candidates"]["c_seq"]]
        pool = kb["candidates"]["pool"]
        fit = cluster_fitness(b, suite, ScoreWeights(1.0, 0.0, 0.0))
        arms = {"cand": ([], []), "rand": ([], [])}
        for seed in range(5):
            for arm, (finals, gens) in arms.items():
                cfg = GaConfig(population_size=25, generations=10, rng_seed=seed,
                               seed_fraction=0.5 if arm == "cand" else 0.0)
                rng = np.random.default_rng(seed)
                ga = SequenceGA(fit, pool if arm == "cand" else list(b.pass_universe()), cfg, rng)
                ga.run(seeded_population(c_seq, cfg, rng) if arm == "cand" else [])
                finals.append(ga.history[-1])
                gens.append(_convergence_generation(ga.history))
        cf, cg = np.median(arms["cand"][0]), np.median(arms["cand"][1])
        rf, rg = np.median(arms["rand"][0]), np.median(arms["rand"][1])
        d["overoz"] = f"{cf:.2f} vs {rf:.2f}"
        d["conv_gen"] = f"{cg:g} vs {rg:g}"
        assert cf >= rf
        assert cg <= rg


def test_criterion_07_floor_and_no_regression(pipeline_run):
    with criterion(7, "oz_fallback floor; prefix and local GA never regress") as d:
        kb = KnowledgeBase.load(pipeline_run[0])
        b = SimulatedBackend()
        suite = b.corpus("test")
        coreset = coreset_from_kb(kb)
        rep = run_suite(b, suite, coreset, {OZ_FALLBACK})
        assert rep.worse_pct == 0
        assert min(r.over_oz_pct for r in rep.results) >= 0
        # every coreset sequence and the top C_seq members, on every held-out program
        seqs = [e.sequence for e in coreset] + [tuple(s) for s in kb["candidates"]["c_seq"][:20]]
        checks = 0
        for p in suite:
            selected, _ = select_from_coreset(b, p, coreset)
            for seq in [selected] + seqs:
                n = b.instruction_count(p, seq)
                assert b.instruction_count(p, refine_prefix(b, p, seq)) <= n
                assert b.instruction_count(p, refine_local_ga(b, p, seq, local_ga_config(1))) <= n
                checks += 2
        d["checks"] = checks
        d["min_overoz"] = f"{min(r.over_oz_pct for r in rep.results):.2f}"


def test_criterion_08_end_to_end_gain(pipeline_run):
    path, took = pipeline_run
    with criterion(8, "coreset suite avg OverOz > best single C_seq", limit=600) as d:
        kb = KnowledgeBase.load(path)
        cfg = parse_config(PIPELINE)
        assert kb["clustering"]["k"] == 3 and kb["coreset"]["ga_config"]["generations"] == 50
        suite = run_tune(cfg, kb, refine=[])
        b = SimulatedBackend()
        best = tuple(kb["candidates"]["c_seq"][0])
        [single] = evaluate_sequences(b, [best], b.corpus("test"))
        d["coreset"] = f"{suite.avg_over_oz:.2f}"
        d["single"] = f"{single.stats.avg:.2f}"
        d["pipeline_s"] = f"{took:.1f}"
        assert suite.avg_over_oz > single.stats.avg
        assert took < 600


def test_criterion_09_determinism(pipeline_run, tmp_path):
    with criterion(9, "two run_all executions give byte-identical knowledge bases") as d:
        again = tmp_path / "kb.json"
        run_all(parse_config(PIPELINE), again)
        assert again.read_bytes() == pipeline_run[0].read_bytes()
        d["bytes"] = again.stat().st_size


OPT_WRAPPER = """#!{py}
import subprocess, sys
rc = subprocess.call([{real!r}] + sys.argv[1:])
with open({log!r}, "a") as fh:
    fh.write(f"{{rc}}\\n")
sys.exit(rc)
"""


def test_criterion_10_llvm_smoke(tmp_path):
    with criterion(10, "LLVM smoke: all stages, 20-flag universe, tune ozfallback", limit=300) as d:
        real = os.environ.get("GRACE_OPT_BIN")
        if not real:
            pytest.skip("GRACE_OPT_BIN unset")
        log = tmp_path / "rc.log"
        wrapper = tmp_path / "opt"
        wrapper.write_text(OPT_WRAPPER.format(py=sys.executable, real=real, log=str(log)))
        wrapper.chmod(wrapper.stat().st_mode | stat.S_IEXEC)
        cfg = load_config(LLVM_DATA / "smoke.json").with_overrides(opt_bin=str(wrapper))
        cfg_path, kb_path, out = tmp_path / "smoke.json", tmp_path / "kb.json", tmp_path / "tune.json"
        cfg_path.write_text(json.dumps(cfg.model_dump()))
        assert cli.main(["--config", str(cfg_path), "--kb", str(kb_path), "all"]) == 0
        kb = KnowledgeBase.load(kb_path)
        assert len(kb.data["backend"]["passes"]) == 20
        for section in ("synergy", "candidates", "embedding", "clustering", "coreset"):
            assert section in kb
        argv = ["--config", str(cfg_path), "--kb", str(kb_path), "tune", "--refine", "ozfallback",
                "--out", str(out)]
        assert cli.main(argv) == 0
        results = json.loads(out.read_text())["results"]
        over = [r["over_oz_pct"] for r in results]
        assert len(over) == 4 and min(over) >= 0
        codes = log.read_text().split()
        assert codes and all(c == "0" for c in codes), f"nonzero opt exits: {set(codes) - {'0'}}"
        d["opt_calls"] = len(codes)
        d["min_overoz"] = f"{min(over):.2f}"

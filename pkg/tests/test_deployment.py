import itertools

import numpy as np
import pytest

from grace.backend import SimulatedBackend
from grace.deployment import (LOCAL_GA, OZ_FALLBACK, PREFIX, local_ga_config, parse_refinements,
                              refine_local_ga, refine_oz_fallback, refine_prefix, run_suite,
                              select_from_coreset, summarize, tune)
from grace.evolution import CoresetEntry, GaConfig
from grace.scoring import DistributionStats
from helpers import pair_spec, prog, tiny_backend
from oracles import exhaustive_best

STATS = DistributionStats(0, 0, 0)


def coreset(*seqs):
    return [CoresetEntry(j, tuple(s), 0.0, STATS) for j, s in enumerate(seqs)]


BASE = ["promote", "simplify", "gvn", "dce", "combine"]
FAMILY_CORESET = coreset(
    BASE + ["loop-canon", "loop-opt"],
    BASE + ["vectorize"],
    ["promote", "inline", "strfold", "simplify", "gvn", "dce", "combine"],
)


def oz_backend():
    return tiny_backend({"cut": [{"effect": {"x": 10}}], "grow": [{"effect": {"x": -10}}], "noop": []},
                        oz=["noop"])


def test_parse_refinements():
    assert parse_refinements("prefix,localga,ozfallback") == {PREFIX, LOCAL_GA, OZ_FALLBACK}
    assert parse_refinements(["oz-fallback", " none "]) == {OZ_FALLBACK}
    assert parse_refinements(None) == frozenset()
    with pytest.raises(ValueError):
        parse_refinements("prefix,bogus")


# -- selection ---------------------------------------------------------------------

def test_single_entry_coreset(sim, test_corpus):
    p = test_corpus[0]
    assert select_from_coreset(sim, p, coreset(["gvn"])) == (("gvn",), sim.instruction_count(p, ("gvn",)))


def test_family_specialized_sequence_wins(sim, test_corpus):
    for p in test_corpus:
        seq, n = select_from_coreset(sim, p, FAMILY_CORESET)
        fam = p.source["family"]
        assert seq == FAMILY_CORESET[fam].sequence, p.id
        others = [sim.instruction_count(p, e.sequence) for e in FAMILY_CORESET if e.cluster_index != fam]
        assert n < min(others)


def test_all_failures_fall_back_to_empty(sim, test_corpus):
    p = test_corpus[0]
    assert select_from_coreset(sim, p, coreset(["nope"], ["gvn", "zap"])) == ((), p.baseline_count)


def test_selection_is_optimal(sim, test_corpus):
    cs = coreset(["gvn"], ["promote", "gvn"], ["inline", "combine", "dce"], ["unroll"], BASE)
    for p in test_corpus:
        _, n = select_from_coreset(sim, p, cs)
        assert all(n <= sim.instruction_count(p, e.sequence) for e in cs)


def test_selection_ties_prefer_shorter():
    b = oz_backend()
    p = prog(b, "p", x=100)
    assert select_from_coreset(b, p, coreset(["cut", "noop"], ["cut"]))[0] == ("cut",)


# -- refinements --------------------------------------------------------------------

def test_prefix_drops_harmful_tail():
    b = tiny_backend({"p1": [{"effect": {"x": 10}}], "p2": [{"effect": {"x": -6}}]})
    p = prog(b, "p", x=100)
    assert b.instruction_count(p, ("p1", "p2")) == 95
    assert b.instruction_count(p, ("p1",)) == 90
    assert refine_prefix(b, p, ("p1", "p2")) == ("p1",)


def test_prefix_keeps_original_when_no_prefix_better():
    b = oz_backend()
    p = prog(b, "p", x=100)
    assert refine_prefix(b, p, ("cut", "cut")) == ("cut", "cut")
    assert refine_prefix(b, p, ("noop", "cut")) == ("noop", "cut")
    assert refine_prefix(b, p, ("grow",)) == ("grow",)


def test_local_ga_reorders_to_unlock_synergy():
    b = tiny_backend(pair_spec())
    p = prog(b, "p", x=100)
    assert b.instruction_count(p, ("pB", "pA")) == 50
    assert refine_local_ga(b, p, ("pB", "pA"), local_ga_config(3)) == ("pA", "pB")


def test_local_ga_keeps_optimal_sequence():
    b = tiny_backend(pair_spec())
    p = prog(b, "p", x=100)
    seq = ("pA", "pB")
    count = lambda s: b.instruction_count(p, s)  # noqa: E731
    assert all(count(seq) <= count(perm) for perm in itertools.permutations(seq))
    assert exhaustive_best(count, ["pA", "pB"], 3)[0] == count(seq)
    assert refine_local_ga(b, p, seq, local_ga_config(0)) == seq


def test_local_ga_zero_generations_is_identity(sim, test_corpus):
    cfg = GaConfig(population_size=16, generations=0)
    seq = ("dce", "gvn", "promote", "combine")
    for p in test_corpus[:5]:
        info = {}
        assert refine_local_ga(sim, p, seq, cfg, info) == seq
        assert info["evals"] == 0


@pytest.mark.parametrize("seq,expect", [(("cut",), ("cut",)), (("grow",), ("noop",)), (("noop",), ("noop",))])
def test_oz_fallback_examples(seq, expect):
    b = oz_backend()
    p = prog(b, "p", x=100)
    assert p.oz_count == 100
    assert refine_oz_fallback(b, p, seq) == expect


# -- tune / suite ---------------------------------------------------------------------

def test_tune_without_refinements_is_selection(sim, test_corpus):
    p = test_corpus[4]
    r = tune(sim, p, FAMILY_CORESET)
    seq, n = select_from_coreset(sim, p, FAMILY_CORESET)
    assert (r.selected_sequence, r.final_count) == (seq, n)
    assert r.evals_used == len(FAMILY_CORESET)
    assert not any(r.refinements.values())


def test_tune_accounting(sim, test_corpus):
    p = test_corpus[1]
    seq, _ = select_from_coreset(sim, p, FAMILY_CORESET)
    r = tune(sim, p, FAMILY_CORESET, {PREFIX})
    assert r.evals_used == 3 + len(seq) - 1
    ga = GaConfig(population_size=8, generations=3)
    r2 = tune(SimulatedBackend(), p, FAMILY_CORESET, {LOCAL_GA}, ga)
    info = {}
    refine_local_ga(SimulatedBackend(), p, seq, ga, info)
    assert r2.evals_used == 3 + info["evals"]
    assert r2.wall_time >= 0


def test_tune_final_count_consistent(sim, test_corpus):
    for p in test_corpus:
        r = tune(sim, p, FAMILY_CORESET, {PREFIX, OZ_FALLBACK})
        assert r.final_count == sim.instruction_count(p, r.selected_sequence)
        assert r.over_oz_pct >= 0


def test_tune_oz_fallback_floor():
    b = oz_backend()
    p = prog(b, "p", x=100)
    r = tune(b, p, coreset(["grow"]), {OZ_FALLBACK})
    assert r.selected_sequence == ("noop",) and r.over_oz_pct == 0.0 and r.refinements[OZ_FALLBACK]


def test_single_program_suite():
    b = oz_backend()
    p = prog(b, "p", x=100)
    rep = run_suite(b, [p], coreset(["cut"]))
    assert rep.avg_over_oz == pytest.approx(10.0)
    assert (rep.success_pct, rep.worse_pct, rep.equal_pct) == (100.0, 0.0, 0.0)


def test_summarize_percentages():
    b = oz_backend()
    ps = [prog(b, f"p{i}", x=100) for i in range(4)]
    rs = [tune(b, ps[0], coreset(["cut"])), tune(b, ps[1], coreset(["grow"])),
          tune(b, ps[2], coreset(["noop"])), tune(b, ps[3], coreset(["cut", "cut"]))]
    rep = summarize(rs)
    assert (rep.success_pct, rep.worse_pct, rep.equal_pct) == (50.0, 25.0, 25.0)
    with pytest.raises(ValueError):
        summarize([])


WEAK_CORESET = coreset(["unroll", "promote"], ["inline", "unroll"], ["gvn", "simplify", "unroll", "dce"],
                       ["loop-opt", "vectorize", "strfold", "nop"])


@pytest.mark.parametrize("cs", [FAMILY_CORESET, WEAK_CORESET])
def test_refinements_never_regress(sim, test_corpus, cs):
    for p in test_corpus:
        seq, n = select_from_coreset(sim, p, cs)
        assert sim.instruction_count(p, refine_prefix(sim, p, seq)) <= n
        assert sim.instruction_count(p, refine_local_ga(sim, p, seq, local_ga_config(1))) <= n
        assert sim.instruction_count(p, refine_oz_fallback(sim, p, seq)) <= p.oz_count


@pytest.mark.parametrize("cs", [FAMILY_CORESET, WEAK_CORESET])
def test_suite_prefix_not_worse_and_oz_floor(sim, test_corpus, cs):
    none = run_suite(sim, test_corpus, cs)
    pre = run_suite(sim, test_corpus, cs, {PREFIX})
    assert pre.avg_over_oz >= none.avg_over_oz
    oz = run_suite(sim, test_corpus, cs, {OZ_FALLBACK})
    assert oz.worse_pct == 0 and min(r.over_oz_pct for r in oz.results) >= 0


def test_weak_coreset_actually_regresses_without_fallback(sim, test_corpus):
    # the fallback test above is only meaningful if something regresses without it
    assert run_suite(sim, test_corpus, WEAK_CORESET).worse_pct > 0


def test_suite_golden_with_family_coreset(sim, test_corpus):
    rep = run_suite(sim, test_corpus, FAMILY_CORESET)
    vals = []
    for p in test_corpus:
        n = min(sim.instruction_count(p, e.sequence) for e in FAMILY_CORESET)
        vals.append((p.oz_count - n) / p.oz_count * 100)
    assert rep.avg_over_oz == pytest.approx(np.mean(vals), abs=1e-12)
    assert rep.success_pct == 100.0

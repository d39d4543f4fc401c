"""Regenerate src/grace/data/sim12.json (the canonical simulated fixture).

The output is checked in; rerunning with the same seed reproduces it exactly.
"""
import json
from pathlib import Path

import numpy as np

COUNTERS = ["stack", "branch", "memory", "arith", "calls", "dead", "loop", "vector", "string"]
FLAGS = ["fam_loop", "fam_vec", "fam_str", "ssa", "cfg_clean", "inlined", "canon_loop",
         "gvn_done", "dce_done", "comb_done", "lopt_done", "vec_done", "str_done"]
FAMILIES = ["fam_loop", "fam_vec", "fam_str"]
SIGNATURE = ["loop", "vector", "string"]

# Most rewards fire once per program (guarded by a *_done flag); inline re-opens
# gvn/combine opportunities. unroll is harmful and stacks on every application.
PASSES = {
    "promote": [{"forbid": ["ssa"], "effect": {"stack": 70, "memory": 10},
                 "set": ["ssa"], "clear": ["dce_done"]}],
    "simplify": [{"forbid": ["cfg_clean"], "effect": {"branch": 30, "dead": 10}, "set": ["cfg_clean"]}],
    "gvn": [{"forbid": ["gvn_done"], "effect": {"memory": 10}, "set": ["gvn_done"]},
            {"require": ["ssa"], "forbid": ["gvn_done"], "effect": {"memory": 40}}],
    "dce": [{"forbid": ["dce_done"], "effect": {"dead": 30}, "set": ["dce_done"]},
            {"require": ["cfg_clean"], "forbid": ["dce_done"], "effect": {"dead": 50}}],
    "loop-canon": [{"require": ["fam_loop"], "forbid": ["canon_loop"],
                    "effect": {"loop": 5}, "set": ["canon_loop"]}],
    "loop-opt": [{"require": ["fam_loop"], "forbid": ["lopt_done"], "effect": {"loop": 30},
                  "set": ["lopt_done"]},
                 {"require": ["fam_loop", "canon_loop"], "forbid": ["lopt_done"], "effect": {"loop": 50}},
                 {"forbid": ["fam_loop"], "effect": {"arith": -15}}],
    "vectorize": [{"require": ["fam_vec", "ssa"], "forbid": ["vec_done"], "effect": {"vector": 60},
                   "set": ["vec_done"]},
                  {"require": ["fam_vec"], "forbid": ["ssa", "vec_done"], "effect": {"vector": 15},
                   "set": ["vec_done"]},
                  {"forbid": ["fam_vec"], "effect": {"arith": -15}}],
    "strfold": [{"require": ["fam_str", "inlined"], "forbid": ["str_done"], "effect": {"string": 60},
                 "set": ["str_done"]},
                {"require": ["fam_str"], "forbid": ["inlined", "str_done"], "effect": {"string": 15},
                 "set": ["str_done"]},
                {"forbid": ["fam_str"], "effect": {"arith": -15}}],
    "inline": [{"forbid": ["inlined"], "effect": {"calls": 80, "arith": -20, "stack": -30},
                "set": ["inlined"], "clear": ["gvn_done", "comb_done"]}],
    "combine": [{"forbid": ["comb_done"], "effect": {"arith": 20}, "set": ["comb_done"]},
                {"require": ["inlined"], "forbid": ["comb_done"], "effect": {"arith": 25}}],
    "nop": [],
    "unroll": [{"effect": {"branch": -40, "arith": -30, "dead": -20}}],
}

OZ = ["promote", "simplify", "gvn", "dce", "combine"]

VOLATILE = {"stack": (40, 80), "branch": (40, 80), "memory": (40, 80),
            "arith": (50, 90), "calls": (20, 40), "dead": (20, 40)}


def make_program(rng, pid, family):
    counters = {c: int(rng.integers(lo, hi + 1)) for c, (lo, hi) in VOLATILE.items()}
    for f, sig in enumerate(SIGNATURE):
        counters[sig] = int(rng.integers(60, 141)) if f == family else 0
    return {"id": pid, "family": family, "counters": counters, "flags": [FAMILIES[family]]}


def main(seed=2024, n_train=10, n_test=5):
    rng = np.random.default_rng(seed)
    programs = {"train": [], "test": []}
    for split, n in (("train", n_train), ("test", n_test)):
        for i in range(n):
            for fam in range(3):
                programs[split].append(make_program(rng, f"{split}-f{fam}-{i:02d}", fam))
    spec = {"name": "sim12", "counters": COUNTERS, "flags": FLAGS, "floor": 10,
            "passes": PASSES, "oz": OZ, "generator_seed": seed, "programs": programs}
    out = Path(__file__).resolve().parents[1] / "src" / "grace" / "data" / "sim12.json"
    out.write_text(json.dumps(spec, indent=1) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()

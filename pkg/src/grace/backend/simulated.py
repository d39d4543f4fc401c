"""Deterministic simulated compiler.

A program is a vector of nonnegative integer counters plus a bitmask of latent
flags. A pass is an ordered list of rules; a rule fires when all of its
``require`` flags are set and none of its ``forbid`` flags are, as observed on
entry to the pass. A firing rule scales designated counters by integer
percentages (positive removes, negative adds) and then sets/clears flags.
The instruction count is the counter sum plus a constant floor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .base import Backend, CompileError, PassSequence


@dataclass(frozen=True)
class Rule:
    require: int = 0
    forbid: int = 0
    deltas: tuple[tuple[int, int], ...] = ()  # (counter index, percent)
    sets: int = 0
    clears: int = 0


@dataclass(frozen=True)
class SimProgram:
    counters: tuple[int, ...]
    flags: int = 0
    family: int | None = None


class SimModel:
    """Counter/flag cost model loaded from a fixture definition."""

    def __init__(self, spec: dict):
        self.name = spec.get("name", "sim")
        self.counters: list[str] = list(spec["counters"])
        self.flags: list[str] = list(spec["flags"])
        self.floor = int(spec.get("floor", 0))
        self._flag_bit = {f: 1 << i for i, f in enumerate(self.flags)}
        self._counter_idx = {c: i for i, c in enumerate(self.counters)}
        self.rules: dict[str, tuple[Rule, ...]] = {}
        for name, rules in spec["passes"].items():
            self.rules[name] = tuple(self._rule(r) for r in rules)
        self.oz = tuple(spec["oz"])
        for p in self.oz:
            if p not in self.rules:
                raise ValueError(f"oz sequence uses unknown pass {p!r}")

    def _mask(self, names: Sequence[str]) -> int:
        m = 0
        for n in names:
            if n not in self._flag_bit:
                raise ValueError(f"unknown flag {n!r}")
            m |= self._flag_bit[n]
        return m

    def _rule(self, r: dict) -> Rule:
        deltas = tuple((self._counter_idx[c], int(pct)) for c, pct in r.get("effect", {}).items())
        return Rule(self._mask(r.get("require", [])), self._mask(r.get("forbid", [])),
                    deltas, self._mask(r.get("set", [])), self._mask(r.get("clear", [])))

    def program(self, d: dict) -> SimProgram:
        counters = tuple(int(d["counters"][c]) for c in self.counters)
        if any(c < 0 for c in counters):
            raise ValueError("counters must be nonnegative")
        return SimProgram(counters, self._mask(d.get("flags", [])), d.get("family"))

    def apply(self, prog: SimProgram, seq: Sequence[str]) -> SimProgram:
        c = list(prog.counters)
        flags = prog.flags
        for name in seq:
            try:
                rules = self.rules[name]
            except KeyError:
                raise CompileError(f"unknown pass {name!r}") from None
            entry = flags
            for r in rules:
                if entry & r.require != r.require or entry & r.forbid:
                    continue
                for i, pct in r.deltas:
                    if pct >= 0:
                        c[i] -= c[i] * pct // 100
                    else:
                        c[i] += c[i] * -pct // 100
                flags = (flags | r.sets) & ~r.clears
        return SimProgram(tuple(c), flags, prog.family)

    def count(self, prog: SimProgram) -> int:
        return sum(prog.counters) + self.floor


def load_fixture(name_or_path: str | Path = "sim12") -> dict:
    """Load a fixture JSON, either a packaged name or a filesystem path."""
    p = Path(name_or_path)
    if p.suffix == ".json" and p.exists():
        return json.loads(p.read_text())
    text = resources.files("grace.data").joinpath(f"{name_or_path}.json").read_text()
    return json.loads(text)


class SimulatedBackend(Backend):
    kind = "sim"

    def __init__(self, fixture: str | dict = "sim12", max_len: int = 60):
        spec = load_fixture(fixture) if isinstance(fixture, (str, Path)) else fixture
        self.fixture_name = fixture if isinstance(fixture, str) else spec.get("name", "sim")
        self.model = SimModel(spec)
        self.spec = spec
        self.feature_names = tuple(self.model.counters)
        super().__init__(self.model.rules, max_len=max_len)

    def describe(self) -> dict:
        return {"kind": self.kind, "fixture": self.fixture_name,
                "passes": list(self.passes), "max_len": self.max_len}

    def oz_sequence(self) -> PassSequence:
        return self.model.oz

    def _resolve(self, source) -> SimProgram:
        if isinstance(source, SimProgram):
            return source
        if isinstance(source, dict):
            return self.model.program(source)
        raise CompileError(f"cannot resolve simulated program from {type(source).__name__}")

    def _count(self, source, seq: PassSequence) -> int:
        return self.model.count(self.model.apply(self._resolve(source), seq))

    def _features(self, source, seq: PassSequence) -> np.ndarray:
        return np.array(self.model.apply(self._resolve(source), seq).counters, dtype=float)

    def corpus(self, split: str = "train"):
        """Handles for one of the fixture's checked-in program splits."""
        return [self.program(d["id"], d) for d in self.spec["programs"][split]]

"""Common compiler-backend abstraction.

A backend knows its pass universe, how to apply a pass sequence to a program
and count the resulting IR instructions, and how to extract a static feature
vector. Concrete backends implement ``_count`` and ``_features``; everything
else (memoization, error folding, parallel fan-out) lives here.
"""
from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PassSequence = tuple[str, ...]

OK = "ok"
COMPILE_ERROR = "compile_error"
TIMEOUT = "timeout"


class BackendError(Exception):
    """Base class for errors raised while evaluating a program."""

    status = COMPILE_ERROR


class CompileError(BackendError):
    status = COMPILE_ERROR


class EvalTimeout(BackendError):
    status = TIMEOUT


@dataclass(frozen=True)
class ProgramHandle:
    id: str
    source: Any = field(compare=False, hash=False)
    baseline_count: int = 0
    oz_count: int = 0


@dataclass(frozen=True)
class EvalOutcome:
    program_id: str
    sequence: PassSequence
    status: str
    instr_count: int | None = None
    over_oz_pct: float | None = None

    @property
    def ok(self) -> bool:
        return self.status == OK


class Backend:
    """Shared machinery for concrete backends.

    Subclasses provide ``_count(source, seq)``, ``_features(source, seq)``,
    ``passes`` (ordered universe) and ``oz_sequence()``.
    """

    kind = "abstract"
    feature_names: tuple[str, ...] = ()

    def __init__(self, passes: Iterable[str], max_len: int = 60):
        universe = list(dict.fromkeys(p for p in passes if p))
        if not universe:
            raise ValueError("pass universe is empty")
        self.passes: tuple[str, ...] = tuple(universe)
        self.max_len = max_len
        self._lock = threading.Lock()
        self._counts: dict[tuple[str, PassSequence], int | BackendError] = {}
        # number of real (non-memoized) compilations; audited by tests
        self.compilations = 0

    # -- subclass hooks -------------------------------------------------
    def _count(self, source: Any, seq: PassSequence) -> int:
        raise NotImplementedError

    def _features(self, source: Any, seq: PassSequence) -> np.ndarray:
        raise NotImplementedError

    def oz_sequence(self) -> PassSequence:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, "passes": list(self.passes), "max_len": self.max_len}

    # -- public API -----------------------------------------------------
    def pass_universe(self) -> tuple[str, ...]:
        return self.passes

    def program(self, program_id: str, source: Any) -> ProgramHandle:
        """Resolve ``source`` into a handle with cached baseline and Oz counts."""
        base = self._cached(program_id, source, ())
        oz = self._cached(program_id, source, self.oz_sequence())
        if base < 1 or oz < 1:
            raise CompileError(f"{program_id}: baseline and Oz counts must be >= 1")
        return ProgramHandle(program_id, source, base, oz)

    def instruction_count(self, p: ProgramHandle, seq: Sequence[str]) -> int:
        return self._cached(p.id, p.source, tuple(seq))

    def oz_count(self, p: ProgramHandle) -> int:
        return p.oz_count

    def extract_features(self, p: ProgramHandle, seq: Sequence[str] = ()) -> np.ndarray:
        return self._features(p.source, tuple(seq))

    def evaluate(self, p: ProgramHandle, seq: Sequence[str]) -> EvalOutcome:
        seq = tuple(seq)
        try:
            n = self.instruction_count(p, seq)
        except BackendError as exc:
            return EvalOutcome(p.id, seq, exc.status)
        over = (p.oz_count - n) / p.oz_count * 100.0
        return EvalOutcome(p.id, seq, OK, n, over)

    def evaluate_many(self, pairs: Sequence[tuple[ProgramHandle, PassSequence]],
                      jobs: int = 1) -> list[EvalOutcome]:
        if jobs <= 1 or len(pairs) < 2:
            return [self.evaluate(p, s) for p, s in pairs]
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(lambda ps: self.evaluate(*ps), pairs))

    def _cached(self, pid: str, source: Any, seq: PassSequence) -> int:
        key = (pid, seq)
        with self._lock:
            hit = self._counts.get(key)
        if hit is None:
            try:
                hit = self._count(source, seq)
            except BackendError as exc:
                log.debug("evaluation of %s on %s failed: %s", seq, pid, exc)
                hit = exc
            with self._lock:
                if key not in self._counts:
                    self.compilations += 1
                    self._counts[key] = hit
                hit = self._counts[key]
        if isinstance(hit, BackendError):
            raise hit
        return hit

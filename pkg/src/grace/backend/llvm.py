"""LLVM backend: drives an external ``opt`` and counts textual-IR instructions."""
from __future__ import annotations

import os
import re
import shutil
import subprocess
import tempfile
from pathlib import Path
from typing import Sequence

import numpy as np

from .base import Backend, CompileError, EvalTimeout, PassSequence

FEATURE_NAMES = (
    "instructions", "basic_blocks", "functions", "br", "ret", "call", "load", "store",
    "phi", "icmp", "alloca", "getelementptr", "addsub", "operands",
)

_LABEL = re.compile(r'^(?:[-\w.$]+|"[^"]*"|\d+):(?:\s|;|$)')
_OLD_LABEL = re.compile(r"^;\s*<label>:\d+")
_VALUE_REF = re.compile(r"[%@](?:[-\w.$]+|\"[^\"]*\")")
_ADDSUB = frozenset({"add", "sub", "fadd", "fsub"})
_CALL_PREFIX = frozenset({"tail", "musttail", "notail"})


def _opcode(line: str) -> str:
    rhs = line.split("=", 1)[1].strip() if re.match(r"^[%@][^=]*=", line) else line
    tokens = rhs.split()
    if not tokens:
        return ""
    if tokens[0] in _CALL_PREFIX and len(tokens) > 1:
        return tokens[1]
    return tokens[0]


def _operand_count(line: str) -> int:
    refs = _VALUE_REF.findall(line)
    # the defined result is not an operand
    if re.match(r"^[%@][^=]*=", line):
        refs = refs[1:]
    return len(refs)


def parse_ir(text: str) -> dict[str, int]:
    """Count instructions and the 14 textual features of an LLVM IR module.

    An instruction is a line inside a function body that is not a label,
    comment, blank, or the closing brace. This approximates Autophase-style
    static counters without parsing the IR properly.
    """
    feats = dict.fromkeys(FEATURE_NAMES, 0)
    in_body = False
    saw_label = saw_inst = in_table = False
    for raw in text.splitlines():
        line = raw.strip()
        if not in_body:
            if line.startswith("define ") and line.endswith("{"):
                in_body = True
                saw_label = saw_inst = False
                feats["functions"] += 1
            continue
        if line == "}":
            if saw_inst and not saw_label:
                feats["basic_blocks"] += 1
            in_body = False
            continue
        if in_table:
            # continuation lines of a multi-line switch/indirectbr table
            in_table = not line.startswith("]")
            continue
        if not line or line.startswith("!"):
            continue
        if _OLD_LABEL.match(line) or _LABEL.match(line):
            if saw_inst and not saw_label:
                feats["basic_blocks"] += 1  # unlabeled entry block
            feats["basic_blocks"] += 1
            saw_label = True
            continue
        if line.startswith(";"):
            continue
        saw_inst = True
        in_table = line.endswith("[")
        feats["instructions"] += 1
        op = _opcode(line)
        if op in ("br", "ret", "call", "load", "store", "phi", "icmp", "alloca", "getelementptr"):
            feats[op] += 1
        elif op in _ADDSUB:
            feats["addsub"] += 1
        feats["operands"] += _operand_count(line)
    return feats


def count_instructions(text: str) -> int:
    return parse_ir(text)["instructions"]


def read_pass_list(path: str | Path) -> list[str]:
    lines = Path(path).read_text().splitlines()
    return [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]


def default_opt_bin() -> str:
    return os.environ.get("GRACE_OPT_BIN") or shutil.which("opt") or "opt"


class LLVMBackend(Backend):
    """Runs ``<opt> <flags...> -S <in.ll> -o <out.ll>`` per evaluation."""

    kind = "llvm"
    feature_names = FEATURE_NAMES

    def __init__(self, passes: Sequence[str] | str | Path, opt_bin: str | None = None,
                 timeout: float = 60.0, max_len: int = 60):
        if isinstance(passes, (str, Path)):
            passes = read_pass_list(passes)
        super().__init__(passes, max_len=max_len)
        self.opt_bin = opt_bin or default_opt_bin()
        self.timeout = timeout

    def describe(self) -> dict:
        return {"kind": self.kind, "passes": list(self.passes), "max_len": self.max_len,
                "timeout": self.timeout}

    def oz_sequence(self) -> PassSequence:
        return ("-Oz",)

    def run_opt(self, source: str | Path, seq: PassSequence) -> str:
        """Optimized IR text of ``source`` after ``seq`` (the file itself for an empty sequence)."""
        src = Path(source)
        if not src.exists():
            raise CompileError(f"IR file not found: {src}")
        if not seq:
            return src.read_text()
        with tempfile.TemporaryDirectory(prefix="grace-") as tmp:
            out = Path(tmp) / "out.ll"
            cmd = [self.opt_bin, *seq, "-S", str(src), "-o", str(out)]
            try:
                proc = subprocess.run(cmd, capture_output=True, text=True, timeout=self.timeout)
            except subprocess.TimeoutExpired:
                raise EvalTimeout(f"opt exceeded {self.timeout}s on {src.name}") from None
            except OSError as exc:
                raise CompileError(f"cannot run {self.opt_bin}: {exc}") from None
            if proc.returncode != 0:
                tail = proc.stderr.strip().splitlines()[-3:]
                raise CompileError(f"opt exited {proc.returncode}: {' | '.join(tail)}")
            if not out.exists():
                raise CompileError("opt produced no output")
            return out.read_text()

    def _count(self, source, seq: PassSequence) -> int:
        n = count_instructions(self.run_opt(source, seq))
        if n < 1:
            raise CompileError(f"no instructions found in {source}")
        return n

    def _features(self, source, seq: PassSequence) -> np.ndarray:
        feats = parse_ir(self.run_opt(source, seq))
        return np.array([feats[k] for k in FEATURE_NAMES], dtype=float)

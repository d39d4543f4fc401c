from .base import (COMPILE_ERROR, OK, TIMEOUT, Backend, BackendError, CompileError,
                   EvalOutcome, EvalTimeout, PassSequence, ProgramHandle)
from .llvm import LLVMBackend, count_instructions, parse_ir
from .manifest import load_manifest
from .simulated import SimModel, SimProgram, SimulatedBackend, load_fixture

__all__ = [
    "Backend", "BackendError", "CompileError", "EvalTimeout", "EvalOutcome",
    "PassSequence", "ProgramHandle", "OK", "COMPILE_ERROR", "TIMEOUT",
    "SimModel", "SimProgram", "SimulatedBackend", "load_fixture",
    "LLVMBackend", "count_instructions", "parse_ir", "load_manifest",
]

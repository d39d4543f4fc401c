#!/usr/bin/env python3
"""Minimal `opt` stand-in built on llvmlite's bundled LLVM.

Usage mirrors the subset the LLVM backend needs:

    llvmlite_opt.py <-flag ...> -S <input.ll> -o <output.ll>

Point GRACE_OPT_BIN at this script when no real `opt` binary is installed.
Only the flags in PASSES (plus -O0..-O3/-Os/-Oz) are understood.
"""
import sys

import llvmlite.binding as llvm

PASSES = {
    "-adce": "add_aggressive_dce_pass",
    "-aggressive-instcombine": "add_aggressive_instcombine_pass",
    "-argpromotion": "add_argument_promotion_pass",
    "-constmerge": "add_constant_merge_pass",
    "-dce": "add_dead_code_elimination_pass",
    "-deadargelim": "add_dead_arg_elimination_pass",
    "-dse": "add_dead_store_elimination_pass",
    "-globaldce": "add_global_dead_code_eliminate_pass",
    "-globalopt": "add_global_opt_pass",
    "-instcombine": "add_instruction_combine_pass",
    "-ipsccp": "add_ipsccp_pass",
    "-jump-threading": "add_jump_threading_pass",
    "-loop-deletion": "add_loop_deletion_pass",
    "-loop-rotate": "add_loop_rotate_pass",
    "-loop-simplify": "add_loop_simplify_pass",
    "-memcpyopt": "add_mem_copy_opt_pass",
    # no standalone mem2reg in llvmlite; sroa subsumes its promotion
    "-mem2reg": "add_sroa_pass",
    "-mergefunc": "add_merge_functions_pass",
    "-newgvn": "add_new_gvn_pass",
    "-reassociate": "add_reassociate_pass",
    "-sccp": "add_sccp_pass",
    "-simplifycfg": "add_simplify_cfg_pass",
    "-sink": "add_sinking_pass",
    "-sroa": "add_sroa_pass",
    "-tailcallelim": "add_tail_call_elimination_pass",
    "-lower-switch": "add_lower_switch_pass",
    "-reg2mem": "add_register_to_memory_pass",
}
# llvmlite exposes no size level; -Os/-Oz are approximated by the O2 pipeline
# with unrolling/vectorization off and opt's size-level inline thresholds.
LEVELS = {"-O0": (0, None), "-O1": (1, None), "-O2": (2, None), "-O3": (3, None),
          "-Os": (2, 75), "-Oz": (2, 5)}


def main(argv):
    flags, src, out, i = [], None, None, 0
    while i < len(argv):
        a = argv[i]
        if a == "-o":
            out = argv[i + 1]
            i += 2
            continue
        if a == "-S":
            pass
        elif a.startswith("-"):
            if a not in PASSES and a not in LEVELS:
                print(f"llvmlite_opt: unknown pass flag {a}", file=sys.stderr)
                return 1
            flags.append(a)
        else:
            src = a
        i += 1
    if src is None or out is None:
        print("usage: llvmlite_opt.py <flags> -S <in.ll> -o <out.ll>", file=sys.stderr)
        return 2
    llvm.initialize_native_target()
    llvm.initialize_native_asmprinter()
    try:
        mod = llvm.parse_assembly(open(src).read())
        mod.verify()
    except RuntimeError as exc:
        print(f"llvmlite_opt: {exc}", file=sys.stderr)
        return 1
    tm = llvm.Target.from_default_triple().create_target_machine()
    for flag in flags:
        speed, inline_threshold = LEVELS.get(flag, (0, None))
        pto = llvm.create_pipeline_tuning_options(speed_level=speed)
        if inline_threshold is not None:
            pto.loop_unrolling = False
            pto.loop_vectorization = False
            pto.slp_vectorization = False
            pto.inlining_threshold = inline_threshold
        pb = llvm.create_pass_builder(tm, pto)
        if flag in LEVELS:
            mpm = pb.getModulePassManager()
        else:
            mpm = llvm.create_new_module_pass_manager()
            getattr(mpm, PASSES[flag])()
        mpm.run(mod, pb)
    with open(out, "w") as fh:
        fh.write(str(mod))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))

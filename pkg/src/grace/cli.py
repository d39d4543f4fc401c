"""Command-line entry point: ``grace <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .deployment import parse_refinements
from .knowledge import STAGES, KnowledgeBase, KnowledgeBaseError
from .pipeline import REPORTS, StageError, report, run_all, run_stage, run_tune

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 1, 2


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    # subparsers get SUPPRESS defaults so flags given before the subcommand survive
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", default=d(None), help="JSON config file")
    parser.add_argument("--kb", default=d("grace-kb.json"), help="knowledge base path")
    parser.add_argument("--seed", type=int, default=d(None), help="master seed")
    parser.add_argument("--jobs", type=int, default=d(None), help="parallel evaluations")
    parser.add_argument("--backend", choices=("sim", "llvm"), default=d(None))
    parser.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grace", description="Pass-sequence auto-tuning pipeline.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    sub.add_parser("all", parents=[common], help="run every stage in order")
    t = sub.add_parser("tune", parents=[common], help="tune a held-out suite with the coreset")
    t.add_argument("--manifest", help="test manifest (defaults to the configured test split)")
    t.add_argument("--refine", help="comma list of prefix, localga, ozfallback")
    t.add_argument("--out", help="write the JSON report here instead of stdout")
    r = sub.add_parser("report", parents=[common], help="export CSV/JSON reports")
    r.add_argument("what", nargs="+", choices=REPORTS)
    r.add_argument("--out-dir", default="reports")
    return parser


def _cfg(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, jobs=args.jobs, backend=args.backend)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _cfg(args)
        if args.command == "tune" and args.refine is not None:
            parse_refinements(args.refine)
    except (ConfigError, ValueError) as exc:
        print(f"grace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command in STAGES:
            run_stage(args.command, cfg, args.kb)
        elif args.command == "all":
            run_all(cfg, args.kb)
        elif args.command == "tune":
            suite = run_tune(cfg, KnowledgeBase.load(args.kb), args.refine, args.manifest)
            text = json.dumps(suite.to_dict(), indent=1, sort_keys=True) + "\n"
            if args.out:
                Path(args.out).write_text(text)
            else:
                sys.stdout.write(text)
            print(f"avg OverOz {suite.avg_over_oz:.6f}%  worse {suite.worse_pct:.1f}%", file=sys.stderr)
        elif args.command == "report":
            for path in report(KnowledgeBase.load(args.kb), args.what, args.out_dir, cfg):
                print(path)
    except (StageError, KnowledgeBaseError, OSError, ValueError) as exc:
        print(f"grace: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

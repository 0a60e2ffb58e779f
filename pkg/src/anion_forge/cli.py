"""``anion-forge`` command line entry point.

Exit status: 0 on success, 1 on usage errors, 2 on data errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import PipelineConfig
from .errors import AnionForgeError

log = logging.getLogger("anion_forge")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_help(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _unit_interval(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{value} is outside [0, 1]")
    return value


def _open_unit_interval(text: str) -> float:
    value = _unit_interval(text)
    if value in (0.0, 1.0):
        raise argparse.ArgumentTypeError(f"{value} is outside (0, 1)")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{value} must be >= 1")
    return value


def _common(p: argparse.ArgumentParser, *flags: str) -> None:
    """Attach the shared flags named in ``flags``."""
    specs = {
        "kg": dict(help="knowledge graph of affirmative events (jsonl or tsv)"),
        "anion": dict(help="knowledge graph of opposed events"),
        "cues": dict(help="cue lexicon TSV (default: shipped lexicon)"),
        "labels": dict(help="label TSV: head, relation, tail, label"),
        "seed": dict(type=int, help="random seed (required for sampling steps)"),
        "beam": dict(type=_positive_int, help="beam size (default 10)"),
        "threshold": dict(type=_unit_interval, help="validity threshold in [0, 1] (default 0.7)"),
        "permutations": dict(type=_positive_int, help="permutation count (default 10000)"),
        "alpha": dict(type=_open_unit_interval, help="significance level (default 0.05)"),
        "format": dict(choices=("jsonl", "tsv"), help="graph file format (default jsonl)"),
        "contractions": dict(action="store_true", default=None, help="contract negations (doesn't)"),
        "external-scorer": dict(metavar="CMD", help="discriminator subprocess (sentence per line in, probability out)"),
        "external-generator": dict(metavar="CMD", help="generator subprocess speaking JSON lines"),
        "split": dict(choices=("train", "dev", "test"), help="split whose opposed events are prompted (default test)"),
        "sample-size": dict(type=_positive_int, help="keep at most this many negations per cue"),
        "epochs": dict(type=_positive_int, help="SGD epochs (default 5)"),
        "learning-rate": dict(type=float, help="SGD learning rate (default 0.5)"),
        "smoothing": dict(type=float, help="add-lambda smoothing (default 0.1)"),
    }
    for name in flags:
        p.add_argument(f"--{name}", **specs[name])
    p.add_argument("--config", help="JSON config file; flags override its values")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anion-forge", description="Negated commonsense knowledge pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("negate", help="negate the affirmative events of a graph")
    _common(p, "kg", "cues", "seed", "format", "contractions", "sample-size")
    p.add_argument("--out", required=True)

    p = sub.add_parser("contrast", help="build the discriminator dataset from paired graphs")
    _common(p, "kg", "anion", "seed", "format")
    p.add_argument("--out", required=True)

    p = sub.add_parser("disc-train", help="train the reference discriminator")
    _common(p, "seed", "epochs", "learning-rate", "threshold")
    p.add_argument("--data", required=True, help="dataset JSONL from `contrast`")
    p.add_argument("--out", required=True)

    p = sub.add_parser("disc-apply", help="score sentences with a discriminator")
    _common(p, "threshold", "external-scorer")
    p.add_argument("--model", help="model file from `disc-train`")
    p.add_argument("--data", required=True, help="dataset JSONL or plain text, one sentence per line")
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="train the reference generator and decode candidates")
    _common(p, "kg", "anion", "beam", "format", "split", "smoothing", "external-generator")
    p.add_argument("--out", required=True)
    p.add_argument("--model-out", help="also save the trained generator here")

    p = sub.add_parser("partition", help="split candidates into valid and invalid sets")
    _common(p, "threshold", "external-scorer")
    p.add_argument("--candidates", required=True)
    p.add_argument("--model", help="model file from `disc-train`")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="precision, BLEU-2 and significance for a partitioned run")
    _common(p, "labels", "anion", "seed", "permutations", "alpha", "beam", "format")
    p.add_argument("--partitions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="also write a plain-text table here")
    p.add_argument("--force", action="store_true", help="evaluate even if config hashes differ")

    p = sub.add_parser("pipeline", help="run every stage end to end")
    _common(p, "kg", "anion", "cues", "labels", "seed", "beam", "threshold", "permutations", "alpha",
            "format", "contractions", "external-scorer", "external-generator", "split", "epochs",
            "learning-rate", "smoothing", "sample-size")
    p.add_argument("--out", help="output directory (or `out` in the config)")
    p.add_argument("--force", action="store_true")
    return parser


_CONFIG_FLAGS = (
    "kg", "anion", "cues", "labels", "seed", "beam", "threshold", "permutations", "alpha", "format",
    "contractions", "external_scorer", "external_generator", "split", "epochs", "learning_rate",
    "smoothing", "sample_size",
)


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    base = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    flags = {k: getattr(args, k, None) for k in _CONFIG_FLAGS}
    try:
        return base.override(**flags)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _run(args: argparse.Namespace) -> dict:
    cfg = resolve_config(args)
    cmd = args.command
    if cmd in ("negate", "contrast", "disc-train") and cfg.seed is None:
        raise UsageError("--seed is required")
    if cmd in ("disc-apply", "partition") and not (args.model or cfg.external_scorer):
        raise UsageError("--model or --external-scorer is required")
    if cmd == "negate":
        return pipeline.negate_stage(cfg, args.out)
    if cmd == "contrast":
        return pipeline.contrast_stage(cfg, args.out)
    if cmd == "disc-train":
        return pipeline.disc_train_stage(cfg, args.data, args.out)
    if cmd == "disc-apply":
        return pipeline.disc_apply_stage(cfg, args.model, args.data, args.out)
    if cmd == "generate":
        return pipeline.generate_stage(cfg, args.out, args.model_out)
    if cmd == "partition":
        return pipeline.partition_stage(cfg, args.candidates, args.model, args.out)
    if cmd == "eval":
        if cfg.seed is None:
            raise UsageError("--seed is required")
        report = pipeline.eval_stage(cfg, args.partitions, args.out, args.force, args.table)
        return {k: report[k] for k in ("precision", "p_value", "improvement_pct")}
    if cmd == "pipeline":
        out = args.out or cfg.out
        if out is None:
            raise UsageError("--out or `out` in the config is required")
        if cfg.seed is None:
            raise UsageError("seed is required")
        if cfg.synthetic is None and not (cfg.kg and cfg.anion and cfg.labels):
            raise UsageError("kg, anion and labels are required without a synthetic block")
        if args.config and not Path(out).is_absolute() and args.out is None:
            out = Path(args.config).parent / out
        return pipeline.run_pipeline(cfg, out, args.force)
    raise UsageError(f"unknown command {cmd!r}")


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("ANION_FORGE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        summary = _run(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"anion-forge: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AnionForgeError, OSError, ValueError, KeyError) as exc:
        print(f"anion-forge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""File-level pipeline stages: each reads its declared inputs and writes one artifact plus a sidecar."""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Iterable, Iterator

from . import discriminator as disc
from . import generator as gen
from .config import PipelineConfig, check_hashes, write_meta
from .contrast import build_discriminator_dataset, pair_all, read_dataset, write_dataset
from .errors import AnionForgeError
from .evaluation import EvalConfig, LabelSource, evaluate_run, write_labels
from .kg import Event, KnowledgeGraph, Polarity, Relation, Split, load_kg, normalize_text, write_kg
from .negation import batch_negate, load_cues

log = logging.getLogger(__name__)


def _need(value, flag: str):
    if value is None:
        raise AnionForgeError(f"{flag} is required")
    return value


def _seed(config: PipelineConfig) -> int:
    if config.seed is None:
        raise AnionForgeError("--seed is required for this step")
    return int(config.seed)


def _dump_jsonl(records: Iterable[dict], path) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
            n += 1
    return n


def _iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise AnionForgeError(f"{path}: line {lineno}: {exc.msg}") from None


def split_graph(graph: KnowledgeGraph, split: Split) -> KnowledgeGraph:
    return KnowledgeGraph([t for t in graph if t.head.split is split], graph.casefold)


# --- negate -----------------------------------------------------------------------

def negate_stage(config: PipelineConfig, out) -> dict:
    graph = load_kg(_need(config.kg, "--kg"), config.format)
    cues = load_cues(config.cues)
    batch = batch_negate(graph, cues, _seed(config), config.sample_size, config.contractions)
    records = [r.to_record() for r in batch.results]
    if config.format == "tsv":
        cols = ("head", "polarity", "source_head", "split", "cue")
        with Path(out).open("w", encoding="utf-8") as fh:
            fh.write("\t".join(cols) + "\n")
            for r in records:
                fh.write("\t".join(r[c] or "" for c in cols) + "\n")
    else:
        _dump_jsonl(records, out)
    rejections = str(out) + ".rejections.jsonl"
    _dump_jsonl(batch.rejections, rejections)
    summary = {
        "negated": len(records),
        "rejected": len(batch.rejections),
        "per_cue": dict(sorted(batch.cue_counts.items())),
        "reasons": dict(sorted(batch.reason_counts.items())),
    }
    write_meta(out, config, "negate", **summary)
    write_meta(rejections, config, "negate-rejections")
    return summary


# --- contrast -------------------------------------------------------------------

def contrast_stage(config: PipelineConfig, out) -> dict:
    a = split_graph(load_kg(_need(config.kg, "--kg"), config.format), Split.train)
    b = split_graph(load_kg(_need(config.anion, "--anion"), config.format), Split.train)
    unresolved: list = []
    pairs = pair_all(a, b, report=unresolved)
    report: dict = {}
    samples = build_discriminator_dataset(pairs, _seed(config), report)
    write_dataset(samples, out)
    summary = {"pairs": len(pairs), "unresolved_sources": len(unresolved), **report}
    write_meta(out, config, "contrast", **summary)
    return summary


# --- discriminator ----------------------------------------------------------------

def disc_train_stage(config: PipelineConfig, data, out) -> dict:
    samples = read_dataset(data)
    model = disc.train_reference(samples, config.epochs, config.learning_rate, _seed(config))
    model.threshold = config.threshold
    model.save(out)
    summary = {"samples": len(samples), "train_loss": model.summary.loss, "train_accuracy": model.summary.accuracy}
    write_meta(out, config, "disc-train", **summary)
    return summary


def disc_apply_stage(config: PipelineConfig, model_path, data, out) -> dict:
    model = disc.load_model(model_path, config.external_scorer)
    path = Path(data)
    if path.suffix == ".jsonl":
        rows = [(rec["sentence"], rec.get("label")) for _, rec in _iter_jsonl(path)]
    else:
        rows = [(ln, None) for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    probs = model.score_many([s for s, _ in rows])
    records = []
    for (s, label), p in zip(rows, probs):
        rec = {"sentence": s, "probability": p, "valid": p >= config.threshold}
        if label is not None:
            rec["label"] = int(label)
        records.append(rec)
    _dump_jsonl(records, out)
    labelled = [r for r in records if "label" in r]
    summary = {"sentences": len(records), "valid": sum(r["valid"] for r in records)}
    if labelled:
        summary["accuracy"] = sum((r["probability"] >= 0.5) == bool(r["label"]) for r in labelled) / len(labelled)
    write_meta(out, config, "disc-apply", **summary)
    return summary


# --- generation -------------------------------------------------------------------

def prompts_for(anion: KnowledgeGraph, split: Split, relations) -> list[tuple[Event, Relation]]:
    """Opposed events of ``split`` with each relation they carry (all ``relations`` if none)."""
    out = []
    for ev in anion.events.values():
        if ev.polarity is Polarity.affirmative or ev.split is not split:
            continue
        rels = [r for r in relations if anion.tails(ev, r)] or list(relations)
        out.extend((ev, r) for r in rels)
    return out


def _event_record(ev: Event) -> dict:
    return {"head": ev.text, "polarity": ev.polarity.value, "source_head": ev.source_head, "split": ev.split.value}


def generate_stage(config: PipelineConfig, out, model_out=None) -> dict:
    kg = load_kg(_need(config.kg, "--kg"), config.format)
    anion = load_kg(_need(config.anion, "--anion"), config.format)
    train = KnowledgeGraph([t for g in (kg, anion) for t in g if t.head.split is Split.train])
    relations = train.relations()
    prompts = prompts_for(anion, Split(config.split), relations)
    if config.external_generator:
        model = gen.ExternalGenerator(config.external_generator)
        beams = model.generate_many(prompts, config.beam) if prompts else []
    else:
        model = gen.train_reference(train, config.smoothing)
        if model_out is not None:
            model.save(model_out)
            write_meta(model_out, config, "generator")
        beams = [gen.beam_generate(model, ev, r, config.beam) for ev, r in prompts]
    records = ({**_event_record(ev), "relation": r.value, "candidates": [c.to_record() for c in cands]}
               for (ev, r), cands in zip(prompts, beams))
    n = _dump_jsonl(records, out)
    summary = {"prompts": n, "candidates": sum(len(b) for b in beams)}
    write_meta(out, config, "generate", **summary)
    return summary


def read_candidates(path) -> Iterator[tuple[Event, Relation, list[gen.Candidate]]]:
    for lineno, rec in _iter_jsonl(path):
        try:
            ev = Event(rec["head"], rec.get("polarity") or "affirmative", rec.get("source_head"),
                       rec.get("split") or "train")
            cands = [gen.Candidate(c["tail"], float(c["logp"]),
                                   float(c["ppl"]) if c.get("ppl") is not None else
                                   gen.perplexity_from_logp(float(c["logp"]), len(gen.tail_tokens(c["tail"]))))
                     for c in rec["candidates"]]
            yield ev, Relation.parse(rec["relation"]), cands
        except (KeyError, TypeError, ValueError) as exc:
            raise AnionForgeError(f"{path}: line {lineno}: {exc}") from None


# --- partition / labels / eval -------------------------------------------------------

def partition_stage(config: PipelineConfig, candidates, model_path, out) -> dict:
    model = disc.load_model(model_path, config.external_scorer)
    parts = []
    for ev, rel, cands in read_candidates(candidates):
        if not cands:
            continue
        parts.append(disc.partition(model, ev, rel, cands, config.threshold))
    _dump_jsonl((p.to_record() for p in parts), out)
    summary = {"prompts": len(parts), "valid": sum(len(p.valid) for p in parts),
               "invalid": sum(len(p.invalid) for p in parts)}
    write_meta(out, config, "partition", **summary)
    return summary


def read_partitions(path) -> list[disc.PartitionResult]:
    out = []
    for lineno, rec in _iter_jsonl(path):
        try:
            out.append(disc.PartitionResult.from_record(rec))
        except (KeyError, TypeError, ValueError) as exc:
            raise AnionForgeError(f"{path}: line {lineno}: {exc}") from None
    return out


def oracle_labels_stage(config: PipelineConfig, oracle: LabelSource, candidates, out) -> dict:
    rows = []
    seen = set()
    for ev, rel, cands in read_candidates(candidates):
        for c in cands:
            key = (normalize_text(ev.text), rel, normalize_text(c.tail))
            if key not in seen:
                seen.add(key)
                rows.append((ev.text, rel, c.tail, oracle(ev.text, rel, c.tail)))
    write_labels(rows, out)
    summary = {"labels": len(rows), "positive": sum(r[3] for r in rows)}
    write_meta(out, config, "labels", provenance="oracle", **summary)
    return summary


def eval_stage(config: PipelineConfig, partitions_path, out, force: bool = False, table_out=None) -> dict:
    labels_path = _need(config.labels, "--labels")
    mismatches = check_hashes(config, [partitions_path, labels_path], force)
    parts = read_partitions(partitions_path)
    labels = LabelSource.from_file(labels_path)
    references = None
    if config.anion:
        anion = load_kg(config.anion, config.format)
        references = {}
        for t in anion:
            references.setdefault((t.head.key, t.relation), []).append(t.tail)
    report = evaluate_run(parts, labels, EvalConfig(config.permutations, config.alpha, _seed(config), config.beam),
                          references)
    body = report.to_dict()
    body["config_hash"] = config.hash
    body["hash_mismatches"] = mismatches
    Path(out).write_text(json.dumps(body, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    if table_out is not None:
        Path(table_out).write_text(report.table(), encoding="utf-8")
    write_meta(out, config, "eval")
    return body


# --- end to end ---------------------------------------------------------------------

ARTIFACTS = {
    "kg": "kg.jsonl",
    "anion": "anion.jsonl",
    "negated": "negated.jsonl",
    "dataset": "dataset.jsonl",
    "discriminator": "discriminator.json",
    "generator": "generator.json",
    "candidates": "candidates.jsonl",
    "partitions": "partitions.jsonl",
    "labels": "labels.tsv",
    "report": "report.json",
    "table": "report.txt",
}


def run_pipeline(config: PipelineConfig, out_dir, force: bool = False) -> dict:
    """Run every stage in order, writing the artifacts named in ``ARTIFACTS`` under ``out_dir``.

    With a ``synthetic`` block the input graphs and an oracle label file are
    generated; otherwise ``kg``, ``anion`` and ``labels`` must be given.
    """
    from .synthetic import build_world

    _seed(config)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {k: out / v for k, v in ARTIFACTS.items()}
    world = None
    if config.synthetic is not None:
        params = dict(config.synthetic)
        params.setdefault("seed", config.seed)
        world = build_world(**params)
        fmt_paths = {}
        for key, graph in (("kg", world.affirmative), ("anion", world.negated)):
            p = paths[key].with_suffix("." + config.format)
            write_kg(graph, p, config.format)
            write_meta(p, config, "synthetic")
            fmt_paths[key] = str(p)
        config = config.override(**fmt_paths)
    stages = {}
    stages["negate"] = negate_stage(config, paths["negated"])
    stages["contrast"] = contrast_stage(config, paths["dataset"])
    stages["disc-train"] = disc_train_stage(config, paths["dataset"], paths["discriminator"])
    stages["generate"] = generate_stage(config, paths["candidates"], paths["generator"])
    stages["partition"] = partition_stage(config, paths["candidates"], paths["discriminator"], paths["partitions"])
    if world is not None:
        stages["labels"] = oracle_labels_stage(config, world.oracle(), paths["candidates"], paths["labels"])
        config = config.override(labels=str(paths["labels"]))
    report = eval_stage(config, paths["partitions"], paths["report"], force, paths["table"])
    stages["eval"] = {k: report[k] for k in ("precision", "p_value", "improvement_pct")}
    return stages

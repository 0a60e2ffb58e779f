"""Common/contrast tail sets for paired events and the swapped-negative dataset."""
from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import AnionForgeError
from .kg import (
    Event,
    KnowledgeGraph,
    KnowledgeTuple,
    Polarity,
    Relation,
    normalize_text,
    render_patterned_sentence,
)

log = logging.getLogger(__name__)

KG_POSITIVE = "kg_positive"
SWAPPED_NEGATIVE = "swapped_negative"


def common_set(a: Iterable[str], b: Iterable[str]) -> set[str]:
    """Tails present on both sides (inputs are expected to be normalized)."""
    return set(a) & set(b)


@dataclass(frozen=True)
class ContrastPair:
    """An affirmative event and its opposition under one relation.

    Tail collections are ordered tuples with set semantics (unique after
    normalization); ``common`` uses the affirmative side's surface forms.
    """

    affirmative: Event
    opposed: Event
    relation: Relation
    common: tuple[str, ...]
    contrast_a: tuple[str, ...]
    contrast_b: tuple[str, ...]

    @property
    def tails_a(self) -> tuple[str, ...]:
        return self.common + self.contrast_a

    @property
    def tails_b(self) -> tuple[str, ...]:
        return self.common + self.contrast_b


def _by_key(tails: Sequence[str], casefold: bool) -> dict[str, str]:
    out: dict[str, str] = {}
    for t in tails:
        out.setdefault(normalize_text(t, casefold), t)
    return out


def make_pair(affirmative: Event, opposed: Event, relation: Relation,
              tails_a: Sequence[str], tails_b: Sequence[str], casefold: bool = True) -> ContrastPair:
    a = _by_key(tails_a, casefold)
    b = _by_key(tails_b, casefold)
    shared = common_set(a, b)
    return ContrastPair(
        affirmative=affirmative,
        opposed=opposed,
        relation=Relation.parse(relation),
        common=tuple(s for k, s in a.items() if k in shared),
        contrast_a=tuple(s for k, s in a.items() if k not in shared),
        contrast_b=tuple(s for k, s in b.items() if k not in shared),
    )


def pair_events(graph_a: KnowledgeGraph, graph_b: KnowledgeGraph, relation: Relation,
                report: list | None = None) -> list[ContrastPair]:
    """Pair every opposed event of ``graph_b`` with its source head in ``graph_a``.

    Pairs are emitted only when both sides have tails under ``relation``.
    Opposed events whose source cannot be resolved are skipped and, when
    ``report`` is given, appended to it.
    """
    relation = Relation.parse(relation)
    pairs = []
    for ev in graph_b.events.values():
        if ev.polarity is Polarity.affirmative:
            continue
        src = graph_a.event(ev.source_head)
        if src is None:
            if report is not None:
                report.append({"head": ev.text, "source_head": ev.source_head, "reason": "unresolved_source"})
            continue
        tails_a = graph_a.tails(src, relation)
        tails_b = graph_b.tails(ev, relation)
        if not tails_a or not tails_b:
            continue
        pairs.append(make_pair(src, ev, relation, tails_a, tails_b, graph_a.casefold))
    return pairs


def pair_all(graph_a: KnowledgeGraph, graph_b: KnowledgeGraph,
             relations: Iterable[Relation] | None = None, report: list | None = None) -> list[ContrastPair]:
    relations = list(relations) if relations is not None else list(Relation)
    out, missing = [], []
    for rel in relations:
        out.extend(pair_events(graph_a, graph_b, rel, missing))
    if report is not None:
        seen = set()
        for entry in missing:
            if entry["head"] not in seen:
                seen.add(entry["head"])
                report.append(entry)
    return out


@dataclass(frozen=True)
class LabeledSample:
    sentence: str
    label: int
    origin: str
    polarity: str
    source_tuple: KnowledgeTuple | None = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if (self.label == 1) != (self.origin == KG_POSITIVE):
            raise ValueError(f"label {self.label} inconsistent with origin {self.origin!r}")

    def to_record(self) -> dict:
        return {"sentence": self.sentence, "label": self.label, "origin": self.origin, "polarity": self.polarity}


def build_discriminator_dataset(pairs: Sequence[ContrastPair], seed: int,
                                report: dict | None = None) -> list[LabeledSample]:
    """Balanced valid/invalid samples built by swapping contrast sets across pairs.

    Samples are grouped by the opposed event's polarity; within each group
    the larger of the positive and negative pools is downsampled to the size
    of the smaller one. The result is shuffled with ``seed``.
    """
    pools: dict[Polarity, tuple[dict, dict]] = {}
    skipped = 0
    for p in pairs:
        if not p.contrast_a and not p.contrast_b:
            skipped += 1
            continue
        pos, neg = pools.setdefault(p.opposed.polarity, ({}, {}))
        for head, tails in ((p.affirmative, p.common + p.contrast_a), (p.opposed, p.common + p.contrast_b)):
            for t in tails:
                kt = KnowledgeTuple(head, p.relation, t)
                pos.setdefault(kt.key(), kt)
        for head, tails in ((p.affirmative, p.contrast_b), (p.opposed, p.contrast_a)):
            for t in tails:
                kt = KnowledgeTuple(head, p.relation, t)
                neg.setdefault(kt.key(), kt)

    samples: list[LabeledSample] = []
    per_class = {}
    for polarity in Polarity:
        if polarity not in pools:
            continue
        pos, neg = (list(d.values()) for d in pools[polarity])
        n = min(len(pos), len(neg))
        rng = random.Random(f"{seed}:{polarity.value}")
        pos = _downsample(pos, n, rng)
        neg = _downsample(neg, n, rng)
        per_class[polarity.value] = n
        samples.extend(LabeledSample(render_patterned_sentence(t), 1, KG_POSITIVE, polarity.value, t) for t in pos)
        samples.extend(LabeledSample(render_patterned_sentence(t), 0, SWAPPED_NEGATIVE, polarity.value, t) for t in neg)
    random.Random(seed).shuffle(samples)
    if report is not None:
        report.update({"skipped_pairs": skipped, "per_class": per_class, "samples": len(samples)})
    if skipped:
        log.info("%d pairs had empty contrast sets on both sides", skipped)
    return samples


def _downsample(items: list, n: int, rng: random.Random) -> list:
    if len(items) <= n:
        return items
    keep = sorted(rng.sample(range(len(items)), n))
    return [items[i] for i in keep]


def write_dataset(samples: Iterable[LabeledSample], path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_record(), ensure_ascii=False) + "\n")


def read_dataset(path) -> list[LabeledSample]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(LabeledSample(rec["sentence"], int(rec["label"]), rec["origin"], rec.get("polarity", "")))
            except (ValueError, KeyError, TypeError) as exc:
                raise AnionForgeError(f"{path}: line {lineno}: {exc}") from None
    return out

"""Knowledge tuples, flat-file serialization and patterned-sentence rendering."""
from __future__ import annotations

import enum
import json
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping

from .errors import KGFormatError, UnknownRelationError, UnresolvedSourceError

log = logging.getLogger(__name__)


class Relation(str, enum.Enum):
    xIntent = "xIntent"
    xNeed = "xNeed"
    xAttr = "xAttr"
    xWant = "xWant"
    oWant = "oWant"
    xEffect = "xEffect"
    oEffect = "oEffect"
    xReact = "xReact"
    oReact = "oReact"

    @classmethod
    def parse(cls, name) -> "Relation":
        if isinstance(name, cls):
            return name
        try:
            return cls(name)
        except ValueError:
            raise UnknownRelationError(f"unknown relation {name!r}") from None

    def __str__(self):
        return self.value


class Polarity(str, enum.Enum):
    affirmative = "affirmative"
    logical = "logical"
    semi_logical = "semi_logical"
    contradiction = "contradiction"

    def __str__(self):
        return self.value


class Split(str, enum.Enum):
    train = "train"
    dev = "dev"
    test = "test"

    def __str__(self):
        return self.value


TEMPLATES = {
    Relation.xIntent: "Because PersonX wanted {t}.",
    Relation.xNeed: "Before, PersonX needed {t}.",
    Relation.xAttr: "PersonX is seen as {t}.",
    Relation.xWant: "As a result, PersonX wants {t}.",
    Relation.oWant: "As a result, others want {t}.",
    Relation.xEffect: "As a result, PersonX then {t}.",
    Relation.oEffect: "As a result, others then {t}.",
    Relation.xReact: "As a result, PersonX feels {t}.",
    Relation.oReact: "As a result, others feel {t}.",
}

_WS = re.compile(r"\s+")
_PERSON = re.compile(r"\b([XYZ])\b")


def normalize_text(s: str, casefold: bool = True) -> str:
    """Collapse whitespace runs, trim and (by default) lowercase."""
    s = _WS.sub(" ", s).strip()
    return s.lower() if casefold else s


def canonical_persons(s: str) -> str:
    """Rewrite bare ``X``/``Y``/``Z`` placeholders as ``PersonX``/``PersonY``/``PersonZ``."""
    return _PERSON.sub(r"Person\1", s)


def _require_text(value, what):
    if not isinstance(value, str) or not normalize_text(value):
        raise ValueError(f"{what} must be a non-empty string")


@dataclass(frozen=True)
class Event:
    text: str
    polarity: Polarity = Polarity.affirmative
    source_head: str | None = None
    split: Split = Split.train
    cue: str | None = None

    def __post_init__(self):
        _require_text(self.text, "event text")
        object.__setattr__(self, "polarity", Polarity(self.polarity))
        object.__setattr__(self, "split", Split(self.split))
        if self.polarity is not Polarity.affirmative:
            if not self.source_head or not normalize_text(self.source_head):
                raise ValueError(f"{self.polarity} event {self.text!r} needs a source_head")

    @property
    def key(self) -> str:
        return normalize_text(self.text)


@dataclass(frozen=True)
class KnowledgeTuple:
    head: Event
    relation: Relation
    tail: str

    def __post_init__(self):
        object.__setattr__(self, "relation", Relation.parse(self.relation))
        _require_text(self.tail, "tail")

    def key(self, casefold: bool = True) -> tuple[str, Relation, str]:
        return (
            normalize_text(self.head.text, casefold),
            self.relation,
            normalize_text(self.tail, casefold),
        )


def _strip_period(s: str) -> str:
    return s.strip().rstrip(".").rstrip()


def render_patterned_sentence(t: KnowledgeTuple) -> str:
    """Render a tuple as the relation's natural-language pattern.

    >>> ev = Event("PersonX addresses a talk")
    >>> render_patterned_sentence(KnowledgeTuple(ev, Relation.xWant, "to convince others"))
    'PersonX addresses a talk. As a result, PersonX wants to convince others.'
    """
    try:
        template = TEMPLATES[Relation.parse(t.relation)]
    except KeyError:
        raise UnknownRelationError(f"no pattern for relation {t.relation!r}") from None
    return f"{_strip_period(t.head.text)}. " + template.format(t=_strip_period(t.tail))


class KnowledgeGraph:
    """Deduplicated, indexed and read-only collection of knowledge tuples.

    Heads are identified by their normalized text. ``index`` maps
    ``(head key, relation)`` to the normalized tails observed for that pair,
    while :meth:`tails` returns surface forms in insertion order.
    """

    def __init__(self, tuples: Iterable[KnowledgeTuple] = (), casefold: bool = True):
        self.casefold = casefold
        kept: list[KnowledgeTuple] = []
        seen: set = set()
        events: dict[str, Event] = {}
        surface: dict[tuple[str, Relation], dict[str, str]] = {}
        self.duplicates = 0
        for t in tuples:
            k = t.key(casefold)
            if k in seen:
                self.duplicates += 1
                continue
            prev = events.get(k[0])
            if prev is None:
                events[k[0]] = t.head
            elif (prev.polarity, prev.split, prev.source_head) != (
                t.head.polarity,
                t.head.split,
                t.head.source_head,
            ):
                raise KGFormatError(f"conflicting metadata for head {t.head.text!r}")
            seen.add(k)
            kept.append(KnowledgeTuple(events[k[0]], t.relation, t.tail))
            surface.setdefault((k[0], k[1]), {})[k[2]] = t.tail
        self.tuples: tuple[KnowledgeTuple, ...] = tuple(kept)
        self.events: Mapping[str, Event] = MappingProxyType(events)
        self._surface = surface
        self.index: Mapping[tuple[str, Relation], frozenset[str]] = MappingProxyType(
            {k: frozenset(v) for k, v in surface.items()}
        )

    def key(self, text: str) -> str:
        return normalize_text(text, self.casefold)

    def event(self, text: str) -> Event | None:
        return self.events.get(self.key(text))

    def tails(self, head: str | Event, relation: Relation) -> list[str]:
        text = head.text if isinstance(head, Event) else head
        return list(self._surface.get((self.key(text), Relation.parse(relation)), {}).values())

    def relations(self) -> list[Relation]:
        present = {r for _, r in self.index}
        return [r for r in Relation if r in present]

    def __len__(self):
        return len(self.tuples)

    def __iter__(self) -> Iterator[KnowledgeTuple]:
        return iter(self.tuples)

    def __eq__(self, other):
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self.tuples == other.tuples

    def __repr__(self):
        return f"KnowledgeGraph({len(self.tuples)} tuples, {len(self.events)} heads)"

    def split_violations(self, sources: "KnowledgeGraph | None" = None) -> list[Event]:
        """Derived events whose split differs from their source event's split.

        Sources are looked up in ``sources`` (default: this graph); events whose
        source cannot be found are skipped.
        """
        if sources is None:
            sources = self
        bad = []
        for ev in self.events.values():
            if ev.polarity is Polarity.affirmative:
                continue
            src = sources.event(ev.source_head)
            if src is not None and src.split is not ev.split:
                bad.append(ev)
        return bad


def assign_split(derived: Event, graph: KnowledgeGraph) -> Event:
    """Copy the split of ``derived``'s source event onto ``derived``."""
    if not derived.source_head:
        raise UnresolvedSourceError(f"event {derived.text!r} has no source_head")
    src = graph.event(derived.source_head)
    if src is None:
        raise UnresolvedSourceError(f"source head {derived.source_head!r} not in graph")
    return replace(derived, split=src.split)


# --- flat files -------------------------------------------------------------

COLUMNS = ("head", "relation", "tail", "split", "polarity", "source_head", "cue")


def _escape(value: str | None) -> str:
    if value is None:
        return ""
    return value.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r")


_UNESCAPE = {"\\": "\\", "t": "\t", "n": "\n", "r": "\r"}


def _unescape(value: str) -> str | None:
    if value == "":
        return None
    out, i = [], 0
    while i < len(value):
        c = value[i]
        if c == "\\" and i + 1 < len(value) and value[i + 1] in _UNESCAPE:
            out.append(_UNESCAPE[value[i + 1]])
            i += 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


def tuple_to_record(t: KnowledgeTuple) -> dict:
    return {
        "head": t.head.text,
        "relation": t.relation.value,
        "tail": t.tail,
        "split": t.head.split.value,
        "polarity": t.head.polarity.value,
        "source_head": t.head.source_head,
        "cue": t.head.cue,
    }


def record_to_tuple(rec: Mapping, persons: bool = True) -> KnowledgeTuple:
    fix = canonical_persons if persons else (lambda s: s)
    missing = [c for c in ("head", "relation", "tail") if not rec.get(c)]
    if missing:
        raise ValueError(f"missing field(s): {', '.join(missing)}")
    relation = Relation.parse(rec["relation"])
    src = rec.get("source_head")
    head = Event(
        text=fix(rec["head"]),
        polarity=rec.get("polarity") or Polarity.affirmative,
        source_head=fix(src) if src else None,
        split=rec.get("split") or Split.train,
        cue=rec.get("cue") or None,
    )
    return KnowledgeTuple(head, relation, fix(rec["tail"]))


def iter_records(path, fmt: str = "jsonl") -> Iterator[tuple[int, dict]]:
    """Yield ``(line number, raw record)`` pairs from a KG file, streaming."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise KGFormatError(f"invalid JSON ({exc.msg})", lineno) from None
                if not isinstance(rec, dict):
                    raise KGFormatError("record is not an object", lineno)
                yield lineno, rec
        elif fmt == "tsv":
            header = fh.readline()
            if not header.strip():
                return
            names = header.rstrip("\r\n").split("\t")
            if tuple(names) != COLUMNS:
                raise KGFormatError(f"expected header {'/'.join(COLUMNS)}", 1)
            for lineno, line in enumerate(fh, 2):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                cells = line.split("\t")
                if len(cells) != len(COLUMNS):
                    raise KGFormatError(f"expected {len(COLUMNS)} columns, got {len(cells)}", lineno)
                yield lineno, dict(zip(COLUMNS, map(_unescape, cells)))
        else:
            raise ValueError(f"unknown format {fmt!r}")


def load_kg(path, fmt: str = "jsonl", casefold: bool = True, persons: bool = True) -> KnowledgeGraph:
    """Read, validate, deduplicate and index a KG file.

    Malformed rows raise :class:`KGFormatError` carrying the line number.
    Line numbers of dropped duplicate rows end up in ``graph.duplicate_lines``.
    """

    def tuples():
        for lineno, rec in iter_records(path, fmt):
            try:
                t = record_to_tuple(rec, persons)
            except UnknownRelationError as exc:
                raise UnknownRelationError(str(exc), lineno) from None
            except (ValueError, TypeError) as exc:
                raise KGFormatError(str(exc), lineno) from None
            yield lineno, t

    rows = list(tuples())
    seen, dup_lines = set(), []
    for lineno, t in rows:
        k = t.key(casefold)
        if k in seen:
            dup_lines.append(lineno)
        seen.add(k)
    try:
        graph = KnowledgeGraph((t for _, t in rows), casefold=casefold)
    except KGFormatError as exc:
        raise KGFormatError(f"{path}: {exc}") from None
    graph.duplicate_lines = dup_lines
    if graph.duplicates:
        log.info("%s: dropped %d duplicate rows", path, graph.duplicates)
    return graph


def write_kg(graph: Iterable[KnowledgeTuple], path, fmt: str = "jsonl") -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if fmt == "jsonl":
            for t in graph:
                fh.write(json.dumps(tuple_to_record(t), ensure_ascii=False) + "\n")
        elif fmt == "tsv":
            fh.write("\t".join(COLUMNS) + "\n")
            for t in graph:
                rec = tuple_to_record(t)
                fh.write("\t".join(_escape(rec[c]) for c in COLUMNS) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")

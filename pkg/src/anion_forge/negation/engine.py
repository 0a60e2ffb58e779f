"""Logical and semi-logical negation of affirmative events."""
from __future__ import annotations

import functools
import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..errors import AlreadyNegated, CompoundEventRejected, CueIncompatible, NegationError
from ..kg import Event, KnowledgeGraph, Polarity, Split, assign_split
from .lexicon import (
    CueCategory,
    CueLexiconEntry,
    VerbLexicon,
    affix_table,
    default_cues,
    negative_verb_frames,
    verb_lexicon,
)
from .tagger import ParseSketch, Tense, parse_sketch, tokenize

log = logging.getLogger(__name__)

AUXILIARIES = {
    "do", "does", "did", "is", "was", "are", "were", "am",
    "can", "could", "would", "should", "may", "might", "must", "will", "shall",
}
CONTRACTIONS = {
    "does": "doesn't", "do": "don't", "did": "didn't",
    "is": "isn't", "are": "aren't", "was": "wasn't", "were": "weren't",
    "can": "can't", "could": "couldn't", "would": "wouldn't", "should": "shouldn't",
    "must": "mustn't", "will": "won't", "shall": "shan't",
}
ALWAYS_NEGATIVE = {"not", "no", "never", "nothing", "nobody", "none", "neither", "nor", "cannot"}
# single-word cues that swap an existing word instead of being inserted
SUBSTITUTIONS = {"without": "with"}
COPULA_ONLY = {"not at all"}
PRE_VERBAL_AUX = (Tense.copula_present, Tense.copula_past, Tense.modal, Tense.future)


@dataclass(frozen=True)
class RewriteStep:
    """One edit against the original token sequence.

    ``position`` indexes the original tokens; an insertion has empty ``old``.
    """

    action: str
    position: int
    old: tuple[str, ...]
    new: tuple[str, ...]

    def to_list(self):
        return [self.action, self.position, list(self.old), list(self.new)]


@dataclass(frozen=True)
class NegationResult:
    event: Event
    applied_cue: str
    rule_trace: tuple[RewriteStep, ...]

    def to_record(self) -> dict:
        ev = self.event
        return {
            "head": ev.text,
            "polarity": ev.polarity.value,
            "source_head": ev.source_head,
            "split": ev.split.value,
            "cue": self.applied_cue,
            "trace": [s.to_list() for s in self.rule_trace],
        }


class _Edits:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.steps: list[RewriteStep] = []

    def insert(self, pos, new):
        self.steps.append(RewriteStep("insert", pos, (), tuple(new)))

    def replace(self, pos, new, length=1):
        old = tuple(self.tokens[pos : pos + length])
        if tuple(new) != old:
            self.steps.append(RewriteStep("replace", pos, old, tuple(new)))

    def apply(self) -> list[str]:
        # replacements at a position come after insertions at the same position
        order = sorted(self.steps, key=lambda s: (s.position, s.action != "insert"))
        out, i = [], 0
        for step in order:
            out.extend(self.tokens[i : step.position])
            i = max(i, step.position)
            out.extend(step.new)
            i += len(step.old)
        out.extend(self.tokens[i:])
        return out


def _match_case(template: str, word: str) -> str:
    return word[:1].upper() + word[1:] if template[:1].isupper() else word


class NegationDetector:
    """Finds negation cues already present in a token sequence."""

    def __init__(self, cues: Iterable[CueLexiconEntry], lexicon: VerbLexicon | None = None):
        lex = lexicon or verb_lexicon()
        self.words = set(ALWAYS_NEGATIVE)
        self.phrases: set[tuple[str, ...]] = set()
        for entry in cues:
            if entry.category is CueCategory.affix:
                for a in affix_table():
                    if a.affix != entry.cue:
                        continue
                    if a.pos == "verb":
                        self.words.update(a.prefix + f for f in lex.forms(a.word))
                    else:
                        self.words.add(a.negated)
            elif entry.category is CueCategory.negative_verb:
                self.words.update(lex.forms(entry.cue))
            elif len(entry.tokens) == 1:
                self.words.add(entry.cue)
            else:
                self.phrases.add(entry.tokens)

    def find(self, tokens: Sequence[str]) -> str | None:
        low = [t.lower().replace("’", "'") for t in tokens]
        for t in low:
            if t in self.words or t.endswith("n't"):
                return t
        for phrase in self.phrases:
            n = len(phrase)
            for i in range(len(low) - n + 1):
                if tuple(low[i : i + n]) == phrase:
                    return " ".join(phrase)
        return None


@functools.lru_cache(maxsize=None)
def _default_detector() -> NegationDetector:
    return NegationDetector(default_cues())


def _detector(extra: CueLexiconEntry | None) -> NegationDetector:
    if extra is None or extra in default_cues():
        return _default_detector()
    return NegationDetector((*default_cues(), extra))


def _prepare(text: str, entry: CueLexiconEntry | None, lexicon) -> ParseSketch:
    tokens, _ = tokenize(text)
    found = _detector(entry).find(tokens)
    if found is not None:
        raise AlreadyNegated(f"{text!r} already contains negation cue {found!r}")
    sketch = parse_sketch(text, lexicon)
    if sketch.has_clause_marker:
        raise CompoundEventRejected(f"{text!r} has a subordinate or coordinated clause")
    return sketch


def _source(source: str | Event) -> tuple[str, Split]:
    if isinstance(source, Event):
        return source.text, source.split
    return source, Split.train


def _finish(sketch, edits, source, polarity, cue) -> NegationResult:
    text, split = _source(source)
    out = " ".join(edits.apply()) + sketch.terminal
    event = Event(out, polarity=polarity, source_head=text, split=split, cue=cue)
    return NegationResult(event, cue, tuple(edits.steps))


def negate_logical(source: str | Event, contractions: bool = False, lexicon: VerbLexicon | None = None) -> NegationResult:
    """Insert ``not`` (with do-support where needed) right after the subject.

    >>> negate_logical("X plays the piano").event.text
    'X does not play the piano'
    """
    lex = lexicon or verb_lexicon()
    text, _ = _source(source)
    sk = _prepare(text, None, lex)
    edits = _Edits(sk.tokens)
    s_end, v = sk.subject[1], sk.main_verb

    if sk.tense in PRE_VERBAL_AUX:
        aux = sk.tokens[v]
        if contractions and aux.lower() in CONTRACTIONS:
            edits.replace(v, [_match_case(aux, CONTRACTIONS[aux.lower()])])
        else:
            edits.insert(v + 1, ["not"])
    else:
        aux = {Tense.present_3sg: "does", Tense.present_plain: "do", Tense.past: "did"}[sk.tense]
        edits.insert(s_end, [CONTRACTIONS[aux]] if contractions else [aux, "not"])
        edits.replace(v, [lex.inflect(sk.lemma, "base")])

    for i in range(v + 1, len(sk.tokens)):
        if sk.tokens[i].lower() == "some":
            edits.replace(i, [_match_case(sk.tokens[i], "any")])
    return _finish(sk, edits, source, Polarity.logical, "not")


def _negative_verb_tag(sk: ParseSketch) -> str:
    if sk.tense is Tense.present_3sg:
        return "present_3sg"
    if sk.tense is Tense.present_plain:
        return "base"
    if sk.tense in (Tense.past, Tense.copula_past):
        return "past"
    return "base" if sk.plural else "present_3sg"


def _apply_negative_verb(sk, entry, edits, lex):
    frame = negative_verb_frames().get(entry.cue)
    if frame is None:
        raise CueIncompatible(f"no complement frame known for {entry.cue!r}")
    if sk.tense in (Tense.modal, Tense.future):
        raise CueIncompatible(f"{entry.cue!r} cannot take a modal predicate")
    v = sk.main_verb
    neg = lex.inflect(entry.cue, _negative_verb_tag(sk))

    if frame.frame == "replace":
        if sk.lemma not in frame.replaces:
            raise CueIncompatible(f"{entry.cue!r} only replaces {sorted(frame.replaces)}")
        edits.replace(v, [neg])
        return

    copula = sk.lemma == "be"
    progressive = None
    if copula and v + 1 < len(sk.tokens):
        for lemma, tag in lex.analyze(sk.tokens[v + 1]):
            if tag == "gerund":
                progressive = lemma
                break
    span = 2 if progressive else 1
    lemma = progressive or sk.lemma

    if frame.frame == "gerund":
        if progressive:
            edits.replace(v, [neg])
        else:
            edits.replace(v, [neg, "being" if copula else lex.inflect(lemma, "gerund")])
    elif frame.frame == "infinitive":
        edits.replace(v, [neg, "to", lex.inflect(lemma, "base")], length=span)
    elif frame.frame == "reflexive_from":
        reflexive = "themselves" if sk.plural else "himself"
        gerund = "being" if copula and not progressive else lex.inflect(lemma, "gerund")
        edits.replace(v, [neg, reflexive, "from", gerund], length=span)
    else:
        raise CueIncompatible(f"unknown frame {frame.frame!r} for {entry.cue!r}")


def _apply_affix(sk, entry, edits, lex):
    candidates = [a for a in affix_table() if a.affix == entry.cue]
    verb_positions = {sk.main_verb}
    if sk.tense in (Tense.modal, Tense.future):
        verb_positions = {sk.main_verb + 1}
    for i in range(sk.subject[1], len(sk.tokens)):
        tok = sk.tokens[i]
        low = tok.lower()
        new = None
        for a in candidates:
            if a.pos == "verb":
                if i in verb_positions and any(l == a.word for l, _ in lex.analyze(low)):
                    new = a.prefix + low
            elif low == a.word:
                new = a.negated
            if new:
                break
        if new is None:
            continue
        edits.replace(i, [_match_case(tok, new)])
        if i > 0 and sk.tokens[i - 1].lower() in ("a", "an"):
            article = "an" if new[0] in "aeiou" else "a"
            edits.replace(i - 1, [_match_case(sk.tokens[i - 1], article)])
        return
    raise CueIncompatible(f"no word in {' '.join(sk.tokens)!r} takes the affix {entry.cue!r}")


def negate_semilogical(
    source: str | Event,
    entry: CueLexiconEntry,
    lexicon: VerbLexicon | None = None,
    contractions: bool = False,
) -> NegationResult:
    """Negate with an explicit cue other than ``not``.

    The cue ``not`` itself is routed to :func:`negate_logical`.

    >>> from anion_forge.negation.lexicon import cue
    >>> negate_semilogical("X wants to buy a car", cue("no longer")).event.text
    'X no longer wants to buy a car'
    """
    if entry.cue == "not":
        return negate_logical(source, contractions=contractions, lexicon=lexicon)
    lex = lexicon or verb_lexicon()
    text, _ = _source(source)
    sk = _prepare(text, entry, lex)
    edits = _Edits(sk.tokens)
    s_end, v = sk.subject[1], sk.main_verb
    after_aux = sk.tense in PRE_VERBAL_AUX

    if entry.category is CueCategory.single_word:
        target = SUBSTITUTIONS.get(entry.cue)
        if target is not None:
            for i in range(v + 1, len(sk.tokens)):
                if sk.tokens[i].lower() == target:
                    edits.replace(i, [_match_case(sk.tokens[i], entry.cue)])
                    break
            else:
                raise CueIncompatible(f"{entry.cue!r} needs {target!r} in the event")
        else:
            edits.insert(v + 1 if after_aux else v, entry.tokens)
    elif entry.category is CueCategory.multi_word:
        if entry.cue in COPULA_ONLY and sk.lemma != "be":
            raise CueIncompatible(f"{entry.cue!r} only attaches to copular events")
        edits.insert(v + 1 if after_aux else s_end, entry.tokens)
    elif entry.category is CueCategory.affix:
        _apply_affix(sk, entry, edits, lex)
    else:
        _apply_negative_verb(sk, entry, edits, lex)
    return _finish(sk, edits, source, Polarity.semi_logical, entry.cue)


def negate(source: str | Event, entry: CueLexiconEntry, contractions: bool = False, lexicon=None) -> NegationResult:
    if entry.cue == "not":
        return negate_logical(source, contractions=contractions, lexicon=lexicon)
    return negate_semilogical(source, entry, lexicon=lexicon)


@dataclass
class NegationBatch:
    results: list[NegationResult]
    rejections: list[dict] = field(default_factory=list)
    cue_counts: Counter = field(default_factory=Counter)
    reason_counts: Counter = field(default_factory=Counter)


def batch_negate(
    graph: KnowledgeGraph,
    cues: Sequence[CueLexiconEntry],
    seed: int,
    sample_size: int | None = None,
    contractions: bool = False,
) -> NegationBatch:
    """Apply every cue to every affirmative head of ``graph``.

    Rejections are collected, not raised. With ``sample_size`` at most that
    many results per cue are kept, drawn with a generator seeded from
    ``(seed, cue)``; kept results stay in input order.
    """
    lex = verb_lexicon()
    per_cue: dict[str, list[tuple[int, NegationResult]]] = {c.cue: [] for c in cues}
    rejections = []
    reasons: Counter = Counter()
    order = 0
    for ev in graph.events.values():
        if ev.polarity is not Polarity.affirmative:
            continue
        for entry in cues:
            try:
                res = negate(ev, entry, contractions=contractions, lexicon=lex)
            except NegationError as exc:
                reasons[exc.reason] += 1
                rejections.append({"head": ev.text, "cue": entry.cue, "reason": exc.reason, "detail": str(exc)})
                continue
            res = NegationResult(assign_split(res.event, graph), res.applied_cue, res.rule_trace)
            per_cue[entry.cue].append((order, res))
            order += 1

    kept = []
    for entry in cues:
        items = per_cue[entry.cue]
        if sample_size is not None and len(items) > sample_size:
            rng = random.Random(f"{seed}:{entry.cue}")
            items = sorted(rng.sample(items, sample_size), key=lambda x: x[0])
        kept.extend(items)
    kept.sort(key=lambda x: x[0])
    results = [r for _, r in kept]
    counts = Counter(r.applied_cue for r in results)
    log.info("negated %d events, rejected %d (%s)", len(results), len(rejections), dict(reasons))
    return NegationBatch(results, rejections, counts, reasons)

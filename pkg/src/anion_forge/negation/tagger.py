"""Closed-lexicon parse sketch for ``PersonX <verb phrase>`` events.

Event grammar is narrow enough that a full tagger is unnecessary: the subject
is one of a few placeholder shapes and the main verb is the leftmost token
after it with a finite reading in the verb table.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from ..errors import UnparsableEvent
from .lexicon import VerbLexicon, verb_lexicon

PERSONS = {"personx", "persony", "personz", "x", "y", "z"}
COPULA_PRESENT = {"is": False, "are": True, "am": False}
COPULA_PAST = {"was": False, "were": True}
MODALS = {"can", "could", "would", "should", "may", "might", "must", "will", "shall"}
FUTURE = {"will", "shall"}
DETERMINERS = {
    "a", "an", "the", "some", "any", "this", "these", "those",
    "his", "her", "their", "its", "my", "your", "our",
}
CLAUSE_MARKERS = {"that", "because", "while", "when", "who", "which", "after", "before", "and", "but"}
COORDINATORS = {"and", "but"}
HAVE_FORMS = {"has", "have", "had"}

_TERMINAL = re.compile(r"[.!?]+$")


class Tense(str, enum.Enum):
    present_3sg = "present_3sg"
    present_plain = "present_plain"
    past = "past"
    modal = "modal"
    copula_present = "copula_present"
    copula_past = "copula_past"
    future = "future"


@dataclass(frozen=True)
class ParseSketch:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    subject: tuple[int, int]  # half-open span
    main_verb: int
    tense: Tense
    lemma: str
    plural: bool
    has_clause_marker: bool
    terminal: str = ""

    @property
    def subject_tokens(self) -> tuple[str, ...]:
        return self.tokens[self.subject[0] : self.subject[1]]


def tokenize(text: str) -> tuple[list[str], str]:
    """Whitespace tokens plus the stripped terminal punctuation."""
    tokens = text.split()
    terminal = ""
    if tokens:
        m = _TERMINAL.search(tokens[-1])
        if m:
            terminal = m.group(0)
            tokens[-1] = tokens[-1][: m.start()]
            if not tokens[-1]:
                tokens.pop()
    return tokens, terminal


def _is_person(tok: str) -> bool:
    return tok.lower() in PERSONS


def _possessive_stem(tok: str) -> str | None:
    low = tok.lower().replace("’", "'")
    if low.endswith("'s"):
        return low[:-2]
    return None


def _finite_reading(tok: str, lex: VerbLexicon, allow_base: bool) -> tuple[str, str] | None:
    for lemma, tag in lex.analyze(tok):
        if tag in ("present_3sg", "past") or (allow_base and tag == "base"):
            return lemma, tag
    return None


def _is_finite(tok: str, lex: VerbLexicon) -> bool:
    low = tok.lower()
    if low in COPULA_PRESENT or low in COPULA_PAST or low in MODALS:
        return True
    return _finite_reading(low, lex, allow_base=False) is not None


def _clause_marker(tokens: list[str], start: int, lex: VerbLexicon) -> bool:
    for i in range(start, len(tokens)):
        low = tokens[i].lower()
        if low not in CLAUSE_MARKERS:
            continue
        rest = tokens[i + 1 :]
        if low in COORDINATORS:
            # "and buys milk" / "and Y asks"
            if rest and _is_finite(rest[0], lex):
                return True
            if len(rest) > 1 and _is_person(rest[0]) and _is_finite(rest[1], lex):
                return True
        elif any(_is_finite(t, lex) for t in rest):
            return True
    return False


def parse_sketch(text: str, lexicon: VerbLexicon | None = None) -> ParseSketch:
    """Locate subject, main verb and tense of a simple event.

    Raises :class:`UnparsableEvent` when no placeholder subject or no finite
    verb after it can be found, and for perfect-aspect events.
    """
    lex = lexicon or verb_lexicon()
    tokens, terminal = tokenize(text)
    if not tokens:
        raise UnparsableEvent("empty event")

    first = tokens[0]
    stem = _possessive_stem(first)
    if stem is not None and stem in PERSONS:
        # "PersonX's <noun>": the token after the possessive always belongs to the subject
        if len(tokens) < 3:
            raise UnparsableEvent(f"no verb in {text!r}")
        subj_start, search_from, number = 0, 2, None
    elif _is_person(first):
        if len(tokens) > 2 and tokens[1].lower() == "and" and _is_person(tokens[2]):
            subj_start, search_from, number = 0, 3, True
        else:
            subj_start, search_from, number = 0, 1, False
    else:
        raise UnparsableEvent(f"no subject in {text!r}")

    verb_idx = tense = lemma = None
    plural = bool(number)
    for i in range(search_from, len(tokens)):
        low = tokens[i].lower()
        if low in COPULA_PRESENT or low in COPULA_PAST:
            verb_idx, lemma = i, "be"
            tense = Tense.copula_present if low in COPULA_PRESENT else Tense.copula_past
            if number is None:
                plural = COPULA_PRESENT.get(low, COPULA_PAST.get(low, False))
            break
        if low in MODALS:
            verb_idx, lemma = i, low
            tense = Tense.future if low in FUTURE else Tense.modal
            break
        reading = _finite_reading(low, lex, allow_base=number is not False)
        if reading is None:
            continue
        lemma, tag = reading
        if tag == "present_3sg":
            tense = Tense.present_3sg
            plural = False if number is None else plural
        elif tag == "base":
            tense, plural = Tense.present_plain, True
        else:
            # plural subject with a form that is both base and past ("put"): read as present
            if number and any(t == "base" and l == lemma for l, t in lex.analyze(low)):
                tense = Tense.present_plain
            else:
                tense = Tense.past
        verb_idx = i
        break
    if verb_idx is None:
        raise UnparsableEvent(f"no verb in {text!r}")

    if tokens[verb_idx].lower() in HAVE_FORMS and verb_idx + 1 < len(tokens):
        nxt = tokens[verb_idx + 1].lower()
        readings = lex.analyze(nxt)
        if readings and all(t in ("participle", "past") for _, t in readings) and nxt not in DETERMINERS:
            raise UnparsableEvent(f"perfect aspect is not supported: {text!r}")

    subj_end = verb_idx if search_from == 2 else search_from
    if tense in (Tense.modal, Tense.future) and verb_idx + 1 >= len(tokens):
        raise UnparsableEvent(f"modal without verb in {text!r}")

    tags = []
    for i, tok in enumerate(tokens):
        if subj_start <= i < subj_end:
            tags.append("SUBJ")
        elif i == verb_idx:
            tags.append("MODAL" if tense in (Tense.modal, Tense.future) else "VERB")
        elif tense in (Tense.modal, Tense.future) and i == verb_idx + 1:
            tags.append("VERB")
        elif tok.lower() in DETERMINERS:
            tags.append("DET")
        else:
            tags.append("OTHER")

    return ParseSketch(
        tokens=tuple(tokens),
        tags=tuple(tags),
        subject=(subj_start, subj_end),
        main_verb=verb_idx,
        tense=tense,
        lemma=lemma,
        plural=plural,
        has_clause_marker=_clause_marker(tokens, verb_idx + 1, lex),
        terminal=terminal,
    )

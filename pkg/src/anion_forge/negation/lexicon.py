"""Closed lexical resources: verb forms, negation cues, affix and frame tables."""
from __future__ import annotations

import csv
import enum
import functools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable

from ..errors import AnionForgeError


class CueCategory(str, enum.Enum):
    affix = "affix"
    single_word = "single_word"
    multi_word = "multi_word"
    negative_verb = "negative_verb"


class InsertionRule(str, enum.Enum):
    after_subject = "after_subject"
    before_main_verb = "before_main_verb"
    replace_verb_with_gerund_complement = "replace_verb_with_gerund_complement"
    prefix_or_suffix_on_content_word = "prefix_or_suffix_on_content_word"


DEFAULT_RULE = {
    CueCategory.affix: InsertionRule.prefix_or_suffix_on_content_word,
    CueCategory.single_word: InsertionRule.before_main_verb,
    CueCategory.multi_word: InsertionRule.after_subject,
    CueCategory.negative_verb: InsertionRule.replace_verb_with_gerund_complement,
}


@dataclass(frozen=True)
class CueLexiconEntry:
    cue: str
    category: CueCategory
    insertion_rule: InsertionRule | None = None

    def __post_init__(self):
        if not self.cue or not self.cue.strip():
            raise ValueError("cue must be non-empty")
        category = CueCategory(self.category)
        rule = DEFAULT_RULE[category] if self.insertion_rule is None else InsertionRule(self.insertion_rule)
        if rule is not DEFAULT_RULE[category]:
            raise ValueError(f"cue {self.cue!r}: {category.value} cues use {DEFAULT_RULE[category].value}")
        object.__setattr__(self, "cue", " ".join(self.cue.lower().split()))
        object.__setattr__(self, "category", category)
        object.__setattr__(self, "insertion_rule", rule)

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self.cue.split())


def _rows(name_or_path) -> list[dict]:
    if isinstance(name_or_path, Path):
        text = name_or_path.read_text(encoding="utf-8")
    else:
        text = resources.files("anion_forge.resources").joinpath(name_or_path).read_text(encoding="utf-8")
    return list(csv.DictReader(text.splitlines(), delimiter="\t"))


def load_cues(path=None) -> list[CueLexiconEntry]:
    """Read a cue lexicon TSV (``cue``, ``category``, ``insertion_rule``).

    Without ``path`` the shipped default lexicon is used.
    """
    rows = _rows(Path(path) if path is not None else "cues.tsv")
    out = []
    for lineno, row in enumerate(rows, 2):
        try:
            out.append(CueLexiconEntry(row["cue"], row["category"], row.get("insertion_rule") or None))
        except (KeyError, TypeError, ValueError) as exc:
            raise AnionForgeError(f"cue lexicon line {lineno}: {exc}") from None
    return out


def cue(name: str, lexicon: Iterable[CueLexiconEntry] | None = None) -> CueLexiconEntry:
    """Look up a cue by surface string (``"never"``, ``"un-"``, ``"no longer"``)."""
    name = " ".join(name.lower().split())
    for entry in lexicon if lexicon is not None else default_cues():
        if entry.cue == name:
            return entry
    raise KeyError(name)


@functools.lru_cache(maxsize=None)
def default_cues() -> tuple[CueLexiconEntry, ...]:
    return tuple(load_cues())


# --- verbs ------------------------------------------------------------------

FORM_TAGS = ("base", "past", "participle", "gerund", "present_3sg")


@dataclass(frozen=True)
class VerbEntry:
    base: str
    past: tuple[str, ...]
    participle: tuple[str, ...]
    gerund: tuple[str, ...]
    present_3sg: tuple[str, ...]

    def form(self, tag: str) -> str:
        if tag == "base":
            return self.base
        return getattr(self, tag)[0]


class VerbLexicon:
    """Form-to-analysis lookup over the shipped verb table plus the dual-use map."""

    def __init__(self, entries: Iterable[VerbEntry], preferred: dict[str, tuple[str, str]] | None = None):
        self.entries = {e.base: e for e in entries}
        self.analyses: dict[str, list[tuple[str, str]]] = {}
        for e in self.entries.values():
            for tag in FORM_TAGS:
                forms = (e.base,) if tag == "base" else getattr(e, tag)
                for f in forms:
                    self.analyses.setdefault(f, []).append((e.base, tag))
        self.preferred = dict(preferred or {})

    def analyze(self, token: str) -> list[tuple[str, str]]:
        """All ``(lemma, tag)`` readings of a token, preferred reading first."""
        token = token.lower()
        found = list(self.analyses.get(token, ()))
        pref = self.preferred.get(token)
        if pref is not None:
            if pref in found:
                found.remove(pref)
            found.insert(0, pref)
        return found

    def is_verb(self, token: str) -> bool:
        return token.lower() in self.analyses

    def inflect(self, lemma: str, tag: str) -> str:
        lemma = lemma.lower()
        if lemma == "be":
            return {"base": "be", "past": "was", "participle": "been", "gerund": "being", "present_3sg": "is"}[tag]
        return self.entries[lemma].form(tag)

    def forms(self, lemma: str) -> set[str]:
        e = self.entries.get(lemma.lower())
        if e is None:
            return {lemma.lower()}
        return {e.base, *e.past, *e.participle, *e.gerund, *e.present_3sg}


@functools.lru_cache(maxsize=None)
def verb_lexicon() -> VerbLexicon:
    def split(cell):
        return tuple(cell.split("/"))

    entries = [
        VerbEntry(r["base"], split(r["past"]), split(r["participle"]), split(r["gerund"]), split(r["third_person"]))
        for r in _rows("verbs.tsv")
    ]
    preferred = {r["form"]: (r["lemma"], r["tag"]) for r in _rows("dual_use.tsv")}
    return VerbLexicon(entries, preferred)


@dataclass(frozen=True)
class AffixEntry:
    word: str
    negated: str
    affix: str
    pos: str

    @property
    def prefix(self) -> str | None:
        if self.affix.endswith("-"):
            return self.affix[:-1]
        return None


@functools.lru_cache(maxsize=None)
def affix_table() -> tuple[AffixEntry, ...]:
    out = []
    for r in _rows("affixes.tsv"):
        e = AffixEntry(r["word"], r["negated"], r["affix"], r["pos"])
        if e.pos == "verb" and (e.prefix is None or e.negated != e.prefix + e.word):
            raise AnionForgeError(f"verb affix entry {e.word!r} must be a plain prefix")
        out.append(e)
    return tuple(out)


@dataclass(frozen=True)
class VerbFrame:
    verb: str
    frame: str  # gerund | infinitive | reflexive_from | replace
    replaces: frozenset[str] = frozenset()


@functools.lru_cache(maxsize=None)
def negative_verb_frames() -> dict[str, VerbFrame]:
    out = {}
    for r in _rows("negative_verbs.tsv"):
        repl = frozenset(w for w in (r.get("replaces") or "").split(",") if w)
        out[r["verb"]] = VerbFrame(r["verb"], r["frame"], repl)
    return out

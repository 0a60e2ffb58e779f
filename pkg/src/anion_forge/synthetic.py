"""Synthetic knowledge graphs with planted contrast structure and an exact oracle.

Every affirmative event ``PersonX <verb>s the <noun>`` is paired with a
negation produced by the negation engine. Tails are short phrases drawn from
three disjoint token pools: a common pool shared by both sides, and one
contrast pool per polarity. A tail is plausible for a head iff all its tokens
come from the common pool or all come from the pool of the head's polarity.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .evaluation import LabelSource
from .kg import Event, KnowledgeGraph, KnowledgeTuple, Polarity, Relation, Split, normalize_text
from .negation import cue, negate
from .negation.lexicon import verb_lexicon

VERBS = (
    "paint", "clean", "sell", "build", "carry", "wash", "fix", "open", "visit", "draw",
    "cook", "repair", "order", "borrow", "plant", "hide", "lift", "bake", "pack", "watch",
)
_ONSETS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

COMMON, AFFIRMATIVE, NEGATED = "common", "affirmative", "negated"


def _pseudo_words(rng: random.Random, n: int, taken: set[str], syllables: int) -> list[str]:
    lex = verb_lexicon()
    out = []
    while len(out) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(syllables))
        if w in taken or lex.is_verb(w):
            continue
        taken.add(w)
        out.append(w)
    return out


@dataclass(frozen=True)
class SyntheticWorld:
    affirmative: KnowledgeGraph
    negated: KnowledgeGraph
    pools: dict
    relations: tuple[Relation, ...]

    @property
    def polarity_of(self) -> dict[str, Polarity]:
        out = {}
        for g in (self.affirmative, self.negated):
            for k, ev in g.events.items():
                out[k] = ev.polarity
        return out

    def oracle(self) -> LabelSource:
        polarity = self.polarity_of
        common = set(self.pools[COMMON])
        own = {
            True: set(self.pools[AFFIRMATIVE]),
            False: set(self.pools[NEGATED]),
        }

        def label(head: str, relation: Relation, tail: str):
            pol = polarity.get(normalize_text(head))
            if pol is None:
                return None
            toks = set(tail.split())
            if not toks:
                return 0
            return int(toks <= common or toks <= own[pol is Polarity.affirmative])

        return LabelSource.from_oracle(label)

    def test_prompts(self) -> list[tuple[Event, Relation]]:
        """Negated held-out events with every relation they carry."""
        return [(ev, r) for ev in self.negated.events.values() if ev.split is Split.test
                for r in self.relations if self.negated.tails(ev, r)]

    def train_graph(self) -> KnowledgeGraph:
        return KnowledgeGraph([t for g in (self.affirmative, self.negated) for t in g if t.head.split is Split.train])


def build_world(n_events: int = 200, seed: int = 0,
                relations: Sequence[Relation] = (Relation.xReact, Relation.xWant),
                pool_size: int = 12, tail_length: int = 2, common_tails: int = 2,
                contrast_tails: int = 4, test_fraction: float = 0.2) -> SyntheticWorld:
    """Build ``n_events`` affirmative/negated event pairs with planted tails.

    Negations alternate between logical negation and the semi-logical cue
    ``never``. A ``test_fraction`` of the pairs is held out as the test split.
    """
    rng = random.Random(seed)
    taken: set[str] = set()
    pools = {name: tuple(_pseudo_words(rng, pool_size, taken, 2)) for name in (COMMON, AFFIRMATIVE, NEGATED)}
    nouns = _pseudo_words(rng, -(-n_events // len(VERBS)), taken, 3)
    lex = verb_lexicon()
    heads = [f"PersonX {lex.inflect(v, 'present_3sg')} the {n}" for n in nouns for v in VERBS][:n_events]
    test = set(rng.sample(range(n_events), round(n_events * test_fraction)))
    never = cue("never")
    relations = tuple(Relation.parse(r) for r in relations)

    def tails(pool: str, k: int, avoid: set[str]) -> list[str]:
        out = []
        while len(out) < k:
            # leading tokens come from the first half of a pool, the final token from the second
            words = pools[pool]
            half = len(words) // 2
            t = " ".join([rng.choice(words[:half]) for _ in range(tail_length - 1)] + [rng.choice(words[half:])])
            if t not in avoid:
                avoid.add(t)
                out.append(t)
        return out

    aff, neg = [], []
    for i, text in enumerate(heads):
        split = Split.test if i in test else Split.train
        a = Event(text, split=split)
        n = negate(a, never).event if i % 2 else negate(a, cue("not")).event
        for r in relations:
            seen: set[str] = set()
            shared = tails(COMMON, common_tails, seen)
            aff += [KnowledgeTuple(a, r, t) for t in shared + tails(AFFIRMATIVE, contrast_tails, seen)]
            neg += [KnowledgeTuple(n, r, t) for t in shared + tails(NEGATED, contrast_tails, seen)]
    return SyntheticWorld(KnowledgeGraph(aff), KnowledgeGraph(neg), pools, relations)

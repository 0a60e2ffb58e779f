"""Conditional tail generation: an interpolated n-gram reference model and beam search."""
from __future__ import annotations

import abc
import hashlib
import json
import logging
import math
import shlex
import subprocess
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import AnionForgeError, ProtocolError, TrainingError
from .kg import Event, KnowledgeGraph, Relation, normalize_text

log = logging.getLogger(__name__)

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
MAX_TAIL_TOKENS = 20
DEFAULT_SMOOTHING = 0.1
DEFAULT_WEIGHTS = (0.7, 0.2, 0.1)  # bigram, unigram, head context
DEFAULT_BUCKETS = 4096


@dataclass(frozen=True)
class Candidate:
    tail: str
    logp: float
    ppl: float

    def to_record(self) -> dict:
        return {"tail": self.tail, "logp": self.logp, "ppl": self.ppl}


def tail_tokens(text: str) -> list[str]:
    return normalize_text(text).rstrip(".").split()


def perplexity_from_logp(logp: float, n_tokens: int) -> float:
    """``exp(-logp / (n_tokens + 1))``: the end marker counts as a predicted token."""
    return math.exp(-logp / (n_tokens + 1))


class GeneratorModel(abc.ABC):
    @abc.abstractmethod
    def generate(self, head: Event, relation: Relation, beam: int) -> list[Candidate]:
        ...

    @abc.abstractmethod
    def perplexity(self, head: Event, relation: Relation, tail: str) -> float:
        ...


def beam_search(
    step: Callable[[tuple[int, ...]], np.ndarray],
    eos: int,
    beam: int,
    max_len: int = MAX_TAIL_TOKENS,
    banned: Iterable[int] = (),
    min_len: int = 1,
) -> list[tuple[tuple[int, ...], float]]:
    """Length-bounded beam search over token ids.

    ``step(prefix)`` returns next-token log-probabilities. Hypotheses end
    when ``eos`` is chosen; ``eos`` is not allowed before ``min_len`` tokens
    and is the only option after ``max_len`` tokens.
    Returns up to ``beam`` finished ``(ids, logp)`` pairs (``eos`` stripped),
    best first, ties broken by token ids.
    """
    banned = set(banned)
    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []
    while live:
        expansions = []
        for prefix, score in live:
            lp = step(prefix)
            if len(prefix) >= max_len:
                expansions.append((score + float(lp[eos]), prefix + (eos,)))
                continue
            order = np.argsort(-lp, kind="stable")
            taken = 0
            for w in order:
                w = int(w)
                if w in banned or (w == eos and len(prefix) < min_len):
                    continue
                expansions.append((score + float(lp[w]), prefix + (w,)))
                taken += 1
                if taken >= beam:
                    break
        expansions.sort(key=lambda e: (-e[0], e[1]))
        live = []
        for score, seq in expansions[:beam]:
            if seq[-1] == eos:
                finished.append((seq[:-1], score))
            else:
                live.append((seq, score))
        finished.sort(key=lambda f: (-f[1], f[0]))
        if len(finished) >= beam and live and live[0][1] <= finished[beam - 1][1]:
            break
    return finished[:beam]


def dedup_candidates(cands: Iterable[Candidate], beam: int) -> list[Candidate]:
    """Sort by log-probability, drop normalized duplicates (keeping the better one), cap at ``beam``."""
    best: dict[str, Candidate] = {}
    for c in cands:
        k = normalize_text(c.tail)
        if k not in best or c.logp > best[k].logp:
            best[k] = c
    return sorted(best.values(), key=lambda c: (-c.logp, normalize_text(c.tail)))[:beam]


class ReferenceNGramModel(GeneratorModel):
    """Per-relation interpolation of three add-lambda smoothed distributions.

    For tail token ``w`` after ``prev`` given head ``h`` and relation ``r``::

        P(w) = a * P_bigram(w | prev, r) + b * P_unigram(w | r) + c * P_ctx(w | h, r)

    where ``P_ctx`` averages, over the hashed tokens of ``h`` seen in training,
    the distribution of tail tokens co-occurring with that head token. Only the
    bigram component counts end markers; the other two see content tokens.
    Every component sums to one over the vocabulary (which includes ``</s>``
    and ``<unk>``), hence so does the mixture.
    """

    def __init__(self, vocab: Sequence[str] = (), smoothing: float = DEFAULT_SMOOTHING,
                 weights: Sequence[float] = DEFAULT_WEIGHTS, buckets: int = DEFAULT_BUCKETS,
                 hash_seed: int = 0):
        if smoothing < 0:
            raise ValueError("smoothing must be >= 0")
        if len(weights) != 3 or any(w < 0 for w in weights) or not math.isclose(sum(weights), 1.0):
            raise ValueError("interpolation weights must be three non-negative numbers summing to 1")
        words = sorted(set(vocab) - {BOS, EOS, UNK})
        self.vocab = words + [EOS, UNK]
        self.ids = {w: i for i, w in enumerate(self.vocab)}
        self.eos, self.unk = self.ids[EOS], self.ids[UNK]
        self.smoothing = float(smoothing)
        self.weights = tuple(float(w) for w in weights)
        self.buckets = int(buckets)
        self.hash_seed = int(hash_seed)
        self.unigram: dict[Relation, Counter] = defaultdict(Counter)
        self.bigram: dict[Relation, dict[int, Counter]] = defaultdict(lambda: defaultdict(Counter))
        self.context: dict[Relation, dict[int, Counter]] = defaultdict(lambda: defaultdict(Counter))
        self._cache: dict = {}

    # -- training --------------------------------------------------------------

    def bucket(self, token: str) -> int:
        key = self.hash_seed.to_bytes(8, "little", signed=True)
        d = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
        return int.from_bytes(d, "little") % self.buckets

    def head_buckets(self, head: str) -> list[int]:
        return sorted({self.bucket(t) for t in normalize_text(head).split()})

    def encode(self, tail: str) -> list[int]:
        return [self.ids.get(t, self.unk) for t in tail_tokens(tail)]

    def observe(self, head: str, relation: Relation, tail: str) -> None:
        r = Relation.parse(relation)
        ids = self.encode(tail) + [self.eos]
        prev = -1  # BOS
        hb = self.head_buckets(head)
        for w in ids:
            self.bigram[r][prev][w] += 1
            if w != self.eos:
                # where a tail ends is positional, so only the bigram component learns it
                self.unigram[r][w] += 1
                for b in hb:
                    self.context[r][b][w] += 1
            prev = w
        self._cache.clear()

    # -- distributions ---------------------------------------------------------

    def _smoothed(self, counts: Counter) -> np.ndarray:
        v = np.full(len(self.vocab), self.smoothing)
        for w, c in counts.items():
            v[w] += c
        total = v.sum()
        if total == 0:
            return np.full(len(self.vocab), 1.0 / len(self.vocab))
        return v / total

    def _component(self, kind, r, key, counts) -> np.ndarray:
        ck = (kind, r, key)
        d = self._cache.get(ck)
        if d is None:
            d = self._cache[ck] = self._smoothed(counts)
        return d

    def context_distribution(self, head: str, relation: Relation) -> np.ndarray:
        r = Relation.parse(relation)
        table = self.context.get(r, {})
        seen = [b for b in self.head_buckets(head) if b in table]
        if not seen:
            return np.full(len(self.vocab), 1.0 / len(self.vocab))
        return np.mean([self._component("ctx", r, b, table[b]) for b in seen], axis=0)

    def next_distribution(self, relation: Relation, prev: int, ctx: np.ndarray) -> np.ndarray:
        """Mixture distribution over the vocabulary after token id ``prev`` (-1 for start)."""
        r = Relation.parse(relation)
        a, b, c = self.weights
        bi = self._component("bi", r, prev, self.bigram.get(r, {}).get(prev, Counter()))
        uni = self._component("uni", r, None, self.unigram.get(r, Counter()))
        return a * bi + b * uni + c * ctx

    def token_logprobs(self, head: str | Event, relation: Relation, tail: str) -> list[float]:
        text = head.text if isinstance(head, Event) else head
        ctx = self.context_distribution(text, relation)
        out, prev = [], -1
        for w in self.encode(tail) + [self.eos]:
            out.append(math.log(self.next_distribution(relation, prev, ctx)[w]))
            prev = w
        return out

    # -- GeneratorModel ----------------------------------------------------------

    def perplexity(self, head, relation, tail) -> float:
        lps = self.token_logprobs(head, relation, tail)
        return math.exp(-sum(lps) / len(lps))

    def negative_log_likelihood(self, graph: KnowledgeGraph) -> float:
        """Sum of ``-log P(t | h, r)`` over the tuples of ``graph``."""
        return -sum(sum(self.token_logprobs(t.head, t.relation, t.tail)) for t in graph)

    def generate(self, head, relation, beam: int) -> list[Candidate]:
        text = head.text if isinstance(head, Event) else head
        r = Relation.parse(relation)
        ctx = self.context_distribution(text, r)

        def step(prefix):
            prev = prefix[-1] if prefix else -1
            with np.errstate(divide="ignore"):
                return np.log(self.next_distribution(r, prev, ctx))

        found = beam_search(step, self.eos, beam, banned=(self.unk,))
        cands = [
            Candidate(" ".join(self.vocab[i] for i in ids), lp, perplexity_from_logp(lp, len(ids)))
            for ids, lp in found
        ]
        return dedup_candidates(cands, beam)

    # -- persistence -------------------------------------------------------------

    def to_dict(self) -> dict:
        def table(t):
            return {r.value: {str(k): sorted(v.items()) for k, v in sorted(d.items())} for r, d in sorted(t.items())}

        return {
            "format": "anion-forge/ngram-generator",
            "version": 1,
            "vocab": self.vocab[:-2],
            "smoothing": self.smoothing,
            "weights": list(self.weights),
            "buckets": self.buckets,
            "hash_seed": self.hash_seed,
            "unigram": {r.value: sorted(c.items()) for r, c in sorted(self.unigram.items())},
            "bigram": table(self.bigram),
            "context": table(self.context),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceNGramModel":
        if d.get("format") != "anion-forge/ngram-generator":
            raise AnionForgeError("not a generator model file")
        m = cls(d["vocab"], d["smoothing"], d["weights"], d["buckets"], d["hash_seed"])
        for r, items in d["unigram"].items():
            m.unigram[Relation.parse(r)] = Counter({int(k): v for k, v in items})
        for name in ("bigram", "context"):
            target = getattr(m, name)
            for r, rows in d[name].items():
                for key, items in rows.items():
                    target[Relation.parse(r)][int(key)] = Counter({int(k): v for k, v in items})
        return m

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ReferenceNGramModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_reference(graph: KnowledgeGraph | Iterable, smoothing: float = DEFAULT_SMOOTHING,
                    weights: Sequence[float] = DEFAULT_WEIGHTS, buckets: int = DEFAULT_BUCKETS,
                    hash_seed: int = 0) -> ReferenceNGramModel:
    """Maximum-likelihood counts (plus add-``smoothing``) from every tuple of ``graph``."""
    tuples = list(graph)
    if not tuples:
        raise TrainingError("cannot train a generator on an empty graph")
    vocab = {tok for t in tuples for tok in tail_tokens(t.tail)}
    model = ReferenceNGramModel(sorted(vocab), smoothing, weights, buckets, hash_seed)
    for t in tuples:
        model.observe(t.head.text, t.relation, t.tail)
    log.info("trained generator on %d tuples, vocabulary %d", len(tuples), len(model.vocab))
    return model


def beam_generate(model: GeneratorModel, head: Event, relation: Relation, beam: int) -> list[Candidate]:
    """Up to ``beam`` unique candidates, best log-probability first."""
    if beam < 1:
        raise ValueError("beam must be >= 1")
    return dedup_candidates(model.generate(head, Relation.parse(relation), beam), beam)


class ExternalGenerator(GeneratorModel):
    """Generator backed by a subprocess speaking JSON lines.

    Input, one line per prompt: ``{"head": str, "relation": str, "beam": int}``.
    Output, one line per prompt: ``{"candidates": [{"tail": str, "logp": float, "ppl": float?}]}``.
    A missing ``ppl`` is derived from ``logp`` and the tail length.
    """

    def __init__(self, command: str | Sequence[str], timeout: float | None = None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout

    def _run(self, payload: list[dict]) -> list[dict]:
        data = "".join(json.dumps(p) + "\n" for p in payload)
        try:
            proc = subprocess.run(self.argv, input=data, capture_output=True, text=True,
                                  timeout=self.timeout, check=True)
        except (OSError, subprocess.SubprocessError) as exc:
            raise ProtocolError(f"external generator failed: {exc}") from None
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != len(payload):
            raise ProtocolError(f"external generator returned {len(lines)} lines for {len(payload)} prompts")
        try:
            return [json.loads(ln) for ln in lines]
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"external generator wrote invalid JSON: {exc}") from None

    def generate_many(self, prompts: Sequence[tuple[Event, Relation]], beam: int) -> list[list[Candidate]]:
        replies = self._run([{"head": h.text, "relation": Relation.parse(r).value, "beam": beam} for h, r in prompts])
        out = []
        for rep in replies:
            cands = []
            for c in rep.get("candidates", []):
                try:
                    lp = float(c["logp"])
                    ppl = c.get("ppl")
                    ppl = float(ppl) if ppl is not None else perplexity_from_logp(lp, len(tail_tokens(c["tail"])))
                    cands.append(Candidate(c["tail"], lp, ppl))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ProtocolError(f"bad candidate {c!r}: {exc}") from None
            out.append(dedup_candidates(cands, beam))
        return out

    def generate(self, head, relation, beam):
        return self.generate_many([(head, relation)], beam)[0]

    def perplexity(self, head, relation, tail):
        raise NotImplementedError("external generators report perplexity with their candidates")

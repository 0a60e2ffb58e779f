"""Plausibility discriminators over patterned sentences and beam partitioning.

The reference model is logistic regression over hashed sparse features,
trained by seeded SGD on binary cross-entropy. Any object exposing
``score_many(sentences) -> list[float]`` can stand in for it, including an
external process speaking the line protocol (:class:`ExternalScorer`).
"""
from __future__ import annotations

import abc
import hashlib
import json
import logging
import re
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import AnionForgeError, ProtocolError, TrainingError
from .kg import Event, KnowledgeTuple, Relation, render_patterned_sentence

log = logging.getLogger(__name__)

DEFAULT_DIMENSION = 2**18
DEFAULT_HASH_SEED = 1729
DEFAULT_THRESHOLD = 0.7
MODEL_FORMAT = "anion-forge/linear-discriminator"
MODEL_VERSION = 1

_TOKEN = re.compile(r"[a-z0-9']+|[^\sa-z0-9']")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class FeatureHasher:
    """Sparse hashed n-gram features of a patterned sentence.

    Unigrams and bigrams over the whole sentence, plus (with ``cross``)
    conjunctions of event tokens with the tokens after the first sentence
    break. The values of a feature vector are L2-normalized.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = DEFAULT_HASH_SEED, cross: bool = True):
        self.dimension = int(dimension)
        self.seed = int(seed)
        self.cross = cross
        self._key = self.seed.to_bytes(8, "little", signed=True)

    def _hash(self, feature: str) -> int:
        digest = hashlib.blake2b(feature.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little") % self.dimension

    def names(self, sentence: str) -> list[str]:
        text = sentence.lower()
        toks = _TOKEN.findall(text)
        feats = [f"u:{t}" for t in toks]
        feats += [f"b:{a} {b}" for a, b in zip(toks, toks[1:])]
        if self.cross:
            head, sep, rest = text.partition(". ")
            if sep:
                h = sorted(set(_TOKEN.findall(head)))
                r = sorted(set(_TOKEN.findall(rest)) - {"."})
                feats += [f"x:{a}|{b}" for a in h for b in r]
        return feats

    def transform(self, sentence: str) -> tuple[np.ndarray, np.ndarray]:
        idx = np.fromiter((self._hash(f) for f in self.names(sentence)), dtype=np.int64)
        if idx.size == 0:
            return idx, np.zeros(0)
        uniq, counts = np.unique(idx, return_counts=True)
        val = counts.astype(float)
        return uniq, val / np.linalg.norm(val)


# --- loss ---------------------------------------------------------------------

def bce_loss(weights: np.ndarray, bias: float, x: tuple[np.ndarray, np.ndarray], y: int) -> float:
    """Negative binary cross-entropy -[y log p + (1-y) log(1-p)] for one sample."""
    idx, val = x
    z = float(weights[idx] @ val + bias)
    # log p = -softplus(-z), log(1-p) = -softplus(z)
    return y * np.logaddexp(0.0, -z) + (1 - y) * np.logaddexp(0.0, z)


def bce_gradient(weights: np.ndarray, bias: float, x: tuple[np.ndarray, np.ndarray], y: int):
    """Gradient of :func:`bce_loss`: ``(p - y) * x`` on the active coordinates, and ``p - y`` for the bias."""
    idx, val = x
    p = float(sigmoid(weights[idx] @ val + bias))
    return (p - y) * val, p - y


# --- models -------------------------------------------------------------------

class DiscriminatorModel(abc.ABC):
    metadata: dict

    @abc.abstractmethod
    def score_many(self, sentences: Sequence[str]) -> list[float]:
        ...

    def score(self, sentence: str) -> float:
        return self.score_many([sentence])[0]


@dataclass
class ReferenceLinearModel(DiscriminatorModel):
    weights: np.ndarray
    bias: float = 0.0
    hash_seed: int = DEFAULT_HASH_SEED
    cross_features: bool = True
    threshold: float = DEFAULT_THRESHOLD
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.hasher = FeatureHasher(self.weights.shape[0], self.hash_seed, self.cross_features)

    @property
    def dimension(self) -> int:
        return self.weights.shape[0]

    def decision(self, x) -> float:
        idx, val = x
        return float(self.weights[idx] @ val + self.bias)

    def score_many(self, sentences: Sequence[str]) -> list[float]:
        z = [self.decision(self.hasher.transform(s)) for s in sentences]
        return [float(p) for p in sigmoid(np.array(z, dtype=float))]

    def to_dict(self) -> dict:
        nz = np.flatnonzero(self.weights)
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "dimension": self.dimension,
            "seed": self.hash_seed,
            "cross_features": self.cross_features,
            "bias": self.bias,
            "threshold": self.threshold,
            "weights": [[int(i), float(self.weights[i])] for i in nz],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReferenceLinearModel":
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise AnionForgeError(f"unsupported model file format {d.get('format')!r} v{d.get('version')}")
        w = np.zeros(int(d["dimension"]))
        for i, v in d["weights"]:
            w[int(i)] = v
        return cls(w, float(d["bias"]), int(d["seed"]), bool(d.get("cross_features", True)),
                   float(d.get("threshold", DEFAULT_THRESHOLD)), dict(d.get("metadata", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ReferenceLinearModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise AnionForgeError(f"{path}: malformed model file ({exc})") from None


@dataclass
class TrainingSummary:
    loss: float
    accuracy: float
    epochs: int
    samples: int


def train_reference(
    samples: Sequence,
    epochs: int = 5,
    learning_rate: float = 0.5,
    seed: int = 0,
    dimension: int = DEFAULT_DIMENSION,
    hash_seed: int = DEFAULT_HASH_SEED,
    cross_features: bool = True,
) -> ReferenceLinearModel:
    """Fit the reference model by plain SGD on binary cross-entropy.

    ``samples`` are :class:`~anion_forge.contrast.LabeledSample` objects (or
    anything with ``sentence`` and ``label``). The visiting order of each
    epoch is a permutation drawn from ``seed``. The final mean loss and
    training accuracy are stored on ``model.summary``.
    """
    if not samples:
        raise TrainingError("no training samples")
    labels = np.array([int(s.label) for s in samples])
    if len(set(labels.tolist())) < 2:
        raise TrainingError("training data must contain both labels")
    hasher = FeatureHasher(dimension, hash_seed, cross_features)
    feats = [hasher.transform(s.sentence) for s in samples]
    w = np.zeros(dimension)
    b = 0.0
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        for i in rng.permutation(len(feats)):
            gw, gb = bce_gradient(w, b, feats[i], labels[i])
            w[feats[i][0]] -= learning_rate * gw
            b -= learning_rate * gb
    z = np.array([float(w[idx] @ val + b) for idx, val in feats])
    loss = float(np.mean(labels * np.logaddexp(0, -z) + (1 - labels) * np.logaddexp(0, z)))
    acc = float(np.mean((z >= 0).astype(int) == labels))
    model = ReferenceLinearModel(w, b, hash_seed, cross_features, metadata={
        "samples": len(samples),
        "positives": int(labels.sum()),
        "epochs": epochs,
        "learning_rate": learning_rate,
        "seed": seed,
        "train_loss": loss,
        "train_accuracy": acc,
    })
    model.summary = TrainingSummary(loss, acc, epochs, len(samples))
    log.info("trained discriminator on %d samples: loss %.4f acc %.4f", len(samples), loss, acc)
    return model


class ExternalScorer(DiscriminatorModel):
    """Discriminator backed by a subprocess.

    The command reads newline-delimited sentences on stdin and must write
    exactly one decimal probability per line to stdout.
    """

    def __init__(self, command: str | Sequence[str], timeout: float | None = None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.metadata = {"external_scorer": " ".join(self.argv)}

    def score_many(self, sentences: Sequence[str]) -> list[float]:
        if not sentences:
            return []
        payload = "".join(s.replace("\n", " ").replace("\r", " ") + "\n" for s in sentences)
        try:
            proc = subprocess.run(self.argv, input=payload, capture_output=True, text=True,
                                  timeout=self.timeout, check=True)
        except (OSError, subprocess.SubprocessError) as exc:
            raise ProtocolError(f"external scorer failed: {exc}") from None
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != len(sentences):
            raise ProtocolError(f"external scorer returned {len(lines)} lines for {len(sentences)} sentences")
        out = []
        for ln in lines:
            try:
                p = float(ln)
            except ValueError:
                raise ProtocolError(f"external scorer wrote non-numeric line {ln!r}") from None
            if not 0.0 <= p <= 1.0:
                raise ProtocolError(f"external scorer probability {p} outside [0, 1]")
            out.append(p)
        return out


# --- partition ----------------------------------------------------------------

@dataclass(frozen=True)
class ScoredCandidate:
    tail: str
    logp: float
    ppl: float | None
    probability: float

    def to_record(self, valid: bool) -> dict:
        return {"tail": self.tail, "logp": self.logp, "ppl": self.ppl,
                "probability": self.probability, "valid": valid}


@dataclass(frozen=True)
class PartitionResult:
    event: Event
    relation: Relation
    all: tuple[ScoredCandidate, ...]
    valid: tuple[ScoredCandidate, ...]
    invalid: tuple[ScoredCandidate, ...]
    threshold: float

    def to_record(self) -> dict:
        valid_ids = {id(c) for c in self.valid}
        return {
            "head": self.event.text,
            "polarity": self.event.polarity.value,
            "source_head": self.event.source_head,
            "split": self.event.split.value,
            "relation": self.relation.value,
            "threshold": self.threshold,
            "candidates": [c.to_record(id(c) in valid_ids) for c in self.all],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PartitionResult":
        event = Event(rec["head"], rec.get("polarity") or "affirmative", rec.get("source_head"),
                      rec.get("split") or "train")
        cands = [(ScoredCandidate(c["tail"], float(c["logp"]), c.get("ppl"), float(c["probability"])),
                  bool(c["valid"])) for c in rec["candidates"]]
        return cls(
            event=event,
            relation=Relation.parse(rec["relation"]),
            all=tuple(c for c, _ in cands),
            valid=tuple(c for c, v in cands if v),
            invalid=tuple(c for c, v in cands if not v),
            threshold=float(rec["threshold"]),
        )


def _unpack(c) -> tuple[str, float, float | None]:
    if hasattr(c, "tail"):
        return c.tail, float(c.logp), getattr(c, "ppl", None)
    tail, score, *rest = c
    return tail, float(score), (rest[0] if rest else None)


def partition(model: DiscriminatorModel, event: Event, relation: Relation,
              candidates: Iterable, threshold: float = DEFAULT_THRESHOLD) -> PartitionResult:
    """Score each candidate's patterned sentence and split at ``threshold``.

    A candidate is valid iff its probability is ``>= threshold``. Beam order
    is kept inside both subsets.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    relation = Relation.parse(relation)
    cands = [_unpack(c) for c in candidates]
    sentences = [render_patterned_sentence(KnowledgeTuple(event, relation, t)) for t, _, _ in cands]
    probs = model.score_many(sentences)
    scored = tuple(ScoredCandidate(t, lp, ppl, float(p)) for (t, lp, ppl), p in zip(cands, probs))
    valid = tuple(c for c in scored if c.probability >= threshold)
    invalid = tuple(c for c in scored if c.probability < threshold)
    return PartitionResult(event, relation, scored, valid, invalid, threshold)


def load_model(path=None, external: str | None = None) -> DiscriminatorModel:
    if external:
        return ExternalScorer(external)
    if path is None:
        raise AnionForgeError("either a model file or an external scorer is required")
    return ReferenceLinearModel.load(path)

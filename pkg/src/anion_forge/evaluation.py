"""Precision metrics, BLEU-2, paired permutation tests and run-level reports."""
from __future__ import annotations

import csv
import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .discriminator import PartitionResult
from .errors import AnionForgeError, MissingLabelError
from .kg import Relation, normalize_text

BLEU_EPSILON = 1e-9
DEFAULT_PERMUTATIONS = 10_000
DEFAULT_ALPHA = 0.05
_CHUNK = 4096


# --- labels ---------------------------------------------------------------------

LabelKey = tuple[str, Relation, str]


def label_key(head: str, relation, tail: str) -> LabelKey:
    return normalize_text(head), Relation.parse(relation), normalize_text(tail).rstrip(".").rstrip()


class LabelSource:
    """Plausibility labels for ``(head, relation, tail)``, from a file or an oracle.

    Lookups never fall back to a default: an unknown key raises
    :class:`MissingLabelError`.
    """

    def __init__(self, labels: Mapping[LabelKey, int] | None = None,
                 oracle: Callable[[str, Relation, str], int | None] | None = None):
        if (labels is None) == (oracle is None):
            raise ValueError("give exactly one of labels or oracle")
        self.provenance = "file" if labels is not None else "oracle"
        self._labels = dict(labels) if labels is not None else None
        self._oracle = oracle

    def __call__(self, head: str, relation, tail: str) -> int:
        key = label_key(head, relation, tail)
        if self._labels is not None:
            value = self._labels.get(key)
        else:
            value = self._oracle(*key)
        if value is None:
            raise MissingLabelError(key)
        return int(value)

    @classmethod
    def from_file(cls, path) -> "LabelSource":
        labels = {}
        with Path(path).open(encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
                if not row or (lineno == 1 and row[:4] == ["head", "relation", "tail", "label"]):
                    continue
                if len(row) != 4 or row[3] not in ("0", "1"):
                    raise AnionForgeError(f"{path}: line {lineno}: expected head, relation, tail, label in {{0,1}}")
                labels[label_key(row[0], row[1], row[2])] = int(row[3])
        return cls(labels=labels)

    @classmethod
    def from_oracle(cls, oracle: Callable[[str, Relation, str], int | None]) -> "LabelSource":
        return cls(oracle=oracle)


def write_labels(rows: Iterable[tuple[str, Relation, str, int]], path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["head", "relation", "tail", "label"])
        for head, rel, tail, lab in rows:
            w.writerow([head, Relation.parse(rel).value, tail, int(lab)])


# --- precision --------------------------------------------------------------------

def p_at_k(labels: Sequence[int], k: int) -> float:
    """Percentage of positive labels among the first ``k`` options."""
    if not 1 <= k <= len(labels):
        raise ValueError(f"k={k} outside 1..{len(labels)}")
    return 100.0 * sum(int(x) for x in labels[:k]) / k


def precision(labels: Sequence[int]) -> float | None:
    return p_at_k(labels, len(labels)) if labels else None


def _labels_for(part: PartitionResult, cands, labels: LabelSource) -> list[int]:
    return [labels(part.event.text, part.relation, c.tail) for c in cands]


def _rank_key(c) -> float:
    return c.ppl if c.ppl is not None else -c.logp


def p_at_num_valid(part: PartitionResult, labels: LabelSource) -> tuple[float, float] | None:
    """``(pruned_all, valid)`` precisions, or ``None`` when the valid set is empty.

    ``pruned_all`` keeps the ``|valid|`` lowest-perplexity members of the full
    beam; equal perplexities keep beam order.
    """
    n = len(part.valid)
    if n == 0:
        return None
    ranked = sorted(part.all, key=_rank_key)  # stable: ties keep beam order
    return precision(_labels_for(part, ranked[:n], labels)), precision(_labels_for(part, part.valid, labels))


# --- BLEU-2 --------------------------------------------------------------------------

def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu2(hypothesis: str, references: Sequence[str]) -> float:
    """Sentence BLEU over 1- and 2-grams with epsilon smoothing.

    Zero clipped match counts are replaced by ``1e-9``. An order for which
    the hypothesis has no n-grams at all (a one-token hypothesis has no
    bigrams) is left out of the geometric mean. The brevity penalty uses the
    reference length closest to the hypothesis length, preferring the shorter
    one on ties.
    """
    hyp = normalize_text(hypothesis).split()
    if not hyp:
        raise ValueError("empty hypothesis")
    refs = [normalize_text(r).split() for r in references]
    refs = [r for r in refs if r]
    if not refs:
        return 0.0
    logs = []
    for n in (1, 2):
        h = _ngrams(hyp, n)
        total = sum(h.values())
        if total == 0:
            continue
        best: Counter = Counter()
        for r in refs:
            best |= _ngrams(r, n)
        matches = sum(min(c, best[g]) for g, c in h.items())
        logs.append(math.log((matches or BLEU_EPSILON) / total))
    c = len(hyp)
    r = min((len(x) for x in refs), key=lambda L: (abs(L - c), L))
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(sum(logs) / len(logs))


def corpus_bleu2(pairs: Iterable[tuple[str, Sequence[str]]]) -> float | None:
    """Mean sentence BLEU-2 over ``(hypothesis, references)`` pairs."""
    scores = [bleu2(h, refs) for h, refs in pairs]
    return float(np.mean(scores)) if scores else None


# --- significance -----------------------------------------------------------------------

def _count_at_least(stats: np.ndarray, observed: float) -> int:
    tol = 1e-12 * max(1.0, abs(observed))
    return int(np.count_nonzero(stats >= observed - tol))


def permutation_test(a: Sequence[float], b: Sequence[float], permutations: int = DEFAULT_PERMUTATIONS,
                     seed: int = 0) -> float:
    """One-sided paired sign-flip test of ``mean(a - b) > 0``.

    With ``P`` random sign vectors the p-value is ``(1 + #{stat >= observed}) / (P + 1)``.
    When ``2**n <= P`` every sign vector is enumerated instead and the exact
    p-value ``#{stat >= observed} / 2**n`` is returned. Random sign vectors are
    drawn in fixed-size chunks, each from its own seed derived from
    ``(seed, chunk index)``, so the result does not depend on how the work is split.
    """
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if d.ndim != 1 or len(a) != len(b) or d.size == 0:
        raise ValueError("a and b must be non-empty sequences of equal length")
    if permutations < 1:
        raise ValueError("permutations must be >= 1")
    n = d.size
    observed = float(d.mean())
    if n < 63 and 2**n <= permutations:
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
        return _count_at_least(signs @ d / n, observed) / 2**n
    hits = 0
    for chunk, start in enumerate(range(0, permutations, _CHUNK)):
        m = min(_CHUNK, permutations - start)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chunk,)))
        signs = rng.integers(0, 2, size=(m, n)) * 2.0 - 1.0
        hits += _count_at_least(signs @ d / n, observed)
    return (1 + hits) / (permutations + 1)


def bonferroni(p_values: Sequence[float], alpha: float = DEFAULT_ALPHA) -> list[bool]:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not p_values:
        return []
    cut = alpha / len(p_values)
    return [p < cut for p in p_values]


def stars(p: float | None) -> str:
    if p is None:
        return ""
    return "**" if p < 0.01 else "*" if p < 0.05 else ""


# --- run report ----------------------------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    permutations: int = DEFAULT_PERMUTATIONS
    alpha: float = DEFAULT_ALPHA
    seed: int = 0
    beam: int | None = None


def _mean(xs) -> float | None:
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


@dataclass
class MetricReport:
    prompts: int
    precision: dict
    counts: dict
    bleu2: float | None
    bleu2_valid: float | None
    improvement_pct: float | None
    improvement_pct_num_valid: float | None
    p_value: float | None
    p_values: dict
    significance: dict
    per_prompt: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "prompts": self.prompts,
            "precision": self.precision,
            "counts": self.counts,
            "bleu2": self.bleu2,
            "bleu2_valid": self.bleu2_valid,
            "improvement_pct": self.improvement_pct,
            "improvement_pct_num_valid": self.improvement_pct_num_valid,
            "p_value": self.p_value,
            "p_values": self.p_values,
            "significance": self.significance,
            "per_prompt": self.per_prompt,
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def table(self) -> str:
        """Plain-text summary with one row per set: size, BLEU-2, precision."""
        def fmt(x, spec=".2f"):
            return "-" if x is None else format(x, spec)

        c, p = self.counts, self.precision
        rows = [
            ("all", c["all"], fmt(self.bleu2, ".4f"), fmt(p["all"]), ""),
            ("all@#valid", c["valid"], "-", fmt(p["pruned_all"]), ""),
            ("valid", c["valid"], fmt(self.bleu2_valid, ".4f"), fmt(p["valid"]),
             self.significance["valid_vs_pruned_all"]["stars"]),
            ("invalid", c["invalid"], "-", fmt(p["invalid"]), ""),
        ]
        lines = [f"{'set':<12}{'#':>8}{'BL2':>10}{'P@k':>10}  sig"]
        lines += [f"{n:<12}{k:>8}{b:>10}{v:>10}  {s}" for n, k, b, v, s in rows]
        lines.append(f"iprv% (valid vs all): {fmt(self.improvement_pct)}   "
                     f"iprv% (valid vs all@#valid): {fmt(self.improvement_pct_num_valid)}   "
                     f"p = {fmt(self.p_value, '.4g')}")
        return "\n".join(lines) + "\n"


def _improvement(new, base):
    if new is None or base is None or base == 0:
        return None
    return 100.0 * (new - base) / base


def evaluate_run(partitions: Sequence[PartitionResult], labels: LabelSource,
                 config: EvalConfig | None = None,
                 references: Mapping[tuple[str, Relation], Sequence[str]] | None = None) -> MetricReport:
    """Aggregate precision, yield counts, BLEU-2 and significance over a run.

    ``references`` maps ``(normalized head, relation)`` to gold tails for
    BLEU-2; prompts without references are left out of BLEU.
    """
    if not partitions:
        raise AnionForgeError("no partitions to evaluate")
    config = config or EvalConfig()
    per_prompt = []
    p_all, p_valid, p_invalid, pruned = [], [], [], []
    pairs_num_valid, pairs_all = ([], []), ([], [])
    bleu_all, bleu_valid = [], []
    totals = Counter()
    conservation = beam_violations = 0
    for part in partitions:
        la = _labels_for(part, part.all, labels)
        lv = _labels_for(part, part.valid, labels)
        li = _labels_for(part, part.invalid, labels)
        if len(lv) + len(li) != len(la) or sum(lv) + sum(li) != sum(la):
            conservation += 1
        if config.beam is not None and len(la) != config.beam:
            beam_violations += 1
        pa, pv, pi = precision(la), precision(lv), precision(li)
        nv = p_at_num_valid(part, labels)
        p_all.append(pa)
        p_valid.append(pv)
        p_invalid.append(pi)
        if nv is not None:
            pruned.append(nv[0])
            pairs_num_valid[0].append(nv[1])
            pairs_num_valid[1].append(nv[0])
            pairs_all[0].append(nv[1])
            pairs_all[1].append(pa)
        totals.update(all=len(la), valid=len(lv), invalid=len(li),
                      correct_all=sum(la), correct_valid=sum(lv), correct_invalid=sum(li),
                      empty_valid=int(not lv), empty_invalid=int(not li), empty_all=int(not la))
        refs = references.get((normalize_text(part.event.text), part.relation)) if references else None
        if refs:
            bleu_all += [bleu2(c.tail, refs) for c in part.all]
            bleu_valid += [bleu2(c.tail, refs) for c in part.valid]
        per_prompt.append({
            "head": part.event.text, "relation": part.relation.value,
            "n_all": len(la), "n_valid": len(lv), "n_invalid": len(li),
            "correct_all": sum(la), "correct_valid": sum(lv), "correct_invalid": sum(li),
            "p_all": pa, "p_valid": pv, "p_invalid": pi,
            "p_pruned_all": nv[0] if nv else None,
        })

    tests = {}
    for name, (a, b), seed_offset in (("valid_vs_pruned_all", pairs_num_valid, 0),
                                      ("valid_vs_all", pairs_all, 1)):
        tests[name] = permutation_test(a, b, config.permutations, config.seed + seed_offset) if a else None
    names = [k for k, v in tests.items() if v is not None]
    flags = dict(zip(names, bonferroni([tests[k] for k in names], config.alpha)))
    significance = {k: {"p": tests[k], "stars": stars(tests[k]), "bonferroni": flags.get(k, False)} for k in tests}

    prec = {
        "all": _mean(p_all),
        "valid": _mean(p_valid),
        "invalid": _mean(p_invalid),
        "pruned_all": _mean(pruned),
    }
    counts = dict(sorted(totals.items()))
    counts.update(prompts_num_valid=len(pruned), conservation_violations=conservation,
                  beam_size_violations=beam_violations)
    return MetricReport(
        prompts=len(partitions),
        precision=prec,
        counts=counts,
        bleu2=_mean(bleu_all),
        bleu2_valid=_mean(bleu_valid),
        improvement_pct=_improvement(prec["valid"], prec["all"]),
        improvement_pct_num_valid=_improvement(prec["valid"], prec["pruned_all"]),
        p_value=tests["valid_vs_pruned_all"],
        p_values=tests,
        significance=significance,
        per_prompt=per_prompt,
        config={"permutations": config.permutations, "alpha": config.alpha,
                "seed": config.seed, "beam": config.beam, "labels": labels.provenance},
    )

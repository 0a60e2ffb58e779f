"""Rule-based construction of logical and semi-logical negation events."""
from .engine import (
    NegationBatch,
    NegationDetector,
    NegationResult,
    RewriteStep,
    batch_negate,
    negate,
    negate_logical,
    negate_semilogical,
)
from .lexicon import CueCategory, CueLexiconEntry, InsertionRule, cue, default_cues, load_cues, verb_lexicon
from .tagger import ParseSketch, Tense, parse_sketch

__all__ = [
    "CueCategory",
    "CueLexiconEntry",
    "InsertionRule",
    "NegationBatch",
    "NegationDetector",
    "NegationResult",
    "ParseSketch",
    "RewriteStep",
    "Tense",
    "batch_negate",
    "cue",
    "default_cues",
    "load_cues",
    "negate",
    "negate_logical",
    "negate_semilogical",
    "parse_sketch",
    "verb_lexicon",
]

import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anion_forge.errors import ProtocolError, TrainingError
from anion_forge.generator import (
    MAX_TAIL_TOKENS,
    ExternalGenerator,
    ReferenceNGramModel,
    beam_generate,
    train_reference,
)
from anion_forge.kg import Event, KnowledgeGraph, KnowledgeTuple, Relation
from anion_forge.synthetic import build_world

R = Relation.xWant


def kg(*pairs, relation=R):
    return KnowledgeGraph([KnowledgeTuple(Event(h), relation, t) for h, t in pairs])


def test_memorizes_single_tuple():
    m = train_reference(kg(("PersonX sleeps", "to rest well")), smoothing=0.0)
    assert beam_generate(m, Event("PersonX sleeps"), R, 5)[0].tail == "to rest well"


def test_uniform_model_perplexity_is_vocabulary_size():
    m = ReferenceNGramModel(["a", "b", "c"], smoothing=1.0)
    for tail in ("a", "b c a", "c c c c", "zzz"):
        assert math.isclose(m.perplexity(Event("X runs"), R, tail), len(m.vocab))


def test_training_is_deterministic():
    g = kg(("X eats", "to sleep"), ("X runs", "to rest now"), ("X sings", "to sleep now"))
    assert train_reference(g).to_dict() == train_reference(g).to_dict()


def test_empty_graph_is_an_error():
    with pytest.raises(TrainingError):
        train_reference(KnowledgeGraph())


def test_distributions_sum_to_one():
    w = build_world(n_events=40, seed=3)
    m = train_reference(w.train_graph())
    heads = [ev for ev in list(w.negated.events.values())[:5]] + [Event("PersonX does something new")]
    for rel in list(Relation):
        for head in heads:
            ctx = m.context_distribution(head.text, rel)
            assert abs(ctx.sum() - 1.0) < 1e-9
            for prev in [-1] + list(range(len(m.vocab))):
                d = m.next_distribution(rel, prev, ctx)
                assert abs(d.sum() - 1.0) < 1e-9 and (d >= 0).all()


def test_beam_bound_order_and_uniqueness():
    w = build_world(n_events=60, seed=1)
    m = train_reference(w.train_graph())
    for ev, rel in w.test_prompts()[:10]:
        cands = beam_generate(m, ev, rel, 10)
        assert len(cands) == 10
        assert len({c.tail for c in cands}) == 10
        lps = [c.logp for c in cands]
        assert lps == sorted(lps, reverse=True)
        for c in cands:
            assert math.isclose(c.ppl, m.perplexity(ev, rel, c.tail), rel_tol=1e-9)
            assert c.ppl >= 1.0


def greedy(m, head, rel):
    ctx = m.context_distribution(head.text, rel)
    prev, ids, lp = -1, [], 0.0
    while True:
        d = m.next_distribution(rel, prev, ctx).copy()
        d[m.unk] = -1.0
        if not ids:
            d[m.eos] = -1.0
        if len(ids) == MAX_TAIL_TOKENS:
            w = m.eos
        else:
            w = int(np.argmax(d))
        lp += math.log(m.next_distribution(rel, prev, ctx)[w])
        if w == m.eos:
            return " ".join(m.vocab[i] for i in ids), lp
        ids.append(w)
        prev = w


def test_beam_one_is_greedy():
    w = build_world(n_events=60, seed=2)
    m = train_reference(w.train_graph())
    for ev, rel in w.test_prompts()[:10]:
        (c,) = beam_generate(m, ev, rel, 1)
        tail, lp = greedy(m, ev, rel)
        assert c.tail == tail and math.isclose(c.logp, lp)


def enumerate_all(m, head, rel, max_len=MAX_TAIL_TOKENS):
    """Every end-terminated non-empty sequence with non-zero probability, by depth-first search."""
    ctx = m.context_distribution(head.text, rel)
    out = []

    def walk(prev, ids, lp):
        d = m.next_distribution(rel, prev, ctx)
        for w in range(len(m.vocab)):
            if d[w] <= 0 or w == m.unk:
                continue
            if w == m.eos:
                if ids:
                    out.append((" ".join(m.vocab[i] for i in ids), lp + math.log(d[w])))
            elif len(ids) < max_len:
                walk(w, ids + [w], lp + math.log(d[w]))

    walk(-1, [], 0.0)
    return sorted(out, key=lambda x: -x[1])


def test_beam_three_matches_exhaustive_enumeration():
    corpus = [("X eats", "to rest"), ("X runs", "to rest"), ("X sings", "to rest"),
              ("X reads", "to learn"), ("X writes", "to learn"), ("X walks", "home")]
    m = train_reference(kg(*corpus), smoothing=0.0, weights=(1.0, 0.0, 0.0))
    head = Event("X swims")
    oracle = enumerate_all(m, head, R)
    top = [lp for _, lp in oracle[:4]]
    assert len(set(np.round(top, 12))) == len(top) >= 3  # distinct probabilities
    got = beam_generate(m, head, R, 3)
    assert [c.tail for c in got] == [t for t, _ in oracle[:3]]
    for c, (_, lp) in zip(got, oracle):
        assert math.isclose(c.logp, lp, rel_tol=1e-12)


def test_max_tail_length():
    long_tail = " ".join(f"w{i}" for i in range(30))
    m = train_reference(kg(("X talks", long_tail)), smoothing=0.0)
    (c,) = beam_generate(m, Event("X talks"), R, 1)
    assert len(c.tail.split()) == MAX_TAIL_TOKENS


_world = build_world(n_events=60, seed=5)
_model = train_reference(_world.train_graph())
_prompts = _world.test_prompts()


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(_prompts), st.integers(1, 8), st.integers(1, 10))
def test_beam_is_anytime(prompt, b1, extra):
    ev, rel = prompt
    top = beam_generate(_model, ev, rel, b1)[0].tail
    assert top in [c.tail for c in beam_generate(_model, ev, rel, b1 + extra)]


@settings(max_examples=50, deadline=None)
@given(st.sampled_from(_prompts), st.lists(st.sampled_from(list(_model.vocab[:-2]) + ["unseen"]), min_size=1, max_size=5))
def test_perplexity_at_least_one(prompt, toks):
    assert _model.perplexity(prompt[0], prompt[1], " ".join(toks)) >= 1.0


def test_training_counts_minimize_nll():
    g = kg(("X eats", "to rest"), ("X runs", "to rest now"), ("X sings", "to learn"))
    mle = train_reference(g, smoothing=0.0, weights=(1.0, 0.0, 0.0))
    for lam in (0.01, 0.1, 1.0):
        other = train_reference(g, smoothing=lam, weights=(1.0, 0.0, 0.0))
        assert mle.negative_log_likelihood(g) < other.negative_log_likelihood(g)


def test_save_load_roundtrip(tmp_path):
    m = _model
    m.save(tmp_path / "g.json")
    back = ReferenceNGramModel.load(tmp_path / "g.json")
    ev, rel = _prompts[0]
    assert beam_generate(back, ev, rel, 5) == beam_generate(m, ev, rel, 5)


def test_external_generator_protocol():
    script = (
        "import json, sys\n"
        "for line in sys.stdin:\n"
        "    q = json.loads(line)\n"
        "    c = [{'tail': 'to rest', 'logp': -1.0}, {'tail': 'To  rest', 'logp': -0.5},\n"
        "         {'tail': 'home', 'logp': -2.0, 'ppl': 3.0}]\n"
        "    print(json.dumps({'candidates': c[: q['beam']]}))\n"
    )
    g = ExternalGenerator([sys.executable, "-c", script])
    cands = g.generate(Event("X eats"), R, 3)
    assert [c.tail for c in cands] == ["To  rest", "home"]
    assert math.isclose(cands[0].ppl, math.exp(0.5 / 3))
    bad = ExternalGenerator([sys.executable, "-c", "print('{}')\nprint('{}')"])
    with pytest.raises(ProtocolError):
        bad.generate(Event("X eats"), R, 3)

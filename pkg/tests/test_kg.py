import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anion_forge.errors import KGFormatError, UnknownRelationError, UnresolvedSourceError
from anion_forge.kg import (
    Event,
    KnowledgeGraph,
    KnowledgeTuple,
    Polarity,
    Relation,
    Split,
    assign_split,
    load_kg,
    normalize_text,
    render_patterned_sentence,
    write_kg,
)


def test_relation_enum_is_closed():
    assert len(Relation) == 9
    assert {r.value for r in Relation} == {
        "xIntent", "xNeed", "xAttr", "xWant", "oWant", "xEffect", "oEffect", "xReact", "oReact",
    }
    with pytest.raises(UnknownRelationError):
        Relation.parse("xFoo")


@pytest.mark.parametrize("raw, expected", [
    ("  X   eats ", "x eats"),
    ("x eats", "x eats"),
    ("PersonX Buys A Car", "personx buys a car"),
])
def test_normalize_text(raw, expected):
    assert normalize_text(raw) == expected


@given(st.text())
def test_normalize_is_idempotent(s):
    assert normalize_text(normalize_text(s)) == normalize_text(s)


def test_event_invariants():
    with pytest.raises(ValueError):
        Event("   ")
    with pytest.raises(ValueError):
        Event("X does not eat", polarity=Polarity.logical)
    ev = Event("X does not eat", polarity="logical", source_head="X eats")
    assert ev.polarity is Polarity.logical
    with pytest.raises(ValueError):
        KnowledgeTuple(ev, Relation.xWant, " \t")


@pytest.mark.parametrize("head, rel, tail, expected", [
    ("PersonX addresses a talk", Relation.xWant, "to convince others",
     "PersonX addresses a talk. As a result, PersonX wants to convince others."),
    ("PersonX has a nightmare", Relation.xNeed, "to sleep",
     "PersonX has a nightmare. Before, PersonX needed to sleep."),
    ("X wears a mask", Relation.xAttr, "responsible",
     "X wears a mask. PersonX is seen as responsible."),
    ("PersonX eats.", Relation.xReact, "full.", "PersonX eats. As a result, PersonX feels full."),
])
def test_render_patterned_sentence(head, rel, tail, expected):
    assert render_patterned_sentence(KnowledgeTuple(Event(head), rel, tail)) == expected


_word = st.text(alphabet="abcdefgh", min_size=1, max_size=5)
_phrase = st.lists(_word, min_size=1, max_size=4).map(" ".join)


@given(st.sampled_from(list(Relation)), st.lists(st.tuples(_phrase, _phrase), min_size=2, max_size=8, unique=True))
def test_render_injective_per_relation(rel, pairs):
    seen = {}
    for h, t in pairs:
        s = render_patterned_sentence(KnowledgeTuple(Event("PersonX " + h), rel, t))
        key = (normalize_text(h), normalize_text(t))
        assert seen.setdefault(s, key) == key


def _graph():
    a = Event("PersonX plays the piano", split=Split.test)
    n = Event("PersonX does not play the piano", Polarity.logical, "PersonX plays the piano", Split.test, "not")
    return KnowledgeGraph([
        KnowledgeTuple(a, Relation.xReact, "happy"),
        KnowledgeTuple(a, Relation.xReact, "Happy "),
        KnowledgeTuple(a, Relation.xWant, "to practice"),
        KnowledgeTuple(n, Relation.xReact, "bored"),
    ])


def test_graph_dedup_and_index():
    g = _graph()
    assert len(g) == 3 and g.duplicates == 1
    assert g.index[("personx plays the piano", Relation.xReact)] == frozenset({"happy"})
    grouped = {}
    for t in g:
        k = t.key()
        grouped.setdefault((k[0], k[1]), set()).add(k[2])
    assert {k: set(v) for k, v in g.index.items()} == grouped
    assert g.tails("PERSONX plays the piano", "xReact") == ["happy"]
    assert g.relations() == [Relation.xWant, Relation.xReact]


def test_conflicting_head_metadata_is_rejected():
    with pytest.raises(KGFormatError):
        KnowledgeGraph([
            KnowledgeTuple(Event("X eats", split=Split.train), Relation.xReact, "full"),
            KnowledgeTuple(Event("X eats", split=Split.test), Relation.xWant, "sleep"),
        ])


@pytest.mark.parametrize("fmt", ["jsonl", "tsv"])
def test_roundtrip(tmp_path, fmt):
    g = _graph()
    p = tmp_path / f"g.{fmt}"
    write_kg(g, p, fmt)
    assert load_kg(p, fmt) == g


_field = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1, max_size=12).filter(
    lambda s: normalize_text(s) != "")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(_field, st.sampled_from(list(Relation)), _field, st.sampled_from(list(Split))),
                min_size=0, max_size=6))
def test_roundtrip_property(tmp_path_factory, rows):
    tuples, splits = [], {}
    for h, r, t, s in rows:
        s = splits.setdefault(normalize_text(h), s)
        tuples.append(KnowledgeTuple(Event(h, split=s), r, t))
    g = KnowledgeGraph(tuples)
    d = tmp_path_factory.mktemp("rt")
    for fmt in ("jsonl", "tsv"):
        write_kg(g, d / fmt, fmt)
        assert load_kg(d / fmt, fmt, persons=False) == g


def test_load_dedup_empty_and_line_numbers(tmp_path):
    row = {"head": "X eats", "relation": "xReact", "tail": "full"}
    p = tmp_path / "dup.jsonl"
    p.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
    g = load_kg(p)
    assert len(g) == 1 and g.duplicate_lines == [2]
    assert g.tuples[0].head.text == "PersonX eats"

    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert len(load_kg(empty)) == 0

    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps(row) + "\n" + json.dumps({**row, "relation": "xFoo"}) + "\n")
    with pytest.raises(UnknownRelationError) as ei:
        load_kg(bad)
    assert ei.value.line == 2

    broken = tmp_path / "broken.jsonl"
    broken.write_text(json.dumps(row) + "\n{nope\n")
    with pytest.raises(KGFormatError) as ei:
        load_kg(broken)
    assert ei.value.line == 2


def test_tsv_requires_header(tmp_path):
    p = tmp_path / "g.tsv"
    p.write_text("X eats\txReact\tfull\ttrain\taffirmative\t\t\n")
    with pytest.raises(KGFormatError):
        load_kg(p, "tsv")


def test_assign_split_copies_source_split():
    g = _graph()
    train = KnowledgeGraph([KnowledgeTuple(Event("X runs"), Relation.xReact, "tired")])
    derived = Event("X never runs", Polarity.semi_logical, "X runs", Split.test, "never")
    assert assign_split(derived, train).split is Split.train
    d2 = Event("PersonX never plays the piano", Polarity.semi_logical, "PersonX plays the piano", Split.train)
    assert assign_split(d2, g).split is Split.test
    with pytest.raises(UnresolvedSourceError):
        assign_split(Event("X never sings", Polarity.semi_logical, "X sings"), g)


def test_split_violations_full_scan():
    g = _graph()
    assert g.split_violations() == []
    bad = KnowledgeGraph(list(g) + [
        KnowledgeTuple(Event("PersonX never plays the piano", Polarity.semi_logical,
                             "PersonX plays the piano", Split.train), Relation.xReact, "sad"),
    ])
    assert [e.text for e in bad.split_violations()] == ["PersonX never plays the piano"]

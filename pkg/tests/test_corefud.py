from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpipe_kit.corefud import (ConlluError, Document, EntityCluster, Node, Sentence,
                                 corpus_id_from_path, derive_head, extract_entities, make_mention,
                                 parse_conllu, parse_entity_value, serialize_conllu, set_entities,
                                 split_documents, strip_empty_nodes, validate)

FIXTURES = Path(__file__).parent / "fixtures"


def row(ident, form="x", head="0", deprel="root", deps="_", misc="_"):
    return "\t".join([ident, form, form, "_", "_", "_", head, deprel, deps, misc])


def sentence_text(*rows):
    return "\n".join(rows) + "\n\n"


@pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.conllu")), ids=lambda p: p.name)
def test_fixture_round_trip(path):
    text = path.read_text(encoding="utf-8")
    assert serialize_conllu(parse_conllu(text)) == text


def test_empty_input():
    doc = parse_conllu("")
    assert doc.sentences == ()
    assert serialize_conllu(doc) == ""


def test_czech_prodrop_sentence():
    doc = parse_conllu((FIXTURES / "cs_prodrop-corefud-dev.conllu").read_text(encoding="utf-8"))
    sent = doc.sentences[0]
    assert [w.form for w in sent.words] == ["Řekl", ",", "že", "nepřijde", "."]
    assert [e.id for e in sent.empties] == ["1.1", "4.1"]
    assert [c.entity_id for c in extract_entities(doc)] == ["e1"]
    assert all(m.nodes[0][2] == 1 for m in doc.mentions)


def test_empty_node_anchor():
    doc = parse_conllu((FIXTURES / "en_empties-corefud-dev.conllu").read_text(encoding="utf-8"))
    sent = doc.sentences[0]
    assert [(e.id, e.word) for e in sent.empties] == [("2.1", 2), ("3.1", 3)]
    assert [n.id for n in sent.nodes] == ["1", "2", "2.1", "3", "3.1", "4"]


def test_sentence_initial_empty_node():
    text = sentence_text(row("0.1", head="_", deprel="_", deps="1:nsubj"), row("1"))
    doc = parse_conllu(text)
    assert doc.sentences[0].empties[0].word == 0
    assert serialize_conllu(doc) == text


def test_nested_brackets():
    text = sentence_text(row("1", misc="Entity=(e1(e2)"), row("2", head="1", deprel="dep"),
                         row("3", head="1", deprel="dep", misc="Entity=e1)"))
    clusters = {c.entity_id: c.mentions for c in extract_entities(parse_conllu(text))}
    assert [(m.start, m.end) for m in clusters["e1"]] == [(0, 2)]
    assert [(m.start, m.end) for m in clusters["e2"]] == [(0, 0)]


def test_two_entities_same_span():
    text = sentence_text(row("1", misc="Entity=(e1(e2"), row("2", head="1", deprel="dep",
                                                            misc="Entity=e2)e1)"))
    doc = parse_conllu(text)
    spans = [(m.entity_id, m.nodes) for m in doc.mentions]
    assert {e for e, _ in spans} == {"e1", "e2"}
    assert spans[0][1] == spans[1][1]
    rebuilt = set_entities(doc, extract_entities(doc))
    assert sorted((m.entity_id, m.nodes) for m in rebuilt.mentions) == sorted(spans)


def test_set_entities_writes_brackets():
    doc = parse_conllu(sentence_text(row("1"), row("2", head="1", deprel="dep"), row("3", head="1", deprel="dep")))
    m = make_mention(doc.sentences, 0, 0, 1, "e1")
    out = set_entities(doc, [EntityCluster("e1", (m,))])
    words = out.sentences[0].words
    assert words[0].misc == "Entity=(e1"
    assert words[1].misc == "Entity=e1)"
    assert words[2].misc == "_"
    assert [(x.start, x.end) for x in parse_conllu(serialize_conllu(out)).mentions] == [(0, 1)]


def test_unknown_misc_preserved():
    text = sentence_text(row("1", misc="Foo=bar|Entity=(e1)|SpaceAfter=No"))
    doc = parse_conllu(text)
    assert serialize_conllu(doc) == text
    assert doc.sentences[0].words[0].misc_get("Foo") == "bar"


@pytest.mark.parametrize("text, line", [
    (sentence_text(row("1"), row("3")), 2),
    (sentence_text(row("1"), row("2.1", head="_", deprel="_")), 2),
    (sentence_text(row("1"), row("1.2", head="_", deprel="_")), 2),
    (sentence_text(row("1", misc="Entity=e1)")), 1),
    (sentence_text(row("1", misc="Entity=(e1"), row("2", head="1", deprel="dep")), 1),
    ("1\tx\n\n", 1),
    (sentence_text(row("1", head="7")), 1),
])
def test_parse_errors_name_line(text, line):
    with pytest.raises(ConlluError) as err:
        parse_conllu(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_crlf_rejected():
    with pytest.raises(ConlluError):
        parse_conllu(row("1") + "\r\n\r\n")


def test_discontinuous_mention_covering_range():
    text = sentence_text(row("1", misc="Entity=(e1[1/2])"), row("2", head="1", deprel="dep"),
                         row("3", head="1", deprel="dep", misc="Entity=(e1[2/2])"))
    doc = parse_conllu(text)
    (m,) = doc.mentions
    assert (m.start, m.end, m.discontinuous) == (0, 2, True)
    assert len(validate(doc)) == 1


def test_incomplete_discontinuous_mention():
    with pytest.raises(ConlluError):
        parse_conllu(sentence_text(row("1", misc="Entity=(e1[1/2])")))


def test_parse_entity_value():
    assert parse_entity_value("(e1-person(e2)e3)") == [
        ("open", "e1", "", "-person"), ("single", "e2", "", ""), ("close", "e3", "", "")]
    with pytest.raises(ValueError):
        parse_entity_value("e1")


def _sent(heads):
    words = tuple(Node(i, 0, f"w{i}", head=str(h)) for i, h in enumerate(heads, start=1))
    return Sentence(words, (), ())


@pytest.mark.parametrize("heads, span, expected", [
    ([0, 3, 1], (0, 0), 1),
    ([0, 3, 1], (1, 2), 3),
    ([0, 0], (0, 1), 1),
    ([2, 1], (0, 1), 1),
])
def test_derive_head(heads, span, expected):
    sent = _sent(heads)
    mention = make_mention((sent,), 0, *span, "e")
    assert mention.head == (0, expected, 0)
    assert derive_head(mention, sent) in mention.nodes


def test_split_documents_and_corpus_id():
    doc = parse_conllu((FIXTURES / "cs_toy-corefud-train.conllu").read_text(encoding="utf-8"))
    parts = split_documents(doc)
    assert len(parts) == 5
    assert parts[1].doc_id == "cs_toy-d2"
    assert corpus_id_from_path("data/cs_pdt-corefud-train.conllu") == "cs_pdt"


def test_strip_empty_nodes_drops_empty_mentions():
    doc = parse_conllu((FIXTURES / "en_empties-corefud-dev.conllu").read_text(encoding="utf-8"))
    stripped = strip_empty_nodes(doc)
    assert stripped.sentences[0].empties == ()
    assert [(m.entity_id, m.start) for m in stripped.mentions] == [("e1", 0), ("e2", 2)]


# ---------------------------------------------------------------------------
# structural round-trip on generated documents


@st.composite
def documents(draw):
    sentences = []
    for s in range(draw(st.integers(1, 3))):
        n = draw(st.integers(1, 5))
        words = tuple(Node(i, 0, draw(st.sampled_from(["a", "bé", "c'd", "ě"])),
                           head=str(draw(st.integers(0, n))), deprel="dep")
                      for i in range(1, n + 1))
        empties = []
        for after in range(n + 1):
            for k in range(1, draw(st.integers(0, 2)) + 1):
                empties.append(Node(after, k, deps=f"{draw(st.integers(0, n))}:dep"))
        comments = (f"# sent_id = s{s}",)
        sentences.append(Sentence(words, tuple(empties), comments))
    sentences = tuple(sentences)
    base = Document(sentences)
    clusters = {}
    for _ in range(draw(st.integers(0, 5))):
        s = draw(st.integers(0, len(sentences) - 1))
        size = len(sentences[s].nodes)
        start = draw(st.integers(0, size - 1))
        end = draw(st.integers(start, size - 1))
        eid = draw(st.sampled_from(["e1", "e2", "e3"]))
        clusters.setdefault(eid, []).append(make_mention(sentences, s, start, end, eid))
    return set_entities(base, [EntityCluster(e, tuple(ms)) for e, ms in clusters.items()])


@settings(max_examples=150, deadline=None)
@given(documents())
def test_structural_round_trip(doc):
    text = serialize_conllu(doc)
    again = parse_conllu(text)
    assert again.sentences == doc.sentences
    assert serialize_conllu(again) == text
    opens = text.count("(")
    closes = text.count(")")
    assert opens == closes
    key = lambda m: (m.entity_id, m.nodes)
    assert sorted(map(key, again.mentions)) == sorted(map(key, doc.mentions))

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from corpipe_kit.corefud import (Document, EntityCluster, Node, Sentence, extract_entities, make_mention,
                                 set_entities)
from corpipe_kit.scorer import (MatchMode, aligned_clusters, align_mentions, b_cubed, ceaf_e,
                                conll_score, muc, report_rows, score_documents)

METRICS = {"muc": (muc, oracles.muc), "b3": (b_cubed, oracles.b_cubed), "ceafe": (ceaf_e, oracles.ceaf_e)}


@pytest.mark.parametrize("name", sorted(METRICS))
def test_matches_brute_force_oracle(name):
    ours, oracle = METRICS[name]
    rng = random.Random(7)
    for _ in range(600):
        key, response = oracles.random_document(rng)
        got = ours(key, response)
        want = [float(v) for v in oracle(key, response)]
        assert max(abs(a - b) for a, b in zip(got, want)) <= 1e-9, (key, response, got, want)


def test_muc_hand_case():
    p, r, f = muc([["a", "b", "c"], ["d"]], [["a", "b"], ["c", "d"]])
    assert (p, r, f) == (0.5, 0.5, 0.5)
    assert muc([["a"], ["b"]], [["a"], ["b"]]) == (0.0, 0.0, 0.0)


def test_b_cubed_hand_case():
    p, r, f = b_cubed([["a", "b"], ["c"]], [["a", "b", "c"]])
    assert (Fraction(p).limit_denominator(100), r) == (Fraction(5, 9), 1.0)
    assert f == float(Fraction(5, 7))
    assert b_cubed([["a", "b"]], []) == (0.0, 0.0, 0.0)


def test_ceaf_e_hand_case():
    p, r, f = ceaf_e([["a", "b"], ["c"]], [["a", "b", "c"]])
    assert (p, r) == (0.8, 0.4)
    assert f == float(Fraction(8, 15))


def test_identical_and_empty():
    clusters = [["a", "b"], ["c", "d", "e"]]
    for fn in (muc, b_cubed, ceaf_e):
        assert fn(clusters, clusters) == (1.0, 1.0, 1.0)
        assert fn([], []) == (1.0, 1.0, 1.0)


def test_conll_average():
    assert conll_score([1.0, 1.0, 1.0]) == 100.0
    assert conll_score([0.5, 0.25, 0.75]) == 50.0


def test_hungarian_equals_exhaustive_for_six_clusters():
    rng = random.Random(3)
    for _ in range(100):
        ids = list(range(rng.randint(6, 12)))
        key = oracles.random_partition(rng, ids)[:6]
        response = oracles.random_partition(rng, ids)[:6]
        assert ceaf_e(key, response)[2] == pytest.approx(float(oracles.ceaf_e(key, response)[2]), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_symmetry_and_order_invariance(seed):
    rng = random.Random(seed)
    key, response = oracles.random_document(rng)
    for fn in (muc, b_cubed, ceaf_e):
        p, r, f = fn(key, response)
        assert 0 <= min(p, r, f) and max(p, r, f) <= 1
        assert fn(response, key) == pytest.approx((r, p, f), abs=1e-12)
        shuffled = [rng.sample(c, len(c)) for c in rng.sample(response, len(response))]
        assert fn(key, shuffled) == pytest.approx((p, r, f), abs=1e-12)


# ---------------------------------------------------------------------------
# document-level matching


def _sentence(heads):
    return Sentence(tuple(Node(i, 0, f"w{i}", head=str(h), deprel="dep")
                          for i, h in enumerate(heads, start=1)), (), ())


SENTS = (_sentence([3, 3, 0, 3, 6, 3]),)


def mention(start, end, eid):
    return make_mention(SENTS, 0, start, end, eid)


def document(clusters):
    return set_entities(Document(SENTS), [EntityCluster(e, tuple(ms)) for e, ms in clusters.items()])


def test_partial_match_example():
    key = [mention(0, 2, "k")]          # tokens 1..3, head 3
    resp = [mention(1, 2, "r")]         # tokens 2..3
    assert key[0].head == (0, 3, 0)
    assert align_mentions(key, resp, "partial") == {0: 0}
    assert align_mentions(key, resp, "exact") == {}
    assert align_mentions(key, resp, "head") == {0: 0}


def test_identity_alignment_any_mode():
    ms = [mention(0, 0, "a"), mention(1, 2, "a"), mention(3, 5, "b")]
    for mode in ("exact", "head", "partial"):
        assert align_mentions(ms, ms, mode) == {0: 0, 1: 1, 2: 2}


def test_exact_match_takes_priority():
    key = [mention(1, 2, "a"), mention(2, 2, "b")]
    resp = [mention(2, 2, "x")]
    # the response is a head match for key 0 but an exact match for key 1
    assert align_mentions(key, resp, "head") == {0: 1}


def test_modes_on_documents():
    key = document({"a": [mention(0, 2, "a"), mention(4, 5, "a")]})
    resp = document({"a": [mention(1, 2, "a"), mention(4, 5, "a")]})
    exact = score_documents([(key, resp)], MatchMode("exact"))
    partial = score_documents([(key, resp)], MatchMode("partial"))
    assert exact.conll < 100
    assert partial.conll == 100.0


def test_singleton_flag_equals_deleting_singletons():
    rng = random.Random(9)
    spans = [(s, e) for s in range(6) for e in range(s, 6)]
    for _ in range(100):
        def random_doc():
            chosen = rng.sample(spans, rng.randint(0, 6))
            clusters = {}
            for s, e in chosen:
                eid = f"e{rng.randint(1, 3)}"
                clusters.setdefault(eid, []).append(mention(s, e, eid))
            return document(clusters)

        key, resp = random_doc(), random_doc()
        strip = lambda d: document({c.entity_id: list(c.mentions)
                                    for c in extract_entities(d) if len(c.mentions) > 1})
        without = score_documents([(key, resp)], MatchMode("exact", False))
        stripped = score_documents([(strip(key), strip(resp))], MatchMode("exact", True))
        assert without.conll == stripped.conll


def test_corpus_scores_sum_counts():
    report = score_documents([], MatchMode())
    report.add_document([["a", "b", "c"], ["d"]], [["a", "b"], ["c", "d"]])
    report.add_document([["x", "y"]], [["x", "y"]])
    # MUC pools links: recall (1 + 1) / (2 + 1)
    assert report.metric("muc")[1] == pytest.approx(2 / 3, abs=1e-15)


def test_all_empty_documents_score_one():
    report = score_documents([(Document(SENTS), Document(SENTS))])
    assert report.conll == 100.0


def test_report_rows_shape():
    report = score_documents([(document({"a": [mention(0, 0, "a"), mention(3, 3, "a")]}),) * 2])
    rows = report_rows("toy", report, MatchMode("head", True))
    assert [r[1] for r in rows] == ["muc", "b3", "ceafe", "conll"]
    assert rows[-1] == ["toy", "conll", "head", "yes", "", "", "100.00"]


def test_aligned_clusters_marks_spurious():
    key = [EntityCluster("a", (mention(0, 0, "a"), mention(3, 3, "a")))]
    resp = [EntityCluster("b", (mention(0, 0, "b"), mention(5, 5, "b")))]
    k, r = aligned_clusters(key, resp, MatchMode())
    assert k == [[("k", 0), ("k", 1)]]
    assert r == [[("k", 0), ("r", 1)]]

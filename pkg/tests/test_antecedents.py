import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from corpipe_kit.antecedents import (DEFAULT_ENSEMBLE_SIZE, AntecedentMatrix, decode_clusters,
                                     decode_links, ensemble_average, gold_antecedents,
                                     mention_reps, score_antecedents)
from corpipe_kit.corefud import Node, Sentence, make_mention
from corpipe_kit.nn import tensor as T
from helpers import REL_TOL, head_cases, relative_errors


def oracle_components(antecedents):
    """Connected components by repeated label propagation over the undirected link graph."""
    n = len(antecedents)
    label = list(range(n))
    changed = True
    while changed:
        changed = False
        for i, a in enumerate(antecedents):
            low = min(label[i], label[a])
            if label[i] != low or label[a] != low:
                label[i] = label[a] = low
                changed = True
    groups = {}
    for i in range(n):
        groups.setdefault(label[i], []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def oracle_argmax(values, allowed):
    best = []
    for i in range(len(values)):
        cands = [j for j in range(i + 1) if allowed[i, j]]
        top = max(values[i, j] for j in cands)
        best.append(min(j for j in cands if values[i, j] == top))
    return best


def test_hand_scores():
    reps = T.Tensor([[2.0], [3.0]])
    scores = score_antecedents(reps, T.Tensor([[1.0]]), T.Tensor([[1.0]])).data
    assert scores[1].tolist() == [6.0, 9.0]
    assert scores[0, 0] == 4.0
    assert scores[0, 1] == T.MASK_VALUE


def test_single_mention_matrix():
    scores = score_antecedents(T.Tensor([[0.3, -1.0]]), T.Tensor(np.eye(2)), T.Tensor(np.eye(2)))
    assert scores.shape == (1, 1)
    matrix = AntecedentMatrix.causal(scores.data)
    assert decode_links(matrix) == [[0]]


def test_mask_always_above_diagonal():
    rng = np.random.default_rng(0)
    reps = T.Tensor(rng.normal(size=(5, 4)))
    scores = score_antecedents(reps, T.Tensor(rng.normal(size=(4, 3))), T.Tensor(rng.normal(size=(4, 3)))).data
    assert np.all(scores[np.triu_indices(5, 1)] == T.MASK_VALUE)
    with pytest.raises(ValueError):
        score_antecedents(reps, T.Tensor(np.ones((3, 3))), T.Tensor(np.ones((4, 3))))


def test_matrix_validation():
    with pytest.raises(ValueError):
        AntecedentMatrix(np.zeros((2, 2)), np.array([[True, False], [True, False]]))
    with pytest.raises(ValueError):
        AntecedentMatrix(np.zeros((2, 2)), np.ones((2, 2), bool))


def test_mention_reps_concatenate_boundaries():
    hidden = T.Tensor(np.arange(12.0).reshape(4, 3))
    reps = mention_reps(hidden, [0, 1], [2, 1]).data
    assert reps.tolist() == [[0, 1, 2, 6, 7, 8], [3, 4, 5, 3, 4, 5]]


def test_three_mention_example():
    values = np.array([[1.0, 0, 0], [5.0, 1.0, 0], [0.0, 0.0, 3.0]])
    assert decode_links(AntecedentMatrix.causal(values)) == [[0, 1], [2]]


def test_ties_pick_smallest_index():
    values = np.array([[0.0, 0, 0], [2.0, 2.0, 0], [1.0, 1.0, 1.0]])
    assert AntecedentMatrix.causal(values).antecedents().tolist() == [0, 0, 0]


def test_decode_clusters_assigns_ids():
    sent = Sentence(tuple(Node(i, 0, "w", head="0") for i in range(1, 5)), (), ())
    spans = [make_mention((sent,), 0, i, i, "") for i in range(4)]
    values = np.array([[1.0, 0, 0, 0], [0.0, 1, 0, 0], [3.0, 0, 1, 0], [0.0, 4, 0, 1]])
    clusters = decode_clusters(AntecedentMatrix.causal(values), spans)
    assert [(c.entity_id, [m.start for m in c.mentions]) for c in clusters] == [
        ("e1", [0, 2]), ("e2", [1, 3])]
    assert all(m.entity_id == c.entity_id for c in clusters for m in c.mentions)
    with pytest.raises(ValueError):
        decode_clusters(AntecedentMatrix.causal(values), spans[:3])


def test_decode_matches_oracle_10000():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        n = int(rng.integers(1, 9))
        values = rng.integers(-3, 4, size=(n, n)).astype(float)  # small ints force ties
        allowed = np.tril(rng.random((n, n)) < 0.7)
        allowed[np.arange(n), np.arange(n)] = True
        matrix = AntecedentMatrix(values, allowed)
        best = oracle_argmax(values, allowed)
        assert matrix.antecedents().tolist() == best
        groups = decode_links(matrix)
        assert groups == oracle_components(best)
        assert sorted(i for g in groups for i in g) == list(range(n))
        assert len(groups) == sum(1 for i, a in enumerate(best) if a == i)


@settings(max_examples=300, deadline=None)
@given(hnp.arrays(np.int64, st.tuples(st.integers(1, 8), st.integers(1, 8)),
                  elements=st.integers(-50, 50)), st.integers(0, 7), st.integers(1, 1000))
def test_row_shift_invariance(raw, row, shift):
    # integer-valued scores keep the shifted sums exact, so ties survive the shift
    n = min(raw.shape)
    values = raw[:n, :n].astype(float)
    shifted = values.copy()
    shifted[row % n, : row % n + 1] += shift
    assert decode_links(AntecedentMatrix.causal(shifted)) == decode_links(AntecedentMatrix.causal(values))


def test_gold_antecedents_earliest_member():
    allowed = np.tril(np.ones((5, 5), bool))
    assert gold_antecedents(["a", "b", "a", "a", "c"], allowed).tolist() == [0, 1, 0, 0, 4]
    allowed[3, 0] = False
    assert gold_antecedents(["a", "b", "a", "a", "c"], allowed).tolist() == [0, 1, 0, 2, 4]


@pytest.mark.parametrize("head", ["tag", "antecedent"])
def test_head_gradients(head):
    for seed in range(5):
        fn, tensors = head_cases(seed)[head]
        errors = relative_errors(fn, tensors)
        assert max(errors.values()) < REL_TOL, (seed, errors)


def test_identity_maps_gradient_example():
    reps = T.param([[2.0], [3.0]])
    q, k = T.param([[1.0]]), T.param([[1.0]])
    weights = T.const([[1.0, 0.0], [0.5, 2.0]])
    objective = lambda: T.tensor_sum(T.mul(T.softmax(score_antecedents(reps, q, k)), weights))
    errors = relative_errors(objective, {"reps": reps, "q": q, "k": k})
    assert max(errors.values()) < REL_TOL


def test_to_tsv():
    matrix = AntecedentMatrix.causal(np.array([[0.5, 0.0], [1.0, 2.0]]))
    assert matrix.to_tsv() == "0.5\t-inf\n1.0\t2.0\n"


# ---------------------------------------------------------------------------
# ensembling


def probs(rng, shape):
    return rng.dirichlet(np.ones(shape[-1]), size=shape[:-1])


def test_ensemble_examples():
    assert DEFAULT_ENSEMBLE_SIZE == 5
    out = ensemble_average([np.array([0.2, 0.8]), np.array([0.6, 0.4])])
    np.testing.assert_allclose(out, [0.4, 0.6], rtol=1e-15)
    with pytest.raises(ValueError):
        ensemble_average([])
    with pytest.raises(ValueError):
        ensemble_average([np.array([0.5, 0.5]), np.array([1.0])])
    with pytest.raises(ValueError):
        ensemble_average([np.array([0.5, 0.6])])


def test_ensemble_identity_exact():
    rng = np.random.default_rng(5)
    for _ in range(200):
        p = probs(rng, (int(rng.integers(1, 6)), int(rng.integers(1, 9))))
        assert np.array_equal(ensemble_average([p]), p)
        assert np.array_equal(ensemble_average([p.copy() for _ in range(5)]), p)


def test_ensemble_permutation_invariant_and_normalized():
    rng = np.random.default_rng(6)
    for _ in range(200):
        members = [probs(rng, (3, 7)) for _ in range(int(rng.integers(2, 6)))]
        out = ensemble_average(members)
        for perm in itertools.islice(itertools.permutations(members), 6):
            assert np.array_equal(ensemble_average(list(perm)), out)
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-6)
        np.testing.assert_allclose(out, np.mean(members, axis=0), rtol=1e-12, atol=1e-15)

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ahdd.metrics import (PredictionMatrix, evaluate, frequency_group_f1, label_average_lengths, length_group_f1,
                          micro_macro_auc, micro_macro_f1, precision_at_k)
from oracles import brute_auc, brute_f1, brute_precision_at_k


def pm(probs, gold):
    return PredictionMatrix(np.asarray(probs, dtype=float), np.asarray(gold))


def random_matrix(rng, n_docs, n_labels, ties=False):
    probs = rng.random((n_docs, n_labels))
    if ties:
        probs = np.round(probs * 4) / 4
    gold = rng.random((n_docs, n_labels)) < 0.3
    return pm(probs, gold)


class TestF1:
    def test_perfect(self):
        assert micro_macro_f1(pm([[0.9, 0.1], [0.2, 0.8]], [[1, 0], [0, 1]])) == (1.0, 1.0)

    def test_all_zero_predictions(self):
        assert micro_macro_f1(pm(np.zeros((3, 2)), [[1, 0], [0, 1], [1, 1]])) == (0.0, 0.0)

    def test_random_matches_loops(self):
        p = random_matrix(np.random.default_rng(0), 6, 4)
        assert micro_macro_f1(p) == pytest.approx(brute_f1(p.probs.tolist(), p.gold.tolist()), abs=1e-12)

    def test_threshold_is_strict(self):
        assert micro_macro_f1(pm([[0.5]], [[1]]))[1] == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            micro_macro_f1(pm(np.zeros((0, 3)), np.zeros((0, 3))))

    def test_zero_support_label_counts_as_zero(self):
        macro, micro = micro_macro_f1(pm([[0.9, 0.1]], [[1, 0]]))
        assert (macro, micro) == (0.5, 1.0)


class TestAuc:
    def test_separated(self):
        assert micro_macro_auc(pm([[0.9, 0.2], [0.1, 0.8]], [[1, 0], [0, 1]])) == (1.0, 1.0)

    def test_all_ties(self):
        assert micro_macro_auc(pm(np.full((4, 1), 0.3), [[1], [0], [1], [0]])) == (0.5, 0.5)

    def test_pair_counting(self):
        scores = [0.1, 0.4, 0.35, 0.8, 0.4]
        labels = [0, 0, 1, 1, 1]
        # pairs: (0.35 vs 0.1, 0.4) -> 1, 0; (0.8) -> 1, 1; (0.4) -> 1, 0.5
        assert micro_macro_auc(pm(np.array(scores)[:, None], np.array(labels)[:, None]))[0] == pytest.approx(4.5 / 6)

    def test_undefined(self):
        with pytest.raises(ValueError):
            micro_macro_auc(pm([[0.2, 0.3]], [[1, 0]]))


class TestPrecisionAtK:
    def test_gold_covers_top_k(self):
        assert precision_at_k(pm([[0.9, 0.8, 0.1]], [[1, 1, 0]]), 2) == 1.0

    def test_two_of_five(self):
        probs = [[0.9, 0.8, 0.7, 0.6, 0.5, 0.1]]
        gold = [[1, 0, 0, 1, 0, 1]]
        assert precision_at_k(pm(probs, gold), 5) == pytest.approx(0.4)

    def test_k_equals_n_labels(self):
        p = random_matrix(np.random.default_rng(1), 7, 5)
        assert precision_at_k(p, 5) == pytest.approx(p.gold.sum() / (7 * 5))

    @pytest.mark.parametrize("k", [0, 4])
    def test_out_of_range(self, k):
        with pytest.raises(ValueError):
            precision_at_k(pm(np.zeros((1, 3)), np.zeros((1, 3))), k)


class TestGroups:
    def test_single_band_equals_global(self):
        p = random_matrix(np.random.default_rng(2), 10, 4)
        groups = frequency_group_f1(p, [3, 5, 1, 10])
        assert list(groups) == ["[1,10]"]
        assert groups["[1,10]"] == micro_macro_f1(p)

    def test_two_bands_match_column_slices(self):
        p = random_matrix(np.random.default_rng(3), 12, 4)
        groups = frequency_group_f1(p, [5, 60, 7, 70])
        assert set(groups) == {"[1,10]", "[51,100]"}
        assert groups["[1,10]"] == pytest.approx(brute_f1(p.probs[:, [0, 2]].tolist(), p.gold[:, [0, 2]].tolist()))
        assert groups["[51,100]"] == pytest.approx(brute_f1(p.probs[:, [1, 3]].tolist(), p.gold[:, [1, 3]].tolist()))

    def test_unseen_label_outside_bands(self):
        groups = frequency_group_f1(pm(np.zeros((1, 2)), [[1, 0]]), [0, 600])
        assert list(groups) == ["[501,inf]"]

    def test_uniform_length(self):
        p = random_matrix(np.random.default_rng(4), 8, 3)
        p = pm(p.probs, np.ones((8, 3)))
        assert list(length_group_f1(p, [300] * 8)) == ["[0,500]"]

    def test_average_length(self):
        gold = np.array([[1, 0], [1, 1]])
        np.testing.assert_allclose(label_average_lengths(gold, [400, 800]), [600, 800])
        groups = length_group_f1(pm(np.full((2, 2), 0.9), gold), [400, 800])
        assert set(groups) == {"[501,1000]"}

    def test_length_band_slice(self):
        p = pm(np.random.default_rng(5).random((4, 3)), [[1, 0, 0], [1, 0, 1], [0, 1, 0], [0, 1, 1]])
        lengths = [100, 200, 2500, 3000]
        groups = length_group_f1(p, lengths)
        assert groups["[0,500]"] == pytest.approx(brute_f1(p.probs[:, [0]].tolist(), p.gold[:, [0]].tolist()))
        assert groups["[2001,inf]"] == pytest.approx(brute_f1(p.probs[:, [1]].tolist(), p.gold[:, [1]].tolist()))
        assert groups["[1501,2000]"] == pytest.approx(brute_f1(p.probs[:, [2]].tolist(), p.gold[:, [2]].tolist()))


class TestReport:
    def test_keys_and_serialization(self):
        p = random_matrix(np.random.default_rng(6), 20, 10)
        r = evaluate(p, ks=(5, 8), train_label_counts=[5] * 10, doc_lengths=[100] * 20)
        flat = json.loads(r.to_json())
        assert {"p@5", "p@8", "macro_auc", "micro_auc", "macro_f1", "micro_f1"} <= set(flat)
        assert "freq[1,10]_micro_f1" in flat and "length[0,500]_macro_f1" in flat
        assert "p@8" in r.to_table()

    def test_skips_large_k(self):
        r = evaluate(random_matrix(np.random.default_rng(7), 5, 4), ks=(2, 5))
        assert list(r.precision_at_k) == [2]

    def test_undefined_auc_is_nan(self):
        r = evaluate(pm([[0.9]], [[1]]), ks=(1,))
        assert np.isnan(r.macro_auc)


class TestValidation:
    def test_shape(self):
        with pytest.raises(ValueError):
            pm(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_range(self):
        with pytest.raises(ValueError):
            pm([[1.5]], [[1]])

    def test_binary_gold(self):
        with pytest.raises(ValueError):
            pm([[0.5]], [[2]])


matrices = st.tuples(st.integers(1, 30), st.integers(1, 8), st.integers(0, 2**31 - 1), st.booleans())


@settings(max_examples=150, deadline=None)
@given(matrices)
def test_oracle_agreement(params):
    n_docs, n_labels, seed, ties = params
    p = random_matrix(np.random.default_rng(seed), n_docs, n_labels, ties)
    probs, gold = p.probs.tolist(), p.gold.tolist()
    assert micro_macro_f1(p) == pytest.approx(brute_f1(probs, gold), abs=1e-9)
    expected = brute_auc(probs, gold)
    if expected is None:
        with pytest.raises(ValueError):
            micro_macro_auc(p)
    else:
        got = micro_macro_auc(p)
        assert got[0] == pytest.approx(expected[0], abs=1e-9)
        assert got[1] == pytest.approx(expected[1], abs=1e-9)
    for k in range(1, n_labels + 1):
        assert precision_at_k(p, k) == pytest.approx(brute_precision_at_k(probs, gold, k), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_label_permutation_invariance(params):
    n_docs, n_labels, seed, ties = params
    rng = np.random.default_rng(seed)
    p = random_matrix(rng, n_docs, n_labels, ties)
    perm = rng.permutation(n_labels)
    q = pm(p.probs[:, perm], p.gold[:, perm])
    assert micro_macro_f1(q) == pytest.approx(micro_macro_f1(p), abs=1e-12)
    try:
        auc = micro_macro_auc(p)
    except ValueError:
        return
    assert micro_macro_auc(q) == pytest.approx(auc, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**31 - 1))
def test_single_label_micro_equals_macro(n_docs, seed):
    p = random_matrix(np.random.default_rng(seed), n_docs, 1)
    macro, micro = micro_macro_f1(p)
    assert macro == micro


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_auc_monotone_transform(params):
    n_docs, n_labels, seed, ties = params
    p = random_matrix(np.random.default_rng(seed), n_docs, n_labels, ties)
    q = pm(p.probs ** 3 * 0.5, p.gold)
    try:
        auc = micro_macro_auc(p)
    except ValueError:
        return
    assert micro_macro_auc(q) == pytest.approx(auc, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(matrices)
def test_precision_contribution_bound(params):
    n_docs, n_labels, seed, ties = params
    p = random_matrix(np.random.default_rng(seed), n_docs, n_labels, ties)
    for k in range(1, n_labels + 1):
        for row in range(n_docs):
            g = int(p.gold[row].sum())
            if k >= g:
                single = PredictionMatrix(p.probs[row:row + 1], p.gold[row:row + 1])
                assert precision_at_k(single, k) <= g / k + 1e-12

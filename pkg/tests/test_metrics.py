import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from asgk.metrics import (EvalReport, UndefinedMetricError, auc, bleu_n, cider_d, evaluate_corpus,
                          lcs_length, per_tag_auc, rouge_l, rouge_l_sentence, sentence_bleu)

from oracles import auc_pairs, bleu_oracle, lcs_brute

sentences = st.lists(st.sampled_from(list("abcdef")), min_size=1, max_size=9)
corpora = st.lists(st.tuples(sentences, st.lists(sentences, min_size=1, max_size=3)), min_size=1, max_size=5)


class TestBleu:
    @given(corpora)
    def test_matches_oracle(self, corpus):
        cands = [c for c, _ in corpus]
        refs = [r for _, r in corpus]
        for n in range(1, 5):
            assert bleu_n(cands, refs, n) == pytest.approx(bleu_oracle(cands, refs, n), abs=1e-12)

    @given(st.lists(st.lists(st.sampled_from(list("abcdef")), min_size=4, max_size=9), min_size=1, max_size=5))
    def test_identical_corpus_scores_one(self, sents):
        for n in range(1, 5):
            assert bleu_n(sents, [[s] for s in sents], n) == pytest.approx(1.0, abs=1e-12)

    @given(st.integers(1, 8).flatmap(lambda n: st.lists(
        st.lists(st.sampled_from(list("abcdef")), min_size=n, max_size=n), min_size=3, max_size=3)))
    def test_extra_reference_never_lowers_clipped_precision(self, three):
        # equal lengths keep the brevity penalty at 1, so BLEU-1 is the clipped precision
        cand, r1, r2 = three
        assert bleu_n([cand], [[r1, r2]], 1) >= bleu_n([cand], [[r1]], 1)

    def test_brevity_penalty_value(self):
        got = bleu_n([["a", "b"]], [[["a", "b", "c", "d"]]], 1)
        assert got == pytest.approx(math.exp(1 - 4 / 2), abs=1e-12)

    def test_sentence_bleu_bounds(self):
        assert sentence_bleu(list("abcd"), [list("abcd")]) == pytest.approx(1.0)
        assert 0 < sentence_bleu(list("ab"), [list("cd")]) < 1

    def test_corpus_validation(self):
        with pytest.raises(ValueError):
            bleu_n([], [])
        with pytest.raises(ValueError):
            bleu_n([["a"]], [[]])


class TestRouge:
    @given(sentences, sentences)
    def test_lcs_matches_brute_force(self, a, b):
        assert lcs_length(a, b) == lcs_brute(a, b)

    @given(st.lists(sentences, min_size=1, max_size=4))
    def test_identical_is_one(self, sents):
        assert rouge_l(sents, [[s] for s in sents]) == pytest.approx(1.0)

    def test_f_measure_value(self):
        cand, ref = list("abcd"), list("abxyzd")
        p, r = 3 / 4, 3 / 6
        beta = 1.2
        expected = (1 + beta ** 2) * p * r / (r + beta ** 2 * p)
        assert rouge_l_sentence(cand, [ref]) == pytest.approx(expected)

    def test_empty_candidate(self):
        with pytest.raises(ValueError):
            rouge_l_sentence([], [["a"]])


class TestCider:
    @given(st.lists(st.integers(1, 6), min_size=2, max_size=5))
    def test_self_score_is_ten(self, lengths):
        # disjoint vocabularies give every n-gram order a non-zero tf-idf vector
        refs = [[f"w{i}_{j}" for j in range(n + 3)] for i, n in enumerate(lengths)]
        score = cider_d(refs, [[r] for r in refs])
        assert score == pytest.approx(10.0, abs=1e-9)

    def test_ngrams_in_every_document_carry_no_weight(self):
        refs = [list("abcdeab"), list("fedcbaf"), list("aaccbbd")]
        _, scores = cider_d(refs, [[r] for r in refs], return_scores=True)
        # the last sentence only uses unigrams present in all three documents
        assert scores[2] == pytest.approx(7.5, abs=1e-9)

    def test_unrelated_scores_zero(self):
        refs = [list("abcd"), list("efgh")]
        assert cider_d([list("xyzw"), list("qrst")], [[r] for r in refs]) == 0.0

    def test_length_penalty(self):
        refs = [list("abcdef"), list("ghijkl")]
        short = cider_d([list("abc"), list("ghi")], [[r] for r in refs])
        assert 0 < short < 10

    def test_degenerate_reference_sets_warn(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cider_d([list("ab"), list("ab")], [[list("ab")], [list("ab")]])
        assert any("identical" in str(w.message) for w in caught)

    def test_per_sample_scores(self):
        refs = [list("abcd"), list("efgh")]
        mean, scores = cider_d([list("abcd"), list("zzzz")], [[r] for r in refs], return_scores=True)
        assert len(scores) == 2 and mean == pytest.approx(np.mean(scores))


class TestAuc:
    @given(st.lists(st.tuples(st.integers(0, 5).map(float), st.booleans()), min_size=2, max_size=50)
           .filter(lambda xs: 0 < sum(y for _, y in xs) < len(xs)))
    def test_matches_pair_counting(self, pairs):
        s = [a for a, _ in pairs]
        y = [b for _, b in pairs]
        assert auc(s, y) == pytest.approx(auc_pairs(s, y), abs=1e-12)

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.2], [1, 1])

    def test_per_tag_skips(self):
        S = np.array([[0.9, 0.1], [0.2, 0.3]])
        Y = np.array([[1, 0], [0, 0]])
        values, mean, skipped = per_tag_auc(S, Y, ["x", "y"])
        assert values == {"x": 1.0} and mean == 1.0 and skipped == ["y"]


class TestReport:
    def test_evaluate_corpus_and_table(self):
        cands = [list("abcd"), list("bcda")]
        report = evaluate_corpus(cands, [[c] for c in cands], np.array([[0.9], [0.1]]), np.array([[1], [0]]), ["t"])
        assert isinstance(report, EvalReport)
        assert report.bleu == pytest.approx([1.0] * 4) and report.rouge_l == pytest.approx(1.0)
        assert report.auc_per_tag == {"t": 1.0} and report.counts == {"samples": 2, "tags": 1}
        assert report.meta["cider_d_x100"] == pytest.approx(report.cider_d * 100)
        assert "BLEU-4" in report.table() and "AUC t" in report.table()

    def test_permutation_invariant(self, rng):
        cands = [list("abcd"), list("bbca"), list("dcab"), list("aabb")]
        refs = [[list("abcd")], [list("bcca")], [list("dcba")], [list("abab")]]
        S = rng.random((4, 2))
        Y = np.array([[1, 0], [0, 1], [1, 1], [0, 0]])
        perm = [2, 0, 3, 1]
        a = evaluate_corpus(cands, refs, S, Y)
        b = evaluate_corpus([cands[i] for i in perm], [refs[i] for i in perm], S[perm], Y[perm])
        assert a.bleu == pytest.approx(b.bleu, abs=1e-15) and a.rouge_l == pytest.approx(b.rouge_l)
        assert a.cider_d == pytest.approx(b.cider_d) and a.auc_per_tag == b.auc_per_tag

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from needforge.similarity import (
    bertscore,
    compare_topics,
    relative_length,
    rouge_l,
    tokenize,
)
from needforge.trec_io import Topic
from oracles import lcs_oracle

tokens = st.lists(st.sampled_from(["a", "b", "c"]), max_size=6)


class TestTokenize:
    def test_lowercase_and_split(self):
        assert tokenize("The Cat, sat!") == ["the", "cat", "sat"]

    def test_digits_kept(self):
        assert tokenize("doc42 v2.0") == ["doc42", "v2", "0"]

    def test_empty(self):
        assert tokenize("   ") == []


class TestRougeL:
    def test_identical_strings(self):
        assert rouge_l("the cat sat", "the cat sat") == pytest.approx((1.0, 1.0, 1.0))

    def test_hand_case(self):
        # LCS("the cat sat", "the cat ate") = 2; P = R = F1 = 2/3
        p, r, f1 = rouge_l("the cat sat", "the cat ate")
        assert (p, r, f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3))

    def test_disjoint_is_zero(self):
        assert rouge_l("alpha beta", "gamma delta") == (0.0, 0.0, 0.0)

    def test_empty_side_is_zero(self):
        assert rouge_l("", "words here") == (0.0, 0.0, 0.0)
        assert rouge_l("words here", "") == (0.0, 0.0, 0.0)

    def test_subsequence_not_substring(self):
        # "a c" is a subsequence of "a b c" even though not contiguous
        p, r, f1 = rouge_l("a c", "a b c")
        assert p == pytest.approx(1.0)
        assert r == pytest.approx(2 / 3)

    def test_asymmetric_precision_recall(self):
        p, r, _ = rouge_l("the cat", "the cat sat on the mat")
        assert p == pytest.approx(1.0)
        assert r == pytest.approx(2 / 6)

    @settings(max_examples=200, deadline=None)
    @given(tokens, tokens)
    def test_lcs_matches_exhaustive_oracle(self, a, b):
        cand, ref = " ".join(a), " ".join(b)
        if not a or not b:
            assert rouge_l(cand, ref) == (0.0, 0.0, 0.0)
            return
        lcs = lcs_oracle(a, b)
        p, r, f1 = rouge_l(cand, ref)
        assert p == pytest.approx(lcs / len(a), abs=1e-12)
        assert r == pytest.approx(lcs / len(b), abs=1e-12)

    @given(tokens.filter(bool), tokens.filter(bool))
    def test_symmetry_of_f1(self, a, b):
        assert rouge_l(" ".join(a), " ".join(b))[2] == pytest.approx(
            rouge_l(" ".join(b), " ".join(a))[2], abs=1e-12)


class TestBertscore:
    def test_identical_unit_vectors(self):
        v = np.eye(3)[:2]
        assert bertscore(v, v) == pytest.approx((1.0, 1.0, 1.0))

    def test_hand_case(self):
        # sim matrix rows max: [1, 0.5] -> P = 0.75; columns identical -> R = 0.75
        cand = np.array([[1.0, 0.0], [0.0, 0.5]])
        ref = np.array([[1.0, 0.0], [0.0, 1.0]])
        p, r, f1 = bertscore(cand, ref)
        assert p == pytest.approx(0.75)
        assert f1 == pytest.approx(2 * p * r / (p + r))

    def test_empty_side_is_error(self):
        with pytest.raises(ValueError):
            bertscore(np.empty((0, 4)), np.ones((1, 4)))

    def test_dimension_mismatch_is_error(self):
        with pytest.raises(ValueError, match="dimension"):
            bertscore(np.ones((1, 3)), np.ones((1, 4)))

    def test_precision_recall_swap_on_transpose(self):
        rng = np.random.default_rng(7)
        cand = rng.normal(size=(3, 5))
        ref = rng.normal(size=(4, 5))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        ref /= np.linalg.norm(ref, axis=1, keepdims=True)
        p1, r1, _ = bertscore(cand, ref)
        p2, r2, _ = bertscore(ref, cand)
        assert p1 == pytest.approx(r2)
        assert r1 == pytest.approx(p2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 1000))
    def test_invariant_under_token_permutation(self, n_cand, n_ref, seed):
        rng = np.random.default_rng(seed)
        cand = rng.normal(size=(n_cand, 4))
        ref = rng.normal(size=(n_ref, 4))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        ref /= np.linalg.norm(ref, axis=1, keepdims=True)
        base = bertscore(cand, ref)
        shuffled = bertscore(cand[rng.permutation(n_cand)],
                             ref[rng.permutation(n_ref)])
        assert base == pytest.approx(shuffled, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 1000))
    def test_scores_bounded_by_one_for_unit_vectors(self, n_cand, n_ref, seed):
        rng = np.random.default_rng(seed)
        cand = rng.normal(size=(n_cand, 4))
        ref = rng.normal(size=(n_ref, 4))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        ref /= np.linalg.norm(ref, axis=1, keepdims=True)
        p, r, _ = bertscore(cand, ref)
        assert -1.0 <= p <= 1.0 + 1e-12
        assert -1.0 <= r <= 1.0 + 1e-12


class TestRelativeLength:
    def test_equal_lengths(self):
        assert relative_length("one two", "uno dos") == 1.0

    def test_half(self):
        assert relative_length("one", "uno dos") == 0.5

    def test_empty_candidate(self):
        assert relative_length("", "uno") == 0.0

    def test_empty_reference_is_error(self):
        with pytest.raises(ValueError):
            relative_length("one", "  ")


class TestCompareTopics:
    REF = Topic("1", "feline care", "how to care for cats",
                "grooming and feeding documents are relevant")

    def test_full_candidate_covers_all_fields(self):
        report = compare_topics(self.REF, self.REF)
        assert set(report.per_field) == {"title", "description", "narrative"}
        for fs in report.per_field.values():
            assert fs.rouge_l_f1 == pytest.approx(1.0)
            assert fs.relative_length == pytest.approx(1.0)
            assert fs.bertscore_f1 is None
        assert report.whole_topic.rouge_l_f1 == pytest.approx(1.0)

    def test_partial_candidate_skips_empty_fields(self):
        cand = Topic("1", title="feline care")
        report = compare_topics(cand, self.REF)
        assert set(report.per_field) == {"title"}
        assert report.whole_topic.rouge_l_f1 == pytest.approx(1.0)

    def test_whole_topic_differs_from_field_mean(self):
        cand = Topic("1", "feline care", "dogs", "grooming and feeding documents are relevant")
        report = compare_topics(cand, self.REF)
        mean_f1 = np.mean([fs.rouge_l_f1 for fs in report.per_field.values()])
        assert report.whole_topic.rouge_l_f1 != pytest.approx(mean_f1)

    def test_empty_reference_field_is_error(self):
        ref = Topic("1", title="only title")
        with pytest.raises(ValueError, match="description"):
            compare_topics(self.REF, ref)

    def test_embedder_populates_bertscore(self):
        def embedder(text):
            # one deterministic unit vector per token, keyed on the token
            out = []
            for tok in tokenize(text):
                rng = np.random.default_rng(abs(hash(tok)) % (2**32))
                v = rng.normal(size=8)
                out.append((tok, (v / np.linalg.norm(v)).tolist()))
            return out

        report = compare_topics(self.REF, self.REF, embedder=embedder,
                                embedder_id="hash-8")
        assert report.embedder_id == "hash-8"
        for fs in report.per_field.values():
            assert fs.bertscore_f1 == pytest.approx(1.0)
        assert report.whole_topic.bertscore_f1 == pytest.approx(1.0)

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from needforge.agreement import (
    LabelPairs,
    binarize,
    bootstrap_ci,
    cohen_kappa,
    fleiss_kappa,
    label_distribution,
    mae,
    paired_t_test,
    ratings_matrix,
    relevant_fraction,
)
from needforge.trec_io import DL, R04
from oracles import fleiss_oracle, kappa_oracle, mae_oracle, ttest_oracle


def lp(pairs, scale=R04):
    return LabelPairs(list(pairs), scale)


class TestCohenKappa:
    def test_perfect_agreement(self):
        assert cohen_kappa(lp([(0, 0), (1, 1), (2, 2)])) == pytest.approx(1.0)

    def test_hand_confusion_matrix_case(self):
        # p_o = 0.75, p_e = 0.5
        assert cohen_kappa(lp([(0, 0), (0, 1), (1, 1), (1, 1)])) == pytest.approx(0.5)

    def test_empty_pairs_error(self):
        with pytest.raises(ValueError):
            cohen_kappa(lp([]))

    def test_degenerate_flag(self):
        value, degenerate = cohen_kappa(lp([(0, 0), (0, 0)]), with_flag=True)
        assert value == 1.0 and degenerate

    def test_degenerate_disagreement_is_zero(self):
        # all gold 0, all pred 1: p_e = 0, ordinary formula applies
        value = cohen_kappa(lp([(0, 1), (0, 1)]))
        assert value == pytest.approx(0.0)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                    min_size=1, max_size=30))
    def test_matches_oracle(self, pairs):
        assert cohen_kappa(lp(pairs)) == pytest.approx(kappa_oracle(pairs), abs=1e-9)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                    min_size=1, max_size=30))
    def test_symmetric_under_role_swap(self, pairs):
        swapped = [(p, g) for g, p in pairs]
        assert cohen_kappa(lp(pairs)) == pytest.approx(cohen_kappa(lp(swapped)), abs=1e-9)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                    min_size=1, max_size=30),
           st.permutations([0, 1, 2]))
    def test_invariant_under_relabeling(self, pairs, perm):
        relabeled = [(perm[g], perm[p]) for g, p in pairs]
        assert cohen_kappa(lp(pairs)) == pytest.approx(
            cohen_kappa(lp(relabeled)), abs=1e-9)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                    min_size=1, max_size=30))
    def test_one_iff_perfect_observed(self, pairs):
        kappa = cohen_kappa(lp(pairs))
        perfect = all(g == p for g, p in pairs)
        assert (kappa == pytest.approx(1.0)) == perfect


class TestMae:
    def test_identical_lists(self):
        assert mae(lp([(0, 0), (2, 2)])) == 0.0

    def test_hand_sum(self):
        assert mae(lp([(0, 1), (2, 2), (1, 0)])) == pytest.approx(2 / 3)

    def test_empty_error(self):
        with pytest.raises(ValueError):
            mae(lp([]))

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)),
                    min_size=1, max_size=30))
    def test_matches_oracle_and_zero_iff_equal(self, pairs):
        value = mae(lp(pairs, DL))
        assert value == pytest.approx(mae_oracle(pairs), abs=1e-9)
        assert (value == 0.0) == all(g == p for g, p in pairs)


class TestBinarize:
    def test_r04_grade_one_is_relevant(self):
        assert binarize(1, R04) == 1

    def test_dl_grade_one_is_not_relevant(self):
        assert binarize(1, DL) == 0

    def test_grade_zero_never_relevant(self):
        assert binarize(0, R04) == 0
        assert binarize(0, DL) == 0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            binarize(3, R04)

    @pytest.mark.parametrize("scale", [R04, DL])
    def test_monotone_non_decreasing(self, scale):
        values = [binarize(g, scale) for g in scale.grades]
        assert values == sorted(values)


class TestFleissKappa:
    def test_unanimous_is_one(self):
        mat = np.array([[3, 0], [0, 3], [3, 0]])
        assert fleiss_kappa(mat, 3) == pytest.approx(1.0)

    def test_hand_case(self):
        mat = np.array([[2, 0], [0, 2], [1, 1]])
        assert fleiss_kappa(mat, 2) == pytest.approx(1 / 3)

    def test_inconsistent_row_sums(self):
        with pytest.raises(ValueError, match="row"):
            fleiss_kappa(np.array([[2, 0], [1, 0]]), 2)

    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                    min_size=2, max_size=20))
    def test_matches_oracle_on_two_rater_matrices(self, items):
        mat = np.zeros((len(items), 3), dtype=int)
        for i, (a, b) in enumerate(items):
            mat[i, a] += 1
            mat[i, b] += 1
        assert fleiss_kappa(mat, 2) == pytest.approx(
            fleiss_oracle(mat.tolist(), 2), abs=1e-9)

    def test_two_rater_binary_exhaustive_vs_oracle(self):
        # every 2-rater binary matrix with <= 4 items
        import itertools

        for n_items in range(1, 5):
            for rows in itertools.product([(2, 0), (1, 1), (0, 2)], repeat=n_items):
                mat = np.array(rows)
                assert fleiss_kappa(mat, 2) == pytest.approx(
                    fleiss_oracle(rows, 2), abs=1e-9)

    def test_ratings_matrix_builder(self):
        mat = ratings_matrix([[0, 1], [0, 2]], 3)
        assert mat.tolist() == [[2, 0, 0], [0, 1, 1]]


class TestRelevantFraction:
    def test_all_zero(self):
        assert relevant_fraction([0, 0, 0], R04) == 0.0

    def test_dl_threshold(self):
        assert relevant_fraction([3, 2, 1, 0], DL) == 0.5

    def test_r04_threshold(self):
        assert relevant_fraction([2, 1, 0, 0], R04) == 0.5


class TestLabelDistribution:
    def test_basic(self):
        dist = label_distribution([0, 0, 1, 1], R04)
        assert dist == {0: 0.5, 1: 0.5, 2: 0.0}

    def test_single_grade(self):
        assert label_distribution([2], R04)[2] == 1.0

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=40))
    def test_sums_to_one(self, grades):
        assert sum(label_distribution(grades, DL).values()) == pytest.approx(1.0)


class TestBootstrapCi:
    def test_zero_variance_zero_width(self):
        pairs = lp([(1, 1)] * 10)
        lo, hi = bootstrap_ci(pairs, "mae", seed=1)
        assert lo == hi == 0.0

    def test_same_seed_identical(self):
        pairs = lp([(0, 0), (1, 0), (2, 2), (1, 1), (0, 1), (2, 1)])
        assert bootstrap_ci(pairs, "kappa", seed=5) == bootstrap_ci(pairs, "kappa", seed=5)

    def test_different_seed_usually_differs(self):
        pairs = lp([(0, 0), (1, 0), (2, 2), (1, 1), (0, 1), (2, 1)])
        intervals = {bootstrap_ci(pairs, "kappa", seed=s) for s in range(5)}
        assert len(intervals) > 1

    def test_topic_resampling(self):
        pairs = LabelPairs([(0, 0), (1, 1), (2, 2), (0, 1)], R04,
                           keys=[("1", "a"), ("1", "b"), ("2", "a"), ("2", "b")])
        lo, hi = bootstrap_ci(pairs, "mae", seed=3, resample_unit="topic")
        assert lo <= hi

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)),
                    min_size=4, max_size=20), st.integers(0, 100))
    def test_point_estimate_near_interval(self, pairs, seed):
        # for small samples the estimate lies within a widened interval
        pairs_ = lp(pairs)
        lo, hi = bootstrap_ci(pairs_, "mae", n_resamples=50, seed=seed)
        value = mae(pairs_)
        width = max(hi - lo, 0.25)
        assert lo - width <= value <= hi + width


class TestPairedTTest:
    def test_identical_samples(self):
        t, p, sig = paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert (t, p, sig) == (0.0, 1.0, False)

    def test_hand_case(self):
        t, p, sig = paired_t_test([1.0, 2.0, 3.0], [0.0, 0.0, 0.0])
        assert t == pytest.approx(3.4641016, abs=1e-6)
        assert p == pytest.approx(0.0741799, abs=1e-6)
        assert not sig

    def test_constant_shift_degenerate(self):
        a = [1.0, 2.0, 3.0, 4.0, 5.0]
        b = [x + 10 for x in a]
        t, p, sig = paired_t_test(a, b)
        assert (t, p, sig) == (0.0, 1.0, False)

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            paired_t_test([1.0], [1.0, 2.0])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-10, 10), min_size=3, max_size=25),
           st.integers(0, 1000))
    def test_matches_reference_oracle(self, a, seed):
        rng = np.random.default_rng(seed)
        b = [x + float(rng.normal()) for x in a]
        t, p, _ = paired_t_test(a, b)
        t_ref, p_ref = ttest_oracle(a, b)
        assert t == pytest.approx(t_ref, abs=1e-8)
        assert p == pytest.approx(p_ref, abs=1e-8)

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from needforge.regression import (
    FactorRow,
    RankDeficiencyError,
    anova_type2_eta2,
    build_design_matrix,
    fit_factor_model,
    ols_fit,
    significance_stars,
)
from oracles import ols_oracle

BASELINES = {"judge_model": "alpha", "topic_model": "alpha", "prompt": "query"}


def row(judge="alpha", topic="alpha", prompt="query", same=False, ncd=1, kappa=0.5):
    return FactorRow(judge, topic, prompt, same, ncd, kappa)


class TestFactorRow:
    def test_kappa_out_of_range(self):
        with pytest.raises(ValueError):
            row(kappa=1.5)
        with pytest.raises(ValueError):
            row(kappa=-1.5)


class TestBuildDesignMatrix:
    def test_labels_and_shape(self):
        rows = [row(judge="alpha"), row(judge="beta", prompt="contrastive")]
        design, labels = build_design_matrix(rows, BASELINES)
        assert labels == ["intercept", "judge_model=beta", "prompt=contrastive",
                          "same_llm", "n_context_docs"]
        assert design.shape == (2, 5)
        assert design[:, 0].tolist() == [1.0, 1.0]
        assert design[:, 1].tolist() == [0.0, 1.0]

    def test_missing_baseline_is_error(self):
        with pytest.raises(ValueError, match="baseline"):
            build_design_matrix([row()], {"judge_model": "alpha"})

    def test_unknown_level_vs_declared_is_error(self):
        with pytest.raises(ValueError, match="judge_model"):
            build_design_matrix([row(judge="mystery")], BASELINES,
                                declared_levels={"judge_model": ["alpha", "beta"]})

    def test_no_rows_is_error(self):
        with pytest.raises(ValueError):
            build_design_matrix([], BASELINES)


class TestOlsFit:
    def test_hand_simple_regression(self):
        # x = [0, 1, 2], y = [0, 1, 1]: slope 1/2, intercept 1/6, R^2 = 3/4
        design = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
        fit = ols_fit(design, [0.0, 1.0, 1.0], ["intercept", "x"])
        assert fit.coefficients["x"][0] == pytest.approx(0.5, abs=1e-12)
        assert fit.coefficients["intercept"][0] == pytest.approx(1 / 6, abs=1e-12)
        assert fit.r2 == pytest.approx(0.75, abs=1e-12)

    def test_perfect_fit(self):
        design = np.array([[1.0, 0.0], [1.0, 1.0]])
        fit = ols_fit(design, [2.0, 5.0])
        assert fit.r2 == pytest.approx(1.0)

    def test_more_columns_than_rows_is_error(self):
        with pytest.raises(ValueError, match="rows"):
            ols_fit(np.ones((2, 3)), [1.0, 2.0])

    def test_rank_deficiency_names_column(self):
        design = np.array([[1.0, 2.0, 4.0], [1.0, 3.0, 6.0], [1.0, 5.0, 10.0],
                           [1.0, 7.0, 14.0]])
        with pytest.raises(RankDeficiencyError, match="x2"):
            ols_fit(design, [1.0, 2.0, 3.0, 4.0])

    @settings(max_examples=100, deadline=None)
    @given(st.integers(4, 30), st.integers(1, 3), st.integers(0, 100_000))
    def test_matches_normal_equations_oracle(self, n, p, seed):
        rng = np.random.default_rng(seed)
        design = np.column_stack([np.ones(n), rng.normal(size=(n, p))])
        y = rng.normal(size=n)
        fit = ols_fit(design, y)
        beta_ref, r2_ref = ols_oracle(design, y)
        betas = [fit.coefficients[f"x{i}"][0] for i in range(p + 1)]
        assert betas == pytest.approx(beta_ref.tolist(), abs=1e-6)
        assert fit.r2 == pytest.approx(r2_ref, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(5, 20), st.integers(0, 10_000),
           st.floats(0.1, 10.0), st.floats(-5.0, 5.0))
    def test_p_values_invariant_under_affine_response(self, n, seed, a, b):
        rng = np.random.default_rng(seed)
        design = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
        y = rng.normal(size=n)
        base = ols_fit(design, y)
        scaled = ols_fit(design, a * y + b)
        for label in ("x1", "x2"):
            assert scaled.coefficients[label][2] == pytest.approx(
                base.coefficients[label][2], abs=1e-8)
            assert scaled.coefficients[label][3] == pytest.approx(
                base.coefficients[label][3], abs=1e-8)

    def test_p_value_matches_t_distribution(self):
        rng = np.random.default_rng(3)
        n = 12
        design = np.column_stack([np.ones(n), rng.normal(size=n)])
        y = rng.normal(size=n)
        fit = ols_fit(design, y)
        _, _, t, p = fit.coefficients["x1"]
        assert p == pytest.approx(2 * scipy.stats.t.sf(abs(t), n - 2), abs=1e-10)


class TestFitFactorModel:
    def balanced_rows(self):
        rows = []
        for judge, base_kappa in (("alpha", 0.40), ("beta", 0.60)):
            for same, ncd, bump in ((False, 1, 0.0), (False, 2, 0.02),
                                    (True, 1, 0.05), (True, 2, 0.08)):
                rows.append(row(judge=judge, same=same, ncd=ncd,
                                kappa=base_kappa + bump))
        return rows

    def test_fitted_values_invariant_to_baseline_choice(self):
        rows = self.balanced_rows()
        fits = {}
        for base in ("alpha", "beta"):
            baselines = dict(BASELINES, judge_model=base)
            fit = fit_factor_model(rows, baselines)
            design, labels = build_design_matrix(rows, baselines)
            beta = np.array([fit.coefficients[lb][0] for lb in labels])
            fits[base] = design @ beta
        assert fits["alpha"] == pytest.approx(fits["beta"].tolist(), abs=1e-9)

    def test_baselines_recorded(self):
        fit = fit_factor_model(self.balanced_rows(), BASELINES)
        assert fit.baseline_levels == BASELINES

    def test_collinear_factor_raises(self):
        # same_llm is True exactly when judge_model is beta
        rows = [row(judge="alpha", same=False, ncd=1, kappa=0.4),
                row(judge="alpha", same=False, ncd=2, kappa=0.45),
                row(judge="beta", same=True, ncd=1, kappa=0.6),
                row(judge="beta", same=True, ncd=2, kappa=0.62),
                row(judge="alpha", same=False, ncd=3, kappa=0.41),
                row(judge="beta", same=True, ncd=3, kappa=0.59)]
        with pytest.raises(RankDeficiencyError):
            fit_factor_model(rows, BASELINES)


class TestAnova:
    def balanced_rows(self):
        rng = np.random.default_rng(11)
        rows = []
        for judge, shift in (("alpha", 0.30), ("beta", 0.55), ("gamma", 0.70)):
            for same in (False, True):
                for ncd in (1, 2):
                    rows.append(row(judge=judge, same=same, ncd=ncd,
                                    kappa=shift + float(rng.normal(0, 0.01))))
        return rows

    def test_balanced_single_factor_matches_between_group_ss(self):
        # covariates are balanced across judge levels, so the Type II sum of
        # squares for judge_model equals the classic between-group SS
        rows = self.balanced_rows()
        results = anova_type2_eta2(rows, BASELINES)
        y = np.array([r.kappa for r in rows])
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        ss_between = 0.0
        for judge in ("alpha", "beta", "gamma"):
            group = y[[i for i, r in enumerate(rows) if r.judge_model == judge]]
            ss_between += len(group) * (group.mean() - y.mean()) ** 2
        eta2, p = results["judge_model"]
        assert eta2 == pytest.approx(ss_between / ss_tot, abs=1e-9)
        assert p < 0.001

    def test_p_value_matches_f_distribution_oracle(self):
        rows = self.balanced_rows()
        design, labels = build_design_matrix(rows, BASELINES)
        y = np.array([r.kappa for r in rows])
        n, p_cols = design.shape
        keep = [i for i, lb in enumerate(labels) if not lb.startswith("judge_model=")]
        beta_full, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
        ss_full = float(np.sum((y - design @ beta_full) ** 2))
        beta_red, _, _, _ = np.linalg.lstsq(design[:, keep], y, rcond=None)
        ss_red = float(np.sum((y - design[:, keep] @ beta_red) ** 2))
        df_factor, df_res = p_cols - len(keep), n - p_cols
        f_stat = ((ss_red - ss_full) / df_factor) / (ss_full / df_res)
        expected_p = float(scipy.stats.f.sf(f_stat, df_factor, df_res))
        _, p_val = anova_type2_eta2(rows, BASELINES)["judge_model"]
        assert p_val == pytest.approx(expected_p, abs=1e-10)

    def test_constant_factor_has_no_entry(self):
        # topic_model never varies, so it contributes no columns and no row
        results = anova_type2_eta2(self.balanced_rows(), BASELINES)
        assert "topic_model" not in results
        assert set(results) <= {"judge_model", "same_llm", "n_context_docs"}

    def test_irrelevant_factor_small_eta2(self):
        results = anova_type2_eta2(self.balanced_rows(), BASELINES)
        eta2_judge, _ = results["judge_model"]
        eta2_ncd, _ = results["n_context_docs"]
        assert eta2_judge > 0.9
        assert eta2_ncd < 0.05


class TestSignificanceStars:
    @pytest.mark.parametrize("p,stars", [
        (0.2, ""), (0.05, ""), (0.049, "*"), (0.01, "*"),
        (0.009, "**"), (0.001, "**"), (0.0009, "***"), (0.0, "***"),
    ])
    def test_thresholds(self, p, stars):
        assert significance_stars(p) == stars

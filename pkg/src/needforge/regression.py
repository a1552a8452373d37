"""OLS regression with dummy coding over experiment factors, plus Type II
ANOVA effect sizes, used to disentangle what drives label alignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

CATEGORICAL_FACTORS = ("judge_model", "topic_model", "prompt")
NUMERIC_FACTORS = ("same_llm", "n_context_docs")
ALL_FACTORS = CATEGORICAL_FACTORS + NUMERIC_FACTORS


@dataclass
class FactorRow:
    judge_model: str
    topic_model: str
    prompt: str
    same_llm: bool
    n_context_docs: int
    kappa: float

    def __post_init__(self):
        if not -1.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa {self.kappa} out of [-1, 1]")


@dataclass
class RegressionFit:
    coefficients: dict[str, tuple[float, float, float, float]]  # beta, se, t, p
    r2: float
    adj_r2: float
    n: int
    baseline_levels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not -1e-9 <= self.r2 <= 1.0 + 1e-9:
            raise ValueError("r2 out of [0, 1]")
        if self.adj_r2 > self.r2 + 1e-9:
            raise ValueError("adjusted r2 cannot exceed r2")


class RankDeficiencyError(ValueError):
    pass


def _levels(rows: list[FactorRow], factor: str,
            declared: dict[str, list[str]] | None) -> list[str]:
    seen = sorted({getattr(r, factor) for r in rows})
    if declared and factor in declared:
        unknown = set(seen) - set(declared[factor])
        if unknown:
            raise ValueError(f"unseen {factor} level(s) {sorted(unknown)} "
                             f"not in declared set")
        return [lv for lv in declared[factor] if lv in seen]
    return seen


def build_design_matrix(
    rows: list[FactorRow],
    baselines: dict[str, str],
    declared_levels: dict[str, list[str]] | None = None,
) -> tuple[np.ndarray, list[str]]:
    """Dummy-coded design matrix: intercept, one 0/1 column per non-baseline
    level of each categorical factor, then the numeric factors."""
    if not rows:
        raise ValueError("no rows")
    for factor in CATEGORICAL_FACTORS:
        if factor not in baselines:
            raise ValueError(f"missing baseline level for factor {factor!r}")
    columns: list[np.ndarray] = [np.ones(len(rows))]
    labels = ["intercept"]
    for factor in CATEGORICAL_FACTORS:
        base = baselines[factor]
        for level in _levels(rows, factor, declared_levels):
            if level == base:
                continue
            columns.append(np.array(
                [1.0 if getattr(r, factor) == level else 0.0 for r in rows]))
            labels.append(f"{factor}={level}")
    columns.append(np.array([1.0 if r.same_llm else 0.0 for r in rows]))
    labels.append("same_llm")
    columns.append(np.array([float(r.n_context_docs) for r in rows]))
    labels.append("n_context_docs")
    return np.column_stack(columns), labels


def _fit_core(design: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    beta, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    residuals = y - design @ beta
    return beta, float(residuals @ residuals)


def _check_full_rank(design: np.ndarray, labels: list[str]):
    _, r = np.linalg.qr(design)
    diag = np.abs(np.diag(r))
    tol = max(design.shape) * np.finfo(float).eps * (diag.max() if diag.size else 0.0)
    bad = [labels[i] for i, d in enumerate(diag) if d <= tol]
    if bad:
        raise RankDeficiencyError(f"design matrix is rank deficient; collinear "
                                  f"column(s): {bad}")


def ols_fit(design: np.ndarray, y, labels: list[str] | None = None,
            baselines: dict[str, str] | None = None) -> RegressionFit:
    """Least-squares fit with standard errors, t statistics, and two-tailed
    p-values from the t distribution (regularized incomplete beta form)."""
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    if labels is None:
        labels = [f"x{i}" for i in range(p)]
    if n < p:
        raise ValueError(f"need at least as many rows ({n}) as columns ({p})")
    _check_full_rank(design, labels)
    beta, ss_res = _fit_core(design, y)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    df_res = n - p
    adj_r2 = r2 if df_res == 0 else 1.0 - (1.0 - r2) * (n - 1) / df_res
    xtx_inv = np.linalg.inv(design.T @ design)
    sigma2 = ss_res / df_res if df_res > 0 else 0.0
    se = np.sqrt(np.clip(sigma2 * np.diag(xtx_inv), 0.0, None))
    coefficients: dict[str, tuple[float, float, float, float]] = {}
    for i, label in enumerate(labels):
        if se[i] > 0 and df_res > 0:
            t = beta[i] / se[i]
            p_val = float(special.betainc(df_res / 2.0, 0.5, df_res / (df_res + t * t)))
        else:
            t, p_val = float("inf") if beta[i] != 0 else 0.0, 0.0 if beta[i] != 0 else 1.0
        coefficients[label] = (float(beta[i]), float(se[i]), float(t), p_val)
    return RegressionFit(coefficients=coefficients, r2=min(r2, 1.0), adj_r2=adj_r2,
                         n=n, baseline_levels=dict(baselines or {}))


def fit_factor_model(rows: list[FactorRow], baselines: dict[str, str],
                     declared_levels: dict[str, list[str]] | None = None) -> RegressionFit:
    design, labels = build_design_matrix(rows, baselines, declared_levels)
    y = np.array([r.kappa for r in rows])
    return ols_fit(design, y, labels, baselines)


def anova_type2_eta2(
    rows: list[FactorRow],
    baselines: dict[str, str],
    declared_levels: dict[str, list[str]] | None = None,
) -> dict[str, tuple[float, float]]:
    """Type II ANOVA: per factor, SS = SS_res(model without factor) -
    SS_res(full model); eta^2 = SS / SS_total; p from the F distribution."""
    design, labels = build_design_matrix(rows, baselines, declared_levels)
    y = np.array([r.kappa for r in rows])
    n, p = design.shape
    if n < p:
        raise ValueError(f"need at least as many rows ({n}) as columns ({p})")
    _check_full_rank(design, labels)
    _, ss_res_full = _fit_core(design, y)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    df_res = n - p
    results: dict[str, tuple[float, float]] = {}
    for factor in ALL_FACTORS:
        keep = [i for i, lb in enumerate(labels)
                if not (lb == factor or lb.startswith(f"{factor}="))]
        df_factor = p - len(keep)
        if df_factor == 0:
            continue
        _, ss_res_reduced = _fit_core(design[:, keep], y)
        ss_factor = max(ss_res_reduced - ss_res_full, 0.0)
        eta2 = ss_factor / ss_tot if ss_tot > 0 else 0.0
        if df_res > 0 and ss_res_full > 0:
            f_stat = (ss_factor / df_factor) / (ss_res_full / df_res)
            p_val = float(special.fdtrc(df_factor, df_res, f_stat))
        else:
            p_val = 0.0 if ss_factor > 0 else 1.0
        results[factor] = (eta2, p_val)
    return results


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""

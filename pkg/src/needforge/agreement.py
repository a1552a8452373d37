"""Label-alignment and inter-assessor agreement statistics.

Cohen's kappa, MAE, Fleiss kappa, relevant fraction, label distributions,
percentile bootstrap confidence intervals, and the paired t-test. All
functions are pure and deterministic given seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .trec_io import GradeScale, JudgmentRecord


@dataclass
class LabelPairs:
    """Gold/predicted grade pairs over a shared (topic_id, doc_id) key set."""

    pairs: list[tuple[int, int]]
    scale: GradeScale
    keys: list[tuple[str, str]] | None = None

    def __post_init__(self):
        for gold, pred in self.pairs:
            if not (self.scale.contains(gold) and self.scale.contains(pred)):
                raise ValueError(f"pair ({gold}, {pred}) outside scale {self.scale.name}")
        if self.keys is not None:
            if len(self.keys) != len(self.pairs):
                raise ValueError("keys must align with pairs")
            if len(set(self.keys)) != len(self.keys):
                raise ValueError("duplicate (topic_id, doc_id) keys")

    def __len__(self) -> int:
        return len(self.pairs)

    def binarized(self) -> "LabelPairs":
        from .trec_io import GradeScale as GS

        binary = GS("binary", max_grade=1, binary_threshold=1)
        t = self.scale.binary_threshold
        return LabelPairs(
            [(int(g >= t), int(p >= t)) for g, p in self.pairs], binary, self.keys
        )


def binarize(grade: int, scale: GradeScale) -> int:
    """Collapse a graded label to relevant (1) / non-relevant (0)."""
    if not scale.contains(grade):
        raise ValueError(f"grade {grade} outside scale {scale.name}")
    return int(grade >= scale.binary_threshold)


def cohen_kappa(pairs: LabelPairs, with_flag: bool = False):
    """Unweighted multi-class Cohen's kappa over the scale's categories.

    A degenerate chance agreement (p_e = 1) yields 1 when observed agreement
    is also perfect, else 0; `with_flag=True` additionally returns whether
    the degenerate branch was taken.
    """
    if len(pairs) == 0:
        raise ValueError("cohen_kappa requires at least one pair")
    n_cat = pairs.scale.max_grade + 1
    confusion = np.zeros((n_cat, n_cat))
    for gold, pred in pairs.pairs:
        confusion[gold, pred] += 1
    n = confusion.sum()
    p_o = np.trace(confusion) / n
    p_e = float(np.sum(confusion.sum(axis=1) * confusion.sum(axis=0)) / n**2)
    if math.isclose(p_e, 1.0, abs_tol=1e-12):
        value = 1.0 if math.isclose(p_o, 1.0, abs_tol=1e-12) else 0.0
        return (value, True) if with_flag else value
    value = float((p_o - p_e) / (1.0 - p_e))
    return (value, False) if with_flag else value


def mae(pairs: LabelPairs) -> float:
    """Mean absolute error between gold and predicted grades."""
    if len(pairs) == 0:
        raise ValueError("mae requires at least one pair")
    return float(np.mean([abs(g - p) for g, p in pairs.pairs]))


def fleiss_kappa(ratings: np.ndarray, raters_per_item: int) -> float:
    """Fleiss kappa from an items x categories matrix of rating counts."""
    ratings = np.asarray(ratings, dtype=float)
    if ratings.ndim != 2 or ratings.shape[0] == 0:
        raise ValueError("ratings must be a non-empty 2-d matrix")
    if raters_per_item < 2:
        raise ValueError("raters_per_item must be >= 2")
    row_sums = ratings.sum(axis=1)
    if not np.all(row_sums == raters_per_item):
        bad = int(np.argmax(row_sums != raters_per_item))
        raise ValueError(
            f"row {bad} sums to {row_sums[bad]:g}, expected {raters_per_item}"
        )
    n = raters_per_item
    p_i = (np.sum(ratings**2, axis=1) - n) / (n * (n - 1))
    p_bar = float(np.mean(p_i))
    p_j = ratings.sum(axis=0) / ratings.sum()
    p_e = float(np.sum(p_j**2))
    if math.isclose(p_e, 1.0, abs_tol=1e-12):
        return 1.0 if math.isclose(p_bar, 1.0, abs_tol=1e-12) else 0.0
    return (p_bar - p_e) / (1.0 - p_e)


def ratings_matrix(judgments_by_rater: list[list[int]], n_categories: int) -> np.ndarray:
    """Build the Fleiss items x categories count matrix from per-rater grade
    lists (all raters grade the same items in the same order)."""
    lengths = {len(j) for j in judgments_by_rater}
    if len(lengths) != 1:
        raise ValueError("all raters must grade the same items")
    (n_items,) = lengths
    mat = np.zeros((n_items, n_categories), dtype=int)
    for rater in judgments_by_rater:
        for i, grade in enumerate(rater):
            mat[i, grade] += 1
    return mat


def relevant_fraction(grades: list[int], scale: GradeScale) -> float:
    """Fraction of judgments whose binarized grade is relevant."""
    if not grades:
        raise ValueError("relevant_fraction requires at least one grade")
    return sum(binarize(g, scale) for g in grades) / len(grades)


def label_distribution(grades: list[int], scale: GradeScale) -> dict[int, float]:
    """Per-grade fractions over the scale; present grades only sum to 1."""
    if not grades:
        raise ValueError("label_distribution requires at least one grade")
    counts = {g: 0 for g in scale.grades}
    for g in grades:
        if not scale.contains(g):
            raise ValueError(f"grade {g} outside scale {scale.name}")
        counts[g] += 1
    n = len(grades)
    return {g: c / n for g, c in counts.items()}


def bootstrap_ci(
    pairs: LabelPairs,
    statistic: str = "kappa",
    n_resamples: int = 20,
    level: float = 0.95,
    seed: int = 0,
    resample_unit: str = "pair",
) -> tuple[float, float]:
    """Percentile bootstrap CI for kappa or MAE, resampling pairs (or topics)
    with replacement. Deterministic given the seed."""
    if len(pairs) < 2:
        raise ValueError("bootstrap_ci requires at least two pairs")
    stats = {"kappa": cohen_kappa, "mae": mae}
    if statistic not in stats:
        raise ValueError(f"unknown statistic {statistic!r}")
    fn = stats[statistic]
    rng = np.random.default_rng(seed)
    indexed = list(range(len(pairs)))
    if resample_unit == "topic":
        if pairs.keys is None:
            raise ValueError("topic resampling requires keys")
        by_topic: dict[str, list[int]] = {}
        for i, (tid, _) in enumerate(pairs.keys):
            by_topic.setdefault(tid, []).append(i)
        groups = list(by_topic.values())
    elif resample_unit == "pair":
        groups = [[i] for i in indexed]
    else:
        raise ValueError(f"unknown resample_unit {resample_unit!r}")

    values = []
    for _ in range(n_resamples):
        chosen = rng.integers(0, len(groups), size=len(groups))
        idx = [i for g in chosen for i in groups[g]]
        sample = LabelPairs([pairs.pairs[i] for i in idx], pairs.scale)
        values.append(fn(sample))
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def paired_t_test(sample_a: list[float], sample_b: list[float],
                  alpha: float = 0.05) -> tuple[float, float, bool]:
    """Two-tailed paired t-test. All-zero differences return t=0, p=1 by
    convention. The p-value comes from the regularized incomplete beta form
    of the t distribution CDF."""
    if len(sample_a) != len(sample_b):
        raise ValueError("samples must have equal length")
    n = len(sample_a)
    if n < 2:
        raise ValueError("need at least two paired observations")
    diffs = np.asarray(sample_a, dtype=float) - np.asarray(sample_b, dtype=float)
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        return 0.0, 1.0, False
    t = float(np.mean(diffs) / (sd / math.sqrt(n)))
    df = n - 1
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, p, p < alpha


@dataclass
class AgreementReport:
    """Alignment summary for one set of predicted labels against gold."""

    kappa: float
    mae: float
    kappa_ci: tuple[float, float]
    mae_ci: tuple[float, float]
    label_distribution: dict[int, float]
    n: int
    chi: int
    kappa_degenerate: bool = False

    def __post_init__(self):
        if not -1.0 - 1e-9 <= self.kappa <= 1.0 + 1e-9:
            raise ValueError("kappa out of [-1, 1]")
        total = sum(self.label_distribution.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError("label distribution must sum to 1")


def alignment_report(
    gold,  # Qrels
    records: list[JudgmentRecord],
    n_resamples: int = 20,
    level: float = 0.95,
    seed: int = 0,
    binarize_labels: bool = False,
) -> AgreementReport:
    """Compare judgment records to gold qrels over the shared key set.

    Errored records count into chi and are excluded from the statistics.
    """
    chi = sum(1 for r in records if r.error_flag)
    keys, pairs, predicted = [], [], []
    for r in records:
        if r.error_flag:
            continue
        g = gold.grade(r.topic_id, r.doc_id)
        if g is None:
            continue
        keys.append((r.topic_id, r.doc_id))
        pairs.append((g, r.grade))
        predicted.append(r.grade)
    if not pairs:
        raise ValueError("no usable (gold, predicted) pairs")
    lp = LabelPairs(pairs, gold.scale, keys)
    if binarize_labels:
        lp = lp.binarized()
        predicted = [p for _, p in lp.pairs]
    kappa, degenerate = cohen_kappa(lp, with_flag=True)
    return AgreementReport(
        kappa=kappa,
        mae=mae(lp),
        kappa_ci=bootstrap_ci(lp, "kappa", n_resamples, level, seed),
        mae_ci=bootstrap_ci(lp, "mae", n_resamples, level, seed),
        label_distribution=label_distribution(predicted, lp.scale),
        n=len(lp),
        chi=chi,
        kappa_degenerate=degenerate,
    )


def bootstrap_statistic_samples(
    pairs: LabelPairs, statistic: str = "kappa", n_resamples: int = 20, seed: int = 0
) -> list[float]:
    """Resampled statistic values, for significance testing across conditions
    that share the seed (and hence the resample index streams)."""
    fn = {"kappa": cohen_kappa, "mae": mae}[statistic]
    rng = np.random.default_rng(seed)
    n = len(pairs)
    values = []
    for _ in range(n_resamples):
        idx = rng.integers(0, n, size=n)
        values.append(fn(LabelPairs([pairs.pairs[i] for i in idx], pairs.scale)))
    return values

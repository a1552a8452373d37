"""System-effectiveness evaluation and reusability analysis.

nDCG@k over graded qrels, system rankings, Spearman and AP-weighted rank
correlations, and the leave-one-group-out (LOGO) protocol that measures how
system rankings shift when one group's unique pool contributions are
removed from the judgments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .trec_io import Qrels, RunFile


@dataclass
class SystemRanking:
    """Systems ordered by score descending, ties broken by ascending id."""

    systems: list[tuple[str, float]]
    metric: str = ""
    qrels_id: str = ""

    def __post_init__(self):
        ordered = sorted(self.systems, key=lambda s: (-s[1], s[0]))
        if [s for s, _ in self.systems] != [s for s, _ in ordered]:
            raise ValueError("systems must be sorted by (score desc, system_id asc)")

    @property
    def system_ids(self) -> list[str]:
        return [s for s, _ in self.systems]

    def score(self, system_id: str) -> float:
        for s, v in self.systems:
            if s == system_id:
                return v
        raise KeyError(system_id)


def ndcg_at_k(ranking: list[str], qrels: Qrels, topic_id: str, k: int,
              gain: str = "linear") -> float:
    """nDCG@k with log2(i+1) discount; unjudged documents gain 0.

    Linear gain (gain = grade) by default, matching classic trec_eval;
    exponential gain (2^grade - 1) behind the flag. Topics with no relevant
    document score 0.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if gain == "linear":
        g = lambda grade: float(grade)
    elif gain == "exp":
        g = lambda grade: float(2**grade - 1)
    else:
        raise ValueError(f"unknown gain {gain!r}")

    pool = qrels.docs_for_topic(topic_id)
    ideal_gains = sorted((g(grade) for grade in pool.values()), reverse=True)[:k]
    idcg = sum(v / math.log2(i + 1) for i, v in enumerate(ideal_gains, start=1))
    if idcg == 0.0:
        return 0.0
    dcg = sum(
        g(pool.get(doc_id, 0)) / math.log2(i + 1)
        for i, doc_id in enumerate(ranking[:k], start=1)
    )
    return dcg / idcg


def rank_systems(runs: list[RunFile], qrels: Qrels, metric: str = "ndcg",
                 k: int = 10, gain: str = "linear") -> SystemRanking:
    """Rank systems by mean nDCG@k over the qrels topics.

    A topic missing from a run contributes 0 for that run. Ties in mean
    score are broken by ascending system id.
    """
    if len(runs) < 2:
        raise ValueError("rank_systems requires at least two systems")
    if metric != "ndcg":
        raise ValueError(f"unknown metric {metric!r}")
    topics = qrels.topic_ids
    covered = set()
    for run in runs:
        covered.update(run.rankings)
    if not covered & set(topics):
        raise ValueError("no overlap between run topics and qrels topics")
    scored = []
    for run in runs:
        per_topic = [ndcg_at_k(run.doc_ids(t), qrels, t, k, gain) for t in topics]
        scored.append((run.system_id, float(np.mean(per_topic))))
    scored.sort(key=lambda s: (-s[1], s[0]))
    return SystemRanking(scored, metric=f"{metric}@{k}")


def _check_same_systems(a: SystemRanking, b: SystemRanking):
    if set(a.system_ids) != set(b.system_ids):
        raise ValueError("rankings cover different system sets")
    if len(a.system_ids) < 2:
        raise ValueError("need at least two systems")


def _average_ranks(ranking: SystemRanking) -> dict[str, float]:
    """Rank positions (1 = best) with average-rank treatment for tied scores."""
    ranks: dict[str, float] = {}
    pos = 1
    i = 0
    systems = ranking.systems
    while i < len(systems):
        j = i
        while j < len(systems) and systems[j][1] == systems[i][1]:
            j += 1
        avg = (pos + pos + (j - i) - 1) / 2.0
        for s, _ in systems[i:j]:
            ranks[s] = avg
        pos += j - i
        i = j
    return ranks


def spearman(a: SystemRanking, b: SystemRanking) -> float:
    """Spearman rho over rank positions with average ranks for ties."""
    _check_same_systems(a, b)
    ra = _average_ranks(a)
    rb = _average_ranks(b)
    ids = a.system_ids
    x = np.array([ra[s] for s in ids])
    y = np.array([rb[s] for s in ids])
    xc, yc = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if denom == 0.0:
        return 1.0 if np.allclose(x, y) else 0.0
    return float(np.dot(xc, yc) / denom)


def _tau_ap_directional(truth: dict[str, float], estimate: SystemRanking) -> float:
    """AP correlation with the estimate ordering as the iteration direction.

    For every item with at least one strictly higher-scored item in the
    estimate, credit the fraction of those items the truth also places
    strictly above (truth ties credit 0.5). With no ties this is the
    classic top-weighted AP correlation.
    """
    systems = estimate.systems
    contributions = []
    for i, (s_i, score_i) in enumerate(systems):
        above = [s_j for s_j, score_j in systems if score_j > score_i]
        if not above:
            continue
        credit = 0.0
        for s_j in above:
            if truth[s_j] > truth[s_i]:
                credit += 1.0
            elif truth[s_j] == truth[s_i]:
                credit += 0.5
        contributions.append(credit / len(above))
    if not contributions:
        raise ValueError("estimate ranking has fully tied scores; direction undefined")
    return 2.0 * (sum(contributions) / len(contributions)) - 1.0


def tau_ap(truth: SystemRanking, estimate: SystemRanking,
           symmetrize_ties: bool = True) -> float:
    """Top-weighted AP rank correlation between two system rankings.

    Without tied scores this is the plain directional AP correlation with
    `truth` as reference. With ties, the default is the symmetrized
    tie-aware variant: the mean of the directional statistic computed with
    either ranking as the reference, tied reference pairs crediting 0.5.
    """
    _check_same_systems(truth, estimate)
    t_scores = dict(truth.systems)
    e_scores = dict(estimate.systems)
    has_ties = (len(set(t_scores.values())) < len(t_scores)
                or len(set(e_scores.values())) < len(e_scores))
    if not has_ties or not symmetrize_ties:
        return _tau_ap_directional(t_scores, estimate)
    directions = []
    for ref, obs in ((t_scores, estimate), (e_scores, truth)):
        try:
            directions.append(_tau_ap_directional(ref, obs))
        except ValueError:
            pass  # fully tied observed ranking; that direction is undefined
    if not directions:
        return 0.0  # both rankings fully tied: no ordering information
    return float(np.mean(directions))


@dataclass
class LogoReport:
    """Per-group rank correlations for each metric, plus their means."""

    per_group: dict[str, dict[str, tuple[float, float]]] = field(default_factory=dict)
    aggregate: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for group, metrics in self.per_group.items():
            for metric, (rho, t) in metrics.items():
                if not (-1 - 1e-9 <= rho <= 1 + 1e-9 and -1 - 1e-9 <= t <= 1 + 1e-9):
                    raise ValueError(f"correlation out of range for {group}/{metric}")


def contributed_pairs(run: RunFile, qrels: Qrels,
                      pool_depth: int | None = None) -> set[tuple[str, str]]:
    """Judged (topic, doc) pairs appearing in the run's rankings."""
    pairs = set()
    for topic_id in run.rankings:
        for doc_id in run.doc_ids(topic_id, depth=pool_depth):
            if (topic_id, doc_id) in qrels.entries:
                pairs.add((topic_id, doc_id))
    return pairs


def reduced_qrels_without_group(runs: list[RunFile], qrels: Qrels, group: str,
                                pool_depth: int | None = None) -> Qrels:
    """Remove every judged pair contributed only by the given group's runs."""
    group_pairs: set[tuple[str, str]] = set()
    other_pairs: set[tuple[str, str]] = set()
    for run in runs:
        pairs = contributed_pairs(run, qrels, pool_depth)
        if run.group_id == group:
            group_pairs |= pairs
        else:
            other_pairs |= pairs
    return qrels.without(group_pairs - other_pairs)


def logo_experiment(runs: list[RunFile], qrels: Qrels,
                    ks: tuple[int, ...] = (10, 20, 1000),
                    gain: str = "linear",
                    pool_depth: int | None = None) -> LogoReport:
    """Leave-one-group-out reusability analysis.

    For every group, re-rank all systems on qrels stripped of that group's
    unique contributions and report (Spearman, tau_ap) against the
    full-qrels ranking per metric. Aggregates are means over groups.
    """
    groups = sorted({run.group_id for run in runs})
    if len(groups) < 2:
        raise ValueError("logo_experiment requires at least two groups")
    full = {k: rank_systems(runs, qrels, "ndcg", k, gain) for k in ks}
    per_group: dict[str, dict[str, tuple[float, float]]] = {}
    for group in groups:
        if not any(run.group_id == group for run in runs):
            warnings.warn(f"group {group!r} has no runs; skipped")
            continue
        reduced = reduced_qrels_without_group(runs, qrels, group, pool_depth)
        metrics = {}
        for k in ks:
            reduced_ranking = rank_systems(runs, reduced, "ndcg", k, gain)
            metrics[f"ndcg@{k}"] = (
                spearman(full[k], reduced_ranking),
                tau_ap(full[k], reduced_ranking),
            )
        per_group[group] = metrics
    aggregate = {}
    for k in ks:
        name = f"ndcg@{k}"
        rhos = [m[name][0] for m in per_group.values()]
        taus = [m[name][1] for m in per_group.values()]
        aggregate[name] = (float(np.mean(rhos)), float(np.mean(taus)))
    return LogoReport(per_group=per_group, aggregate=aggregate)

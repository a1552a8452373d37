"""Topic text similarity: ROUGE-L, relative length, and greedy-matching
BERTScore over sidecar-provided token embeddings."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .trec_io import TOPIC_FIELDS, Topic

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumerics."""
    return _TOKEN_RE.findall(text.lower())


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> tuple[float, float, float]:
    """ROUGE-L precision, recall, and F1 over token sequences."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    lcs = _lcs_length(cand, ref)
    p = lcs / len(cand)
    r = lcs / len(ref)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def bertscore(cand_vectors: np.ndarray, ref_vectors: np.ndarray) -> tuple[float, float, float]:
    """Greedy-matching BERTScore from L2-normalized token embeddings.

    Precision: mean over candidate tokens of the best dot product against
    any reference token; recall symmetric; F1 harmonic mean. No idf
    weighting, no baseline rescaling.
    """
    cand = np.atleast_2d(np.asarray(cand_vectors, dtype=float))
    ref = np.atleast_2d(np.asarray(ref_vectors, dtype=float))
    if cand.size == 0 or ref.size == 0:
        raise ValueError("bertscore requires non-empty token embeddings on both sides")
    if cand.shape[1] != ref.shape[1]:
        raise ValueError(f"dimension mismatch: {cand.shape[1]} vs {ref.shape[1]}")
    sim = cand @ ref.T
    p = float(sim.max(axis=1).mean())
    r = float(sim.max(axis=0).mean())
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f1


def relative_length(candidate: str, reference: str) -> float:
    """Token count of the candidate divided by that of the reference."""
    ref_tokens = tokenize(reference)
    if not ref_tokens:
        raise ValueError("reference must contain at least one token")
    return len(tokenize(candidate)) / len(ref_tokens)


@dataclass
class FieldSimilarity:
    rouge_l_f1: float
    relative_length: float
    bertscore_f1: float | None = None


@dataclass
class SimilarityReport:
    """Per-field and whole-topic similarity of a candidate against a reference."""

    per_field: dict[str, FieldSimilarity] = field(default_factory=dict)
    whole_topic: FieldSimilarity | None = None
    embedder_id: str = ""


Embedder = Callable[[str], list[tuple[str, list[float]]]]


def _field_similarity(candidate: str, reference: str,
                      embedder: Embedder | None) -> FieldSimilarity:
    _, _, rouge_f1 = rouge_l(candidate, reference)
    rel_len = relative_length(candidate, reference)
    bert_f1 = None
    if embedder is not None:
        cand_vecs = np.array([v for _, v in embedder(candidate)])
        ref_vecs = np.array([v for _, v in embedder(reference)])
        _, _, bert_f1 = bertscore(cand_vecs, ref_vecs)
    return FieldSimilarity(rouge_l_f1=rouge_f1, relative_length=rel_len,
                           bertscore_f1=bert_f1)


def compare_topics(candidate: Topic, reference: Topic,
                   embedder: Embedder | None = None,
                   embedder_id: str = "") -> SimilarityReport:
    """Compare topics per field and over the whole topic.

    Fields empty in the candidate are reported absent; the whole-topic score
    concatenates the remaining fields (title, description, narrative order)
    with single spaces, so it is not a mean of per-field scores.
    """
    report = SimilarityReport(embedder_id=embedder_id)
    compared = []
    for f in TOPIC_FIELDS:
        ref_text = reference.get_field(f)
        cand_text = candidate.get_field(f)
        if not ref_text:
            raise ValueError(f"reference field {f!r} is empty")
        if not cand_text:
            continue
        report.per_field[f] = _field_similarity(cand_text, ref_text, embedder)
        compared.append(f)
    if compared:
        cand_whole = " ".join(candidate.get_field(f) for f in compared)
        ref_whole = " ".join(reference.get_field(f) for f in compared)
        report.whole_topic = _field_similarity(cand_whole, ref_whole, embedder)
    return report

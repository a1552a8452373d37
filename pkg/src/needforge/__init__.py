"""Toolkit for synthesizing formalized retrieval topics with LLMs, judging
document relevance, and quantifying alignment, agreement, reusability, and
topic similarity."""

from .trec_io import (
    DL,
    R04,
    GradeScale,
    JudgmentRecord,
    Qrels,
    RunFile,
    Topic,
)

__all__ = [
    "DL",
    "R04",
    "GradeScale",
    "JudgmentRecord",
    "Qrels",
    "RunFile",
    "Topic",
]

__version__ = "0.1.0"

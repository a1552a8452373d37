"""Parsing and serialization of TREC-format topics, qrels, and run files.

All parsers work on text streams (anything iterable over lines) and report
errors with 1-based line numbers. JSONL persistence is provided for topics
and judgment records so that generated artifacts round-trip losslessly.
"""

from __future__ import annotations

import io
import json
import re
import warnings
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

TOPIC_FIELDS = ("title", "description", "narrative")


class TrecFormatError(ValueError):
    """Raised for malformed TREC-format input; message carries a line number."""


@dataclass(frozen=True)
class GradeScale:
    """Relevance grading scheme with its binarization threshold."""

    name: str
    max_grade: int
    binary_threshold: int

    def __post_init__(self):
        if not 0 <= self.binary_threshold <= self.max_grade:
            raise ValueError("binary_threshold must lie within [0, max_grade]")

    def contains(self, grade: int) -> bool:
        return 0 <= grade <= self.max_grade

    @property
    def grades(self) -> range:
        return range(self.max_grade + 1)


#: Robust04: grades 0..2, grades 1 and 2 count as relevant.
R04 = GradeScale("R04", max_grade=2, binary_threshold=1)
#: Deep Learning tracks: grades 0..3, only the two highest count as relevant.
DL = GradeScale("DL", max_grade=3, binary_threshold=2)

SCALES = {"R04": R04, "DL": DL}


@dataclass
class Topic:
    """A formalized information need. Fields may be empty for partial topics."""

    topic_id: str
    title: str = ""
    description: str = ""
    narrative: str = ""

    def __post_init__(self):
        if not self.topic_id:
            raise ValueError("topic_id must be non-empty")
        if not (self.title or self.description or self.narrative):
            raise ValueError(f"topic {self.topic_id!r}: all text fields empty")

    def get_field(self, name: str) -> str:
        if name not in TOPIC_FIELDS:
            raise ValueError(f"unknown topic field {name!r}")
        return getattr(self, name)

    @property
    def present_fields(self) -> set[str]:
        return {f for f in TOPIC_FIELDS if getattr(self, f)}

    def to_dict(self) -> dict:
        return {
            "topic_id": self.topic_id,
            "title": self.title,
            "description": self.description,
            "narrative": self.narrative,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Topic":
        return cls(
            topic_id=str(d["topic_id"]),
            title=d.get("title", "") or "",
            description=d.get("description", "") or "",
            narrative=d.get("narrative", "") or "",
        )


@dataclass
class Qrels:
    """Relevance judgments: (topic_id, doc_id) -> integer grade."""

    entries: dict[tuple[str, str], int]
    scale: GradeScale

    def __post_init__(self):
        for (tid, did), grade in self.entries.items():
            if not self.scale.contains(grade):
                raise ValueError(
                    f"grade {grade} for ({tid}, {did}) outside scale "
                    f"{self.scale.name} [0, {self.scale.max_grade}]"
                )

    def grade(self, topic_id: str, doc_id: str, default: int | None = None) -> int | None:
        return self.entries.get((topic_id, doc_id), default)

    @property
    def topic_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for tid, _ in self.entries:
            seen.setdefault(tid)
        return list(seen)

    def docs_for_topic(self, topic_id: str) -> dict[str, int]:
        return {did: g for (tid, did), g in self.entries.items() if tid == topic_id}

    def without(self, removed: set[tuple[str, str]]) -> "Qrels":
        kept = {k: v for k, v in self.entries.items() if k not in removed}
        return Qrels(kept, self.scale)


@dataclass
class RunFile:
    """One system's ranked retrieval output, tagged with system and group ids."""

    system_id: str
    rankings: dict[str, list[tuple[str, int, float]]]
    group_id: str = ""

    def doc_ids(self, topic_id: str, depth: int | None = None) -> list[str]:
        entries = self.rankings.get(topic_id, [])
        if depth is not None:
            entries = entries[:depth]
        return [doc_id for doc_id, _, _ in entries]


@dataclass
class JudgmentRecord:
    """One LLM relevance decision with full provenance."""

    topic_id: str
    doc_id: str
    judge_model: str
    prompt_variant: str
    topic_fields_used: set[str] = field(default_factory=set)
    context_size: int = 0
    raw_response: str = ""
    grade: int | None = None
    error_flag: bool = False

    def __post_init__(self):
        if self.error_flag != (self.grade is None):
            raise ValueError("error_flag must be set exactly when grade is absent")

    def to_dict(self) -> dict:
        d = {
            "topic_id": self.topic_id,
            "doc_id": self.doc_id,
            "judge_model": self.judge_model,
            "prompt_variant": self.prompt_variant,
            "topic_fields_used": sorted(self.topic_fields_used),
            "context_size": self.context_size,
            "raw_response": self.raw_response,
            "error_flag": self.error_flag,
        }
        if not self.error_flag:
            d["grade"] = self.grade
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "JudgmentRecord":
        return cls(
            topic_id=str(d["topic_id"]),
            doc_id=str(d["doc_id"]),
            judge_model=d.get("judge_model", ""),
            prompt_variant=d.get("prompt_variant", ""),
            topic_fields_used=set(d.get("topic_fields_used", [])),
            context_size=int(d.get("context_size", 0)),
            raw_response=d.get("raw_response", ""),
            grade=d.get("grade"),
            error_flag=bool(d.get("error_flag", False)),
        )


def _lines(stream: IO[str] | Iterable[str]) -> Iterator[tuple[int, str]]:
    for lineno, line in enumerate(stream, start=1):
        yield lineno, line.rstrip("\n")


# SGML tags in the order they appear in classic TREC topic files. The <num>
# tag carries the id; the others carry the three text fields.
_SGML_TAGS = {"num": "topic_id", "title": "title", "desc": "description", "narr": "narrative"}
_LABEL_RE = re.compile(r"^\s*(number|topic|description|narrative)\s*:\s*", re.IGNORECASE)
_TAG_RE = re.compile(r"<(/?)(top|num|title|desc|narr)>", re.IGNORECASE)


def _strip_label(text: str) -> str:
    return _LABEL_RE.sub("", text.strip(), count=1).strip()


def parse_topics_sgml(stream: IO[str] | Iterable[str]) -> list[Topic]:
    """Parse classic TREC SGML topic files into Topic values, input order kept."""
    topics: list[Topic] = []
    in_top = False
    top_line = 0
    current: dict[str, list[str]] = {}
    tag: str | None = None

    def flush_topic(lineno: int):
        fields = {k: _strip_label(" ".join(v)) for k, v in current.items()}
        tid = fields.pop("topic_id", "")
        if not tid:
            raise TrecFormatError(f"line {lineno}: <top> block without <num>")
        try:
            topics.append(Topic(topic_id=tid, **fields))
        except ValueError as e:
            raise TrecFormatError(f"line {lineno}: malformed topic block: {e}") from e

    for lineno, line in _lines(stream):
        pos = 0
        for m in _TAG_RE.finditer(line):
            text_before = line[pos:m.start()]
            if tag is not None and text_before.strip():
                current.setdefault(tag, []).append(text_before.strip())
            pos = m.end()
            closing, name = m.group(1) == "/", m.group(2).lower()
            if name == "top":
                if closing:
                    if not in_top:
                        raise TrecFormatError(f"line {lineno}: </top> without <top>")
                    flush_topic(lineno)
                    in_top, tag, current = False, None, {}
                else:
                    if in_top:
                        raise TrecFormatError(
                            f"line {lineno}: unclosed <top> block starting at line {top_line}"
                        )
                    in_top, top_line = True, lineno
            else:
                if closing:
                    tag = None
                    continue
                if not in_top:
                    raise TrecFormatError(f"line {lineno}: <{name}> outside <top> block")
                tag = _SGML_TAGS[name]
        if tag is not None and line[pos:].strip():
            current.setdefault(tag, []).append(line[pos:].strip())
    if in_top:
        raise TrecFormatError(f"unclosed <top> block starting at line {top_line}")
    return topics


def parse_topics_jsonl(stream: IO[str] | Iterable[str]) -> list[Topic]:
    topics: list[Topic] = []
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        try:
            topics.append(Topic.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise TrecFormatError(f"line {lineno}: bad topic record: {e}") from e
    return topics


def parse_topics(stream: IO[str] | Iterable[str], format: str = "SGML") -> list[Topic]:
    if format.upper() == "SGML":
        return parse_topics_sgml(stream)
    if format.upper() == "JSONL":
        return parse_topics_jsonl(stream)
    raise ValueError(f"unknown topic format {format!r}")


def parse_qrels(stream: IO[str] | Iterable[str], scale: GradeScale) -> Qrels:
    """Parse whitespace-separated `topic iteration doc grade` lines."""
    entries: dict[tuple[str, str], int] = {}
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TrecFormatError(f"line {lineno}: expected 4 columns, got {len(parts)}")
        topic_id, _iteration, doc_id, grade_s = parts
        try:
            grade = int(grade_s)
        except ValueError:
            raise TrecFormatError(f"line {lineno}: non-integer grade {grade_s!r}") from None
        if not scale.contains(grade):
            raise TrecFormatError(
                f"line {lineno}: grade {grade} outside {scale.name} scale "
                f"[0, {scale.max_grade}]"
            )
        key = (topic_id, doc_id)
        if key in entries:
            raise TrecFormatError(f"line {lineno}: duplicate qrels key {key}")
        entries[key] = grade
    return Qrels(entries, scale)


def write_qrels(qrels: Qrels, out: IO[str]) -> None:
    for (topic_id, doc_id), grade in qrels.entries.items():
        out.write(f"{topic_id} 0 {doc_id} {grade}\n")


def parse_run(stream: IO[str] | Iterable[str], group_id: str = "") -> RunFile:
    """Parse a TREC run file (`topic Q0 doc rank score tag`).

    The run tag becomes the system id. Duplicate ranks within a topic trigger
    a re-sort by (score desc, doc_id asc) with fresh ranks and a warning.
    """
    per_topic: dict[str, list[tuple[str, int, float]]] = {}
    seen_docs: dict[str, set[str]] = {}
    system_id = ""
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise TrecFormatError(f"line {lineno}: expected 6 columns, got {len(parts)}")
        topic_id, _q0, doc_id, rank_s, score_s, tag = parts
        try:
            rank, score = int(rank_s), float(score_s)
        except ValueError:
            raise TrecFormatError(f"line {lineno}: bad rank/score {rank_s!r} {score_s!r}") from None
        if system_id and tag != system_id:
            raise TrecFormatError(f"line {lineno}: mixed run tags {system_id!r} and {tag!r}")
        system_id = tag
        docs = seen_docs.setdefault(topic_id, set())
        if doc_id in docs:
            raise TrecFormatError(f"line {lineno}: duplicate doc {doc_id!r} in topic {topic_id!r}")
        docs.add(doc_id)
        per_topic.setdefault(topic_id, []).append((doc_id, rank, score))

    for topic_id, entries in per_topic.items():
        entries.sort(key=lambda e: e[1])
        ranks = [r for _, r, _ in entries]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            warnings.warn(
                f"topic {topic_id!r}: non-monotone ranks; re-sorting by (score desc, doc_id asc)"
            )
            entries.sort(key=lambda e: (-e[2], e[0]))
            per_topic[topic_id] = [
                (doc_id, i, score) for i, (doc_id, _, score) in enumerate(entries, start=1)
            ]
    return RunFile(system_id=system_id, rankings=per_topic, group_id=group_id)


def write_run(run: RunFile, out: IO[str]) -> None:
    for topic_id, entries in run.rankings.items():
        for doc_id, rank, score in entries:
            out.write(f"{topic_id} Q0 {doc_id} {rank} {score:g} {run.system_id}\n")


def write_jsonl(records: Iterable[Topic | JudgmentRecord], out: IO[str]) -> None:
    """Write one JSON object per line; round-trips through the matching parser."""
    for rec in records:
        out.write(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")


def read_judgments(stream: IO[str] | Iterable[str]) -> list[JudgmentRecord]:
    records: list[JudgmentRecord] = []
    for lineno, line in _lines(stream):
        if not line.strip():
            continue
        try:
            records.append(JudgmentRecord.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise TrecFormatError(f"line {lineno}: bad judgment record: {e}") from e
    return records


def judgments_to_qrels(records: Iterable[JudgmentRecord], scale: GradeScale) -> Qrels:
    """Convert successful judgment records to qrels; errored records are skipped."""
    entries: dict[tuple[str, str], int] = {}
    for rec in records:
        if rec.error_flag:
            continue
        entries[(rec.topic_id, rec.doc_id)] = rec.grade  # type: ignore[assignment]
    return Qrels(entries, scale)


def open_text(path) -> IO[str]:
    """UTF-8 with lossy replacement; legacy TREC data contains stray bytes."""
    return io.open(path, "r", encoding="utf-8", errors="replace")

"""Graded relevance judging of (topic, document) pairs with an LLM.

The judgment prompt follows the classic structure of role, topic fields,
document, and a graded instruction that asks for a single integer. The
template version is stamped into every record so results stay attributable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .docstore import DocStore, DocStoreError
from .gateway import LlmGateway, LlmRequest, ProtocolError, TransportError
from .trec_io import TOPIC_FIELDS, GradeScale, JudgmentRecord, Topic

JUDGE_TEMPLATE_VERSION = "graded-v1"

# One-line glosses per grade, by scale name.
_GRADE_GLOSSES = {
    "R04": {0: "not relevant", 1: "relevant", 2: "highly relevant"},
    "DL": {0: "irrelevant", 1: "relevant", 2: "highly relevant", 3: "perfectly relevant"},
}

_FIELD_LABELS = {"title": "Title", "description": "Description", "narrative": "Narrative"}


def grade_glosses(scale: GradeScale) -> dict[int, str]:
    glosses = _GRADE_GLOSSES.get(scale.name)
    if glosses is None:
        glosses = {g: f"relevance level {g}" for g in scale.grades}
    return glosses


@dataclass
class JudgeConfig:
    topic_fields: set[str]
    scale: GradeScale
    judge_model: str
    prompt_variant: str = JUDGE_TEMPLATE_VERSION
    context_size: int = 0
    temperature: float = 0.0
    max_tokens: int = 1024
    reasoning_effort: str | None = None

    def __post_init__(self):
        if not self.topic_fields:
            raise ValueError("topic_fields must be non-empty")
        unknown = self.topic_fields - set(TOPIC_FIELDS)
        if unknown:
            raise ValueError(f"unknown topic fields {sorted(unknown)}")


def render_judge_prompt(topic: Topic, fields: set[str], document: str,
                        scale: GradeScale) -> str:
    """Render the relevance-judgment prompt for one (topic, document) pair.

    Byte-identical template for original and synthesized topics; only the
    field text differs.
    """
    if not document:
        raise ValueError("document text must be non-empty")
    for f in fields:
        if not topic.get_field(f):
            raise ValueError(f"topic {topic.topic_id!r}: selected field {f!r} is empty")

    glosses = grade_glosses(scale)
    scale_lines = "\n".join(f"{g}: {glosses[g]}" for g in scale.grades)
    topic_lines = "\n".join(
        f"{_FIELD_LABELS[f]}: {topic.get_field(f)}" for f in TOPIC_FIELDS if f in fields
    )
    return (
        "You are a search quality rater evaluating the relevance of a document "
        "to a search topic.\n\n"
        f"Topic:\n{topic_lines}\n\n"
        f"Document:\n{document}\n\n"
        f"Rate how well the document matches the topic on a scale from 0 to "
        f"{scale.max_grade}:\n{scale_lines}\n\n"
        "Answer with a single integer grade and nothing else."
    )


@dataclass
class GradeError:
    raw: str
    reason: str = ""


_INT_RE = re.compile(r"(?<![\w.])(\d+)(?![\w.])")


def parse_grade(raw: str, scale: GradeScale) -> int | GradeError:
    """Extract the last standalone integer in raw; reasoning models end with
    the verdict. Out-of-range or absent integers become GradeError values."""
    matches = _INT_RE.findall(raw)
    if not matches:
        return GradeError(raw, "no integer found")
    grade = int(matches[-1])
    if not scale.contains(grade):
        return GradeError(raw, f"grade {grade} outside [0, {scale.max_grade}]")
    return grade


def judge_pair(topic: Topic, doc_id: str, document: str, config: JudgeConfig,
               gateway: LlmGateway) -> JudgmentRecord:
    prompt = render_judge_prompt(topic, config.topic_fields, document, config.scale)
    common = dict(
        topic_id=topic.topic_id,
        doc_id=doc_id,
        judge_model=config.judge_model,
        prompt_variant=config.prompt_variant,
        topic_fields_used=set(config.topic_fields),
        context_size=config.context_size,
    )
    try:
        raw = gateway.complete(LlmRequest(
            model=config.judge_model,
            user_prompt=prompt,
            temperature=config.temperature,
            max_tokens=config.max_tokens,
            reasoning_effort=config.reasoning_effort,
        ))
    except (TransportError, ProtocolError) as e:
        return JudgmentRecord(raw_response=f"[{type(e).__name__}] {e}",
                              error_flag=True, **common)
    result = parse_grade(raw, config.scale)
    if isinstance(result, GradeError):
        return JudgmentRecord(raw_response=raw, error_flag=True, **common)
    return JudgmentRecord(raw_response=raw, grade=result, **common)


def judge_batch(pairs: list[tuple[Topic, str]], config: JudgeConfig,
                gateway: LlmGateway, doc_store: DocStore) -> list[JudgmentRecord]:
    """Judge every (topic, doc_id) pair, preserving input order.

    Transport and parse failures become records with error_flag set; the
    batch never aborts part-way.
    """
    records: list[JudgmentRecord] = []
    for topic, doc_id in pairs:
        try:
            document = doc_store.get(doc_id)
        except DocStoreError as e:
            records.append(JudgmentRecord(
                topic_id=topic.topic_id,
                doc_id=doc_id,
                judge_model=config.judge_model,
                prompt_variant=config.prompt_variant,
                topic_fields_used=set(config.topic_fields),
                context_size=config.context_size,
                raw_response=f"[DocStoreError] {e}",
                error_flag=True,
            ))
            continue
        records.append(judge_pair(topic, doc_id, document, config, gateway))
    return records

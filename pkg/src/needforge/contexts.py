"""Synthesis contexts and prompt rendering for topic generation.

A context bundles the queries and the relevant / non-relevant example
documents that a prompt variant embeds. Seven variants toggle those three
blocks; rendering is deterministic so that repeated runs produce
byte-identical prompts.
"""

from __future__ import annotations

import enum
import json
import random
import re
from dataclasses import dataclass, field

from .docstore import DocStore
from .trec_io import TOPIC_FIELDS, Qrels, Topic


class ContextError(ValueError):
    pass


class PromptVariant(enum.Enum):
    """The seven synthesis prompt variants and the context blocks they use."""

    QUERY = ("query", True, False, False)
    QUERY_CONTRASTIVE = ("query_contrastive", True, True, True)
    QUERY_DOCS_POS = ("query_docs_pos", True, True, False)
    QUERY_DOCS_NEG = ("query_docs_neg", True, False, True)
    CONTRASTIVE = ("contrastive", False, True, True)
    DOCS_POS = ("docs_pos", False, True, False)
    DOCS_NEG = ("docs_neg", False, False, True)

    def __init__(self, variant_name: str, uses_query: bool, uses_pos: bool, uses_neg: bool):
        self.variant_name = variant_name
        self.uses_query = uses_query
        self.uses_pos = uses_pos
        self.uses_neg = uses_neg

    @classmethod
    def from_name(cls, name: str) -> "PromptVariant":
        key = name.replace("-", "_").lower()
        for v in cls:
            if v.variant_name == key:
                return v
        raise ValueError(f"unknown prompt variant {name!r}")


@dataclass
class SynthesisContext:
    topic_id: str
    queries: list[str] = field(default_factory=list)
    positive_docs: list[tuple[str, str]] = field(default_factory=list)
    negative_docs: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        if not (self.queries or self.positive_docs or self.negative_docs):
            raise ContextError(f"context for topic {self.topic_id!r} is empty")
        pos_ids = {d for d, _ in self.positive_docs}
        neg_ids = {d for d, _ in self.negative_docs}
        overlap = pos_ids & neg_ids
        if overlap:
            raise ContextError(f"docs in both positive and negative lists: {sorted(overlap)}")


@dataclass
class ContextPolicy:
    context_size: int = 1
    doc_selection: str = "top_grade_then_docid"  # or "random_seeded"
    seed: int = 0
    max_doc_chars: int = 4000
    include_query_variants: int = 0

    def __post_init__(self):
        if self.context_size < 1:
            raise ValueError("context_size must be >= 1")
        if self.max_doc_chars <= 0:
            raise ValueError("max_doc_chars must be positive")
        if self.doc_selection not in ("top_grade_then_docid", "random_seeded"):
            raise ValueError(f"unknown doc_selection {self.doc_selection!r}")
        if not 0 <= self.include_query_variants <= 4:
            raise ValueError("include_query_variants must be in 0..4")


def truncate_at_whitespace(text: str, max_chars: int) -> str:
    if len(text) <= max_chars:
        return text
    cut = text[:max_chars]
    ws = max(cut.rfind(" "), cut.rfind("\n"), cut.rfind("\t"))
    return cut[:ws].rstrip() if ws > 0 else cut


def _select_docs(candidates: dict[str, int], k: int, side: str, policy: ContextPolicy,
                 topic_id: str) -> list[str]:
    if len(candidates) < k:
        raise ContextError(
            f"topic {topic_id!r}: {side} side has {len(candidates)} < {k} documents"
        )
    if policy.doc_selection == "top_grade_then_docid":
        ordered = sorted(candidates, key=lambda d: (-candidates[d], d))
        return ordered[:k]
    rng = random.Random(f"{policy.seed}:{topic_id}:{side}")
    return rng.sample(sorted(candidates), k)


def assemble_context(topic_id: str, qrels: Qrels, doc_store: DocStore,
                     policy: ContextPolicy, queries: list[str] | None = None,
                     variant: PromptVariant | None = None) -> SynthesisContext:
    """Build the synthesis context for one topic from qrels and the doc store.

    When `variant` is given, only the document sides the variant uses are
    sampled (and required); otherwise both sides are sampled.
    """
    graded = qrels.docs_for_topic(topic_id)
    if not graded:
        raise ContextError(f"topic {topic_id!r} not present in qrels")
    threshold = qrels.scale.binary_threshold
    positives = {d: g for d, g in graded.items() if g >= threshold}
    negatives = {d: g for d, g in graded.items() if g < threshold}

    need_pos = variant.uses_pos if variant is not None else True
    need_neg = variant.uses_neg if variant is not None else True
    k = policy.context_size

    def fetch(doc_ids: list[str]) -> list[tuple[str, str]]:
        return [
            (d, truncate_at_whitespace(doc_store.get(d), policy.max_doc_chars))
            for d in doc_ids
        ]

    pos_docs = fetch(_select_docs(positives, k, "positive", policy, topic_id)) if need_pos else []
    neg_docs = fetch(_select_docs(negatives, k, "negative", policy, topic_id)) if need_neg else []

    query_list = list(queries or [])
    if query_list:
        query_list = query_list[:1] + query_list[1:1 + policy.include_query_variants]
    return SynthesisContext(
        topic_id=topic_id,
        queries=query_list,
        positive_docs=pos_docs,
        negative_docs=neg_docs,
    )


QUERIES_HEADER = "**Queries**"
QUERIES_INTRO = "A person has typed these queries into a search engine:"
POS_BEGIN = "BEGIN RELEVANT DOCUMENTS CONTENT"
POS_END = "END RELEVANT DOCUMENTS CONTENT"
NEG_BEGIN = "BEGIN NOT RELEVANT DOCUMENTS CONTENT"
NEG_END = "END NOT RELEVANT DOCUMENTS CONTENT"

_FIELD_GLOSSES = (
    "The topic must include the following fields: title, description, and narrative. "
    "The title should be a brief, 2-4 word label for the topic. "
    "The description should clearly summarize the user's information goal in one "
    "sentence or a question. "
    "The narrative should be a short statement that explains the user's intent and "
    "the criteria for relevance."
)


def _format_instructions(fields: tuple[str, ...]) -> str:
    schema = {
        "type": "object",
        "properties": {f: {"type": "string"} for f in fields},
        "required": list(fields),
    }
    return (
        "Output Format and Structure:\n"
        "Respond with a single JSON object matching this schema, with no other text:\n"
        + json.dumps(schema, indent=2)
    )


def render_synthesis_prompt(ctx: SynthesisContext, variant: PromptVariant) -> str:
    """Render the topic-synthesis prompt for one variant.

    The preamble names only the context kinds present, followed by the field
    instructions, then the Queries / relevant / non-relevant blocks in that
    order, and finally JSON format instructions.
    """
    if variant.uses_query and not ctx.queries:
        raise ContextError(f"variant {variant.variant_name} requires queries")
    if variant.uses_pos and not ctx.positive_docs:
        raise ContextError(f"variant {variant.variant_name} requires relevant documents")
    if variant.uses_neg and not ctx.negative_docs:
        raise ContextError(f"variant {variant.variant_name} requires non-relevant documents")

    kinds = []
    if variant.uses_query:
        kinds.append("queries")
    if variant.uses_pos:
        kinds.append("relevant documents")
    if variant.uses_neg:
        kinds.append("not relevant documents")
    if len(kinds) > 1:
        named = ", ".join(kinds[:-1]) + " and " + kinds[-1]
    else:
        named = kinds[0]
    parts = [
        f"Given some user {named}, you must provide a TREC-style topic that "
        "simulates a nuanced user information need.",
        _FIELD_GLOSSES,
    ]
    if variant.uses_query:
        lines = "\n".join(f"- {q}" for q in ctx.queries)
        parts.append(f"{QUERIES_HEADER}\n{QUERIES_INTRO}\n{lines}")
    if variant.uses_pos:
        body = "\n\n".join(text for _, text in ctx.positive_docs)
        parts.append(f"{POS_BEGIN}\n{body}\n{POS_END}")
    if variant.uses_neg:
        body = "\n\n".join(text for _, text in ctx.negative_docs)
        parts.append(f"{NEG_BEGIN}\n{body}\n{NEG_END}")
    parts.append(_format_instructions(TOPIC_FIELDS))
    return "\n\n".join(parts)


def render_reconstruction_prompt(partial: Topic, target_fields: set[str]) -> str:
    """Prompt to regenerate the missing fields of a partial topic."""
    given = partial.present_fields
    unknown = target_fields - set(TOPIC_FIELDS)
    if unknown:
        raise ValueError(f"unknown target fields {sorted(unknown)}")
    if not target_fields:
        raise ValueError("no target fields requested")
    if given & target_fields:
        raise ValueError(f"fields both given and targeted: {sorted(given & target_fields)}")
    if not given:
        raise ValueError("partial topic provides no fields")

    targets = tuple(f for f in TOPIC_FIELDS if f in target_fields)
    parts = [
        "A TREC-style retrieval topic consists of a title, a description, and a "
        "narrative. Part of one topic is given below; write the missing "
        f"field{'s' if len(targets) > 1 else ''}: {', '.join(targets)}.",
        _FIELD_GLOSSES,
    ]
    for f in TOPIC_FIELDS:
        if f in given:
            parts.append(f"{f.capitalize()}:\n{partial.get_field(f)}")
    parts.append(_format_instructions(targets))
    return "\n\n".join(parts)


@dataclass
class GenerationError:
    """An LLM output that could not be parsed; counted into the error tally."""

    raw: str
    reason: str = ""


_FENCE_RE = re.compile(r"```(?:json)?", re.IGNORECASE)


def extract_first_json_object(raw: str) -> dict | None:
    """Return the first JSON object embedded in raw text, or None."""
    text = _FENCE_RE.sub(" ", raw)
    decoder = json.JSONDecoder()
    idx = text.find("{")
    while idx != -1:
        try:
            obj, _ = decoder.raw_decode(text, idx)
        except json.JSONDecodeError:
            idx = text.find("{", idx + 1)
            continue
        if isinstance(obj, dict):
            return obj
        idx = text.find("{", idx + 1)
    return None


def parse_topic_output(raw: str, expected_fields: set[str],
                       topic_id: str = "synthesized") -> Topic | GenerationError:
    """Parse an LLM synthesis response into a Topic.

    Failures are returned as GenerationError values, never raised; callers
    count them into the generation-error tally.
    """
    obj = extract_first_json_object(raw)
    if obj is None:
        return GenerationError(raw, "no JSON object found")
    fields = {}
    for f in expected_fields:
        value = obj.get(f)
        if not isinstance(value, str) or not value.strip():
            return GenerationError(raw, f"missing or empty field {f!r}")
        fields[f] = value.strip()
    return Topic(
        topic_id=topic_id,
        title=fields.get("title", ""),
        description=fields.get("description", ""),
        narrative=fields.get("narrative", ""),
    )

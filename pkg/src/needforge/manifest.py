"""Declarative experiment manifest: one file describes data paths, the LLM
endpoint, and the grid of (prompt variant, context size, topic model, judge
model, topic fields) cells. All randomness flows from the manifest seed."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .contexts import PromptVariant
from .trec_io import SCALES, TOPIC_FIELDS, GradeScale


class ManifestError(ValueError):
    pass


@dataclass
class Cell:
    prompt_variant: PromptVariant
    context_size: int
    topic_model: str
    judge_model: str
    topic_fields: tuple[str, ...]

    @property
    def cell_id(self) -> str:
        initials = "".join(f[0] for f in TOPIC_FIELDS if f in self.topic_fields)
        return (f"{self.prompt_variant.variant_name}_c{self.context_size}"
                f"_t-{self.topic_model}_j-{self.judge_model}_{initials}")


@dataclass
class LlmSettings:
    base_url: str
    cache_dir: str | None = None
    sidecar_url: str | None = None
    max_retries: int = 3
    max_in_flight: int = 4
    temperature: float = 0.0
    max_tokens: int = 2048
    reasoning_effort: str | None = None


@dataclass
class ExperimentManifest:
    collection: str
    scale: GradeScale
    seed: int
    topics_path: Path
    topics_format: str
    qrels_path: Path
    doc_store_path: Path
    workdir: Path
    llm: LlmSettings
    cells: list[Cell]
    runs_dir: Path | None = None
    group_manifest_path: Path | None = None
    queries_path: Path | None = None
    sample_path: Path | None = None
    baseline_judge_model: str | None = None
    doc_selection: str = "top_grade_then_docid"
    max_doc_chars: int = 4000
    bootstrap_resamples: int = 20
    base_dir: Path = field(default_factory=Path)


def _resolve(base: Path, value, required: bool, key: str, must_exist: bool = True):
    if value is None:
        if required:
            raise ManifestError(f"missing required path {key!r}")
        return None
    p = (base / value).resolve() if not Path(value).is_absolute() else Path(value)
    if must_exist and not p.exists():
        raise ManifestError(f"path for {key!r} does not exist: {p}")
    return p


def load_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise ManifestError(f"cannot read manifest {path}: {e}") from e
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a mapping")
    base = path.parent

    scale_name = data.get("scale")
    if scale_name not in SCALES:
        raise ManifestError(f"scale must be one of {sorted(SCALES)}, got {scale_name!r}")
    paths = data.get("paths")
    if not isinstance(paths, dict):
        raise ManifestError("manifest must define a 'paths' mapping")

    raw_cells = data.get("cells")
    if not isinstance(raw_cells, list) or not raw_cells:
        raise ManifestError("manifest must declare a non-empty 'cells' list")
    cells = []
    for i, rc in enumerate(raw_cells):
        try:
            fields = tuple(f for f in TOPIC_FIELDS if f in set(rc["topic_fields"]))
            unknown = set(rc["topic_fields"]) - set(TOPIC_FIELDS)
            if unknown or not fields:
                raise ValueError(f"bad topic_fields {rc['topic_fields']}")
            cells.append(Cell(
                prompt_variant=PromptVariant.from_name(rc["prompt_variant"]),
                context_size=int(rc["context_size"]),
                topic_model=str(rc["topic_model"]),
                judge_model=str(rc["judge_model"]),
                topic_fields=fields,
            ))
        except (KeyError, ValueError, TypeError) as e:
            raise ManifestError(f"cell {i}: {e}") from e

    llm_raw = data.get("llm")
    if not isinstance(llm_raw, dict) or "base_url" not in llm_raw:
        raise ManifestError("manifest must define llm.base_url")
    cache_dir = llm_raw.get("cache_dir")
    if cache_dir is not None and not Path(cache_dir).is_absolute():
        cache_dir = str((base / cache_dir).resolve())
    llm = LlmSettings(
        base_url=str(llm_raw["base_url"]),
        cache_dir=cache_dir,
        sidecar_url=llm_raw.get("sidecar_url"),
        max_retries=int(llm_raw.get("max_retries", 3)),
        max_in_flight=int(llm_raw.get("max_in_flight", 4)),
        temperature=float(llm_raw.get("temperature", 0.0)),
        max_tokens=int(llm_raw.get("max_tokens", 2048)),
        reasoning_effort=llm_raw.get("reasoning_effort"),
    )

    workdir = _resolve(base, paths.get("workdir", "workdir"), True, "workdir",
                       must_exist=False)
    return ExperimentManifest(
        collection=str(data.get("collection", "unnamed")),
        scale=SCALES[scale_name],
        seed=int(data.get("seed", 0)),
        topics_path=_resolve(base, paths.get("topics"), True, "topics"),
        topics_format=str(paths.get("topics_format", "SGML")),
        qrels_path=_resolve(base, paths.get("qrels"), True, "qrels"),
        doc_store_path=_resolve(base, paths.get("doc_store"), True, "doc_store"),
        workdir=workdir,
        llm=llm,
        cells=cells,
        runs_dir=_resolve(base, paths.get("runs_dir"), False, "runs_dir"),
        group_manifest_path=_resolve(base, paths.get("group_manifest"), False,
                                     "group_manifest"),
        queries_path=_resolve(base, paths.get("queries"), False, "queries"),
        sample_path=_resolve(base, paths.get("sample"), False, "sample"),
        baseline_judge_model=data.get("baseline_judge_model"),
        doc_selection=str(data.get("doc_selection", "top_grade_then_docid")),
        max_doc_chars=int(data.get("max_doc_chars", 4000)),
        bootstrap_resamples=int(data.get("bootstrap_resamples", 20)),
        base_dir=base,
    )


def load_group_manifest(path: str | Path) -> dict[str, str]:
    """JSON mapping run tag -> group id."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in data.items()
    ):
        raise ManifestError("group manifest must map run tags to group ids")
    return data


def load_queries(path: str | Path) -> dict[str, list[str]]:
    """JSONL of {"topic_id": ..., "queries": [...]}; first query is the original."""
    queries: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            queries[str(rec["topic_id"])] = [str(q) for q in rec["queries"]]
    return queries

"""Command-line entry point: synthesize topics, judge relevance, and emit
evaluation reports from a single declarative manifest.

Exit codes: 0 clean, 1 partial failures (error rows were produced but the
run continued), 2 configuration error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import agreement, ranking, regression, similarity
from .contexts import (
    ContextError,
    ContextPolicy,
    GenerationError,
    assemble_context,
    parse_topic_output,
    render_synthesis_prompt,
)
from .docstore import open_doc_store
from .gateway import LlmGateway, LlmRequest, ProtocolError, TransportError
from .judging import JUDGE_TEMPLATE_VERSION, JudgeConfig, judge_batch
from .manifest import (
    Cell,
    ExperimentManifest,
    ManifestError,
    load_group_manifest,
    load_manifest,
    load_queries,
)
from .reports import write_csv, write_table
from .trec_io import (
    TOPIC_FIELDS,
    JudgmentRecord,
    Topic,
    TrecFormatError,
    judgments_to_qrels,
    open_text,
    parse_qrels,
    parse_run,
    parse_topics,
    read_judgments,
    write_jsonl,
)

EXIT_CLEAN = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


class UpstreamMissing(ManifestError):
    pass


def _gateway(m: ExperimentManifest) -> LlmGateway:
    cache_dir = m.llm.cache_dir or str(m.workdir / "cache")
    return LlmGateway(
        base_url=m.llm.base_url,
        cache_dir=cache_dir,
        sidecar_url=m.llm.sidecar_url,
        max_in_flight=m.llm.max_in_flight,
        max_retries=m.llm.max_retries,
    )


def _load_topics(m: ExperimentManifest) -> dict[str, Topic]:
    with open_text(m.topics_path) as f:
        topics = parse_topics(f, m.topics_format)
    return {t.topic_id: t for t in topics}


def _load_qrels(m: ExperimentManifest):
    with open_text(m.qrels_path) as f:
        return parse_qrels(f, m.scale)


def _fields_initials(fields) -> str:
    return "".join(f[0] for f in TOPIC_FIELDS if f in fields)


def _synth_path(m: ExperimentManifest, cell: Cell) -> Path:
    return m.workdir / "synthesized" / f"{cell.cell_id}.jsonl"


def _judgments_path(m: ExperimentManifest, cell: Cell, source: str) -> Path:
    d = m.workdir / "judgments"
    if source == "original":
        name = f"original__j-{cell.judge_model}_{_fields_initials(cell.topic_fields)}"
    else:
        name = f"synthesized__{cell.cell_id}"
    return d / f"{name}.jsonl"


def run_synthesize(m: ExperimentManifest) -> int:
    topics = _load_topics(m)
    qrels = _load_qrels(m)
    store = open_doc_store(m.doc_store_path)
    queries_map = load_queries(m.queries_path) if m.queries_path else {}
    gw = _gateway(m)
    out_dir = m.workdir / "synthesized"
    out_dir.mkdir(parents=True, exist_ok=True)

    summary_rows = []
    error_rows = []
    for cell in m.cells:
        policy = ContextPolicy(
            context_size=cell.context_size,
            doc_selection=m.doc_selection,
            seed=m.seed,
            max_doc_chars=m.max_doc_chars,
            include_query_variants=4,
        )
        produced: list[Topic] = []
        chi = 0
        for topic_id in sorted(topics):
            topic = topics[topic_id]
            queries = queries_map.get(topic_id) or ([topic.title] if topic.title else [])
            try:
                ctx = assemble_context(topic_id, qrels, store, policy, queries,
                                       cell.prompt_variant)
                prompt = render_synthesis_prompt(ctx, cell.prompt_variant)
                raw = gw.complete(LlmRequest(
                    model=cell.topic_model,
                    user_prompt=prompt,
                    temperature=m.llm.temperature,
                    max_tokens=m.llm.max_tokens,
                    reasoning_effort=m.llm.reasoning_effort,
                ))
            except (ContextError, TransportError, ProtocolError) as e:
                chi += 1
                error_rows.append([cell.cell_id, topic_id, type(e).__name__, str(e)])
                continue
            result = parse_topic_output(raw, set(TOPIC_FIELDS), topic_id=topic_id)
            if isinstance(result, GenerationError):
                chi += 1
                error_rows.append([cell.cell_id, topic_id, "GenerationError",
                                   result.reason])
            else:
                produced.append(result)
        with open(_synth_path(m, cell), "w", encoding="utf-8") as f:
            write_jsonl(produced, f)
        summary_rows.append([cell.cell_id, len(topics), len(produced), chi])

    write_csv(out_dir / "chi_summary.csv",
              ["cell_id", "n_topics", "n_synthesized", "chi"], summary_rows)
    write_csv(out_dir / "errors.csv",
              ["cell_id", "topic_id", "error_type", "reason"], error_rows)
    return EXIT_PARTIAL if error_rows else EXIT_CLEAN


def _judged_pairs(m: ExperimentManifest) -> list[tuple[str, str]]:
    source = m.sample_path or m.qrels_path
    with open_text(source) as f:
        sample = parse_qrels(f, m.scale)
    return sorted(sample.entries)


def run_judge(m: ExperimentManifest, source: str) -> int:
    if source not in ("original", "synthesized"):
        raise ManifestError(f"unknown topics source {source!r}")
    store = open_doc_store(m.doc_store_path)
    gw = _gateway(m)
    pairs = _judged_pairs(m)
    out_dir = m.workdir / "judgments"
    out_dir.mkdir(parents=True, exist_ok=True)

    original_topics = _load_topics(m)
    summary_rows = []
    had_errors = False
    done: set[Path] = set()
    for cell in m.cells:
        path = _judgments_path(m, cell, source)
        if path in done:
            continue
        done.add(path)
        if source == "original":
            topics = original_topics
        else:
            synth = _synth_path(m, cell)
            if not synth.is_file():
                raise UpstreamMissing(
                    f"missing synthesized topics {synth}; run `needforge synthesize` first"
                )
            with open_text(synth) as f:
                topics = {t.topic_id: t for t in parse_topics(f, "JSONL")}
        config = JudgeConfig(
            topic_fields=set(cell.topic_fields),
            scale=m.scale,
            judge_model=cell.judge_model,
            prompt_variant=(
                f"original+{JUDGE_TEMPLATE_VERSION}" if source == "original"
                else f"{cell.prompt_variant.variant_name}+{JUDGE_TEMPLATE_VERSION}"
            ),
            context_size=0 if source == "original" else cell.context_size,
            temperature=m.llm.temperature,
            max_tokens=m.llm.max_tokens,
            reasoning_effort=m.llm.reasoning_effort,
        )
        batch = [(topics[tid], did) for tid, did in pairs if tid in topics]
        skipped = len(pairs) - len(batch)
        records = judge_batch(batch, config, gw, store)
        chi = sum(1 for r in records if r.error_flag)
        had_errors = had_errors or chi > 0
        with open(path, "w", encoding="utf-8") as f:
            write_jsonl(records, f)
        summary_rows.append([path.name, len(records), chi, skipped])
    write_csv(out_dir / f"chi_summary_{source}.csv",
              ["file", "n_records", "chi", "skipped_pairs"], summary_rows)
    return EXIT_PARTIAL if had_errors else EXIT_CLEAN


def _judgment_files(m: ExperimentManifest) -> list[Path]:
    d = m.workdir / "judgments"
    if not d.is_dir():
        raise UpstreamMissing(
            f"no judgments directory {d}; run `needforge judge` first"
        )
    return sorted(d.glob("*.jsonl"))


def _valid_pairs(gold, records: list[JudgmentRecord]) -> agreement.LabelPairs:
    keys, pairs = [], []
    for r in records:
        if r.error_flag:
            continue
        g = gold.grade(r.topic_id, r.doc_id)
        if g is None:
            continue
        keys.append((r.topic_id, r.doc_id))
        pairs.append((g, r.grade))
    return agreement.LabelPairs(pairs, gold.scale, keys)


def run_eval_alignment(m: ExperimentManifest) -> int:
    gold = _load_qrels(m)
    files = _judgment_files(m)
    if not files:
        raise UpstreamMissing("no judgment files found; run `needforge judge` first")

    loaded: dict[str, list[JudgmentRecord]] = {}
    for path in files:
        with open_text(path) as f:
            loaded[path.stem] = read_judgments(f)

    baselines: dict[str, str] = {}
    for name, records in loaded.items():
        if name.startswith("original__") and records:
            baselines[records[0].judge_model] = name

    n_res = m.bootstrap_resamples
    header = (["condition", "source", "n", "chi", "kappa", "kappa_lo", "kappa_hi",
               "mae", "mae_lo", "mae_hi"]
              + [f"grade_{g}" for g in m.scale.grades]
              + ["significant_vs_baseline"])
    rows = []
    for name in sorted(loaded):
        records = loaded[name]
        source = "original" if name.startswith("original__") else "synthesized"
        rep = agreement.alignment_report(gold, records, n_resamples=n_res,
                                         seed=m.seed)
        sig = ""
        judge_model = records[0].judge_model if records else ""
        base_name = baselines.get(judge_model)
        if source == "synthesized" and base_name:
            a = agreement.bootstrap_statistic_samples(
                _valid_pairs(gold, loaded[base_name]), "kappa", n_res, m.seed)
            b = agreement.bootstrap_statistic_samples(
                _valid_pairs(gold, records), "kappa", n_res, m.seed)
            _, _, significant = agreement.paired_t_test(a, b)
            sig = "*" if significant else ""
        rows.append(
            [name, source, rep.n, rep.chi, rep.kappa, rep.kappa_ci[0], rep.kappa_ci[1],
             rep.mae, rep.mae_ci[0], rep.mae_ci[1]]
            + [rep.label_distribution.get(g, 0.0) for g in m.scale.grades]
            + [sig]
        )
    write_table(m.workdir / "reports" / "alignment", header, rows)
    return EXIT_CLEAN


def run_eval_agreement(m: ExperimentManifest) -> int:
    files = _judgment_files(m)
    groups: dict[tuple[str, str], dict[str, dict[tuple[str, str], int]]] = {}
    for path in files:
        with open_text(path) as f:
            records = read_judgments(f)
        if not records:
            continue
        source = "original" if path.stem.startswith("original__") else "synthesized"
        fields = _fields_initials(records[0].topic_fields_used)
        by_key = {(r.topic_id, r.doc_id): r.grade
                  for r in records if not r.error_flag}
        groups.setdefault((source, fields), {})[records[0].judge_model] = by_key

    header = ["source", "topic_fields", "n_raters", "n_items",
              "fleiss_kappa_graded", "fleiss_kappa_binary", "relevant_pct"]
    rows = []
    for (source, fields), raters in sorted(groups.items()):
        all_grades = [g for by_key in raters.values() for g in by_key.values()]
        if not all_grades:
            continue
        rel_pct = 100.0 * agreement.relevant_fraction(all_grades, m.scale)
        fleiss_graded = fleiss_binary = None
        if len(raters) >= 2:
            shared = set.intersection(*(set(b) for b in raters.values()))
            if shared:
                ordered = sorted(shared)
                per_rater = [[raters[r][k] for k in ordered] for r in sorted(raters)]
                mat = agreement.ratings_matrix(per_rater, m.scale.max_grade + 1)
                fleiss_graded = agreement.fleiss_kappa(mat, len(raters))
                binary = [[agreement.binarize(g, m.scale) for g in row]
                          for row in per_rater]
                mat_b = agreement.ratings_matrix(binary, 2)
                fleiss_binary = agreement.fleiss_kappa(mat_b, len(raters))
                n_items = len(ordered)
            else:
                n_items = 0
        else:
            n_items = len(next(iter(raters.values())))
        rows.append([source, fields, len(raters), n_items,
                     fleiss_graded, fleiss_binary, rel_pct])
    write_table(m.workdir / "reports" / "agreement", header, rows)
    return EXIT_CLEAN


def _load_runs(m: ExperimentManifest):
    if m.runs_dir is None:
        raise ManifestError("paths.runs_dir is required for LOGO evaluation")
    if m.group_manifest_path is None:
        raise ManifestError(
            "paths.group_manifest is required for LOGO evaluation: a JSON file "
            "mapping run tags to group ids"
        )
    tag_to_group = load_group_manifest(m.group_manifest_path)
    runs = []
    for path in sorted(Path(m.runs_dir).iterdir()):
        if not path.is_file():
            continue
        with open_text(path) as f:
            run = parse_run(f)
        if run.system_id not in tag_to_group:
            raise ManifestError(f"run tag {run.system_id!r} missing from group manifest")
        run.group_id = tag_to_group[run.system_id]
        runs.append(run)
    return runs


def run_eval_logo(m: ExperimentManifest, qrels_from: str | None = None,
                  ks: tuple[int, ...] = (10, 20, 1000)) -> int:
    runs = _load_runs(m)
    if qrels_from:
        path = Path(qrels_from)
        if not path.is_file():
            raise UpstreamMissing(
                f"judgments file {path} not found; run `needforge judge` first"
            )
        with open_text(path) as f:
            qrels = judgments_to_qrels(read_judgments(f), m.scale)
        qrels_id = path.stem
    else:
        qrels = _load_qrels(m)
        qrels_id = "gold"
    report = ranking.logo_experiment(runs, qrels, ks=ks)
    header = ["qrels", "group", "metric", "spearman", "tau_ap"]
    rows = []
    for group in sorted(report.per_group):
        for metric in sorted(report.per_group[group]):
            rho, tau = report.per_group[group][metric]
            rows.append([qrels_id, group, metric, rho, tau])
    for metric in sorted(report.aggregate):
        rho, tau = report.aggregate[metric]
        rows.append([qrels_id, "MEAN", metric, rho, tau])
    write_table(m.workdir / "reports" / "logo", header, rows)
    return EXIT_CLEAN


def run_eval_similarity(m: ExperimentManifest) -> int:
    references = _load_topics(m)
    synth_dir = m.workdir / "synthesized"
    files = sorted(synth_dir.glob("*.jsonl")) if synth_dir.is_dir() else []
    if not files:
        raise UpstreamMissing(
            f"no synthesized topics in {synth_dir}; run `needforge synthesize` first"
        )
    embedder = None
    embedder_id = ""
    if m.llm.sidecar_url:
        gw = _gateway(m)
        embedder = gw.embed_tokens
        embedder_id = m.llm.sidecar_url

    header = ["cell_id", "field", "n", "rouge_l_f1", "relative_length", "bertscore_f1"]
    rows = []
    for path in files:
        with open_text(path) as f:
            candidates = parse_topics(f, "JSONL")
        per_field: dict[str, list[similarity.FieldSimilarity]] = {}
        for cand in candidates:
            ref = references.get(cand.topic_id)
            if ref is None or ref.present_fields != set(TOPIC_FIELDS):
                continue
            rep = similarity.compare_topics(cand, ref, embedder, embedder_id)
            for fname, fs in rep.per_field.items():
                per_field.setdefault(fname, []).append(fs)
            if rep.whole_topic:
                per_field.setdefault("whole_topic", []).append(rep.whole_topic)
        for fname in list(TOPIC_FIELDS) + ["whole_topic"]:
            sims = per_field.get(fname, [])
            if not sims:
                continue
            berts = [s.bertscore_f1 for s in sims if s.bertscore_f1 is not None]
            rows.append([
                path.stem, fname, len(sims),
                float(np.mean([s.rouge_l_f1 for s in sims])),
                float(np.mean([s.relative_length for s in sims])),
                float(np.mean(berts)) if berts else None,
            ])
    write_table(m.workdir / "reports" / "similarity", header, rows)
    return EXIT_CLEAN


def _factor_rows(m: ExperimentManifest) -> list[regression.FactorRow]:
    gold = _load_qrels(m)
    cells = {cell.cell_id: cell for cell in m.cells}
    rows = []
    for path in _judgment_files(m):
        if not path.stem.startswith("synthesized__"):
            continue
        cell = cells.get(path.stem.removeprefix("synthesized__"))
        if cell is None:
            continue
        with open_text(path) as f:
            pairs = _valid_pairs(gold, read_judgments(f))
        if len(pairs) == 0:
            continue
        rows.append(regression.FactorRow(
            judge_model=cell.judge_model,
            topic_model=cell.topic_model,
            prompt=cell.prompt_variant.variant_name,
            same_llm=cell.judge_model == cell.topic_model,
            n_context_docs=cell.context_size,
            kappa=agreement.cohen_kappa(pairs),
        ))
    return rows


def _read_grid(path: Path) -> list[regression.FactorRow]:
    import csv as _csv

    rows = []
    with open(path, encoding="utf-8") as f:
        for rec in _csv.DictReader(f):
            rows.append(regression.FactorRow(
                judge_model=rec["judge_model"],
                topic_model=rec["topic_model"],
                prompt=rec["prompt"],
                same_llm=rec["same_llm"].strip().lower() in ("1", "true", "yes"),
                n_context_docs=int(rec["n_context_docs"]),
                kappa=float(rec["kappa"]),
            ))
    return rows


def run_regress(m: ExperimentManifest, grid: Path | None = None,
                baselines: dict[str, str] | None = None) -> int:
    rows = _read_grid(grid) if grid else _factor_rows(m)
    if not rows:
        raise UpstreamMissing(
            "no regression rows; run `needforge judge --source synthesized` "
            "or pass --grid"
        )
    if baselines is None:
        prompts = sorted({r.prompt for r in rows})
        baselines = {
            "judge_model": sorted({r.judge_model for r in rows})[0],
            "topic_model": sorted({r.topic_model for r in rows})[0],
            "prompt": "query" if "query" in prompts else prompts[0],
        }
    fit = regression.fit_factor_model(rows, baselines)
    anova = regression.anova_type2_eta2(rows, baselines)

    header = ["section", "term", "value", "std_err", "t_or_F", "p", "stars"]
    out = []
    for term, (beta, se, t, p) in fit.coefficients.items():
        out.append(["coefficient", term, beta, se, t, p,
                    regression.significance_stars(p)])
    out.append(["fit", "r2", fit.r2, None, None, None, ""])
    out.append(["fit", "adj_r2", fit.adj_r2, None, None, None, ""])
    out.append(["fit", "n", fit.n, None, None, None, ""])
    for factor, (eta2, p) in anova.items():
        out.append(["anova_eta2", factor, eta2, None, None, p,
                    regression.significance_stars(p)])
    write_table(m.workdir / "reports" / "regression", header, out)
    return EXIT_CLEAN


_REPORT_DISPATCH = {
    "alignment": run_eval_alignment,
    "agreement": run_eval_agreement,
    "logo": run_eval_logo,
    "similarity": run_eval_similarity,
    "regression": run_regress,
}


def _run(fn, *args) -> None:
    try:
        sys.exit(fn(*args))
    except ManifestError as e:
        click.echo(f"configuration error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except TrecFormatError as e:
        click.echo(f"input format error: {e}", err=True)
        sys.exit(EXIT_CONFIG)


@click.group()
def main():
    """Synthesize formalized retrieval topics, judge relevance with LLMs, and
    evaluate the resulting judgments."""


_manifest_arg = click.argument("manifest_path", type=click.Path(exists=True, dir_okay=False))


@main.command()
@_manifest_arg
def synthesize(manifest_path):
    """Synthesize topics for every manifest cell."""
    _run(lambda: run_synthesize(load_manifest(manifest_path)))


@main.command()
@_manifest_arg
@click.option("--source", type=click.Choice(["original", "synthesized"]),
              default="original", show_default=True)
def judge(manifest_path, source):
    """Generate relevance judgments for the sampled qrels pairs."""
    _run(lambda: run_judge(load_manifest(manifest_path), source))


@main.command("eval-alignment")
@_manifest_arg
def eval_alignment(manifest_path):
    """Label alignment of judgments against the gold qrels."""
    _run(lambda: run_eval_alignment(load_manifest(manifest_path)))


@main.command("eval-agreement")
@_manifest_arg
def eval_agreement(manifest_path):
    """Inter-assessor agreement and relevant fraction."""
    _run(lambda: run_eval_agreement(load_manifest(manifest_path)))


@main.command("eval-logo")
@_manifest_arg
@click.option("--qrels-from", type=click.Path(), default=None,
              help="Judgments JSONL to evaluate instead of the gold qrels.")
@click.option("--k", "ks", multiple=True, type=int, default=(10, 20, 1000),
              show_default=True)
def eval_logo(manifest_path, qrels_from, ks):
    """Leave-one-group-out reusability analysis."""
    _run(lambda: run_eval_logo(load_manifest(manifest_path), qrels_from, tuple(ks)))


@main.command("eval-similarity")
@_manifest_arg
def eval_similarity(manifest_path):
    """Similarity of synthesized topics to the reference topics."""
    _run(lambda: run_eval_similarity(load_manifest(manifest_path)))


@main.command()
@_manifest_arg
@click.option("--grid", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV of factor rows to regress instead of deriving from judgments.")
def regress(manifest_path, grid):
    """OLS factor regression with ANOVA effect sizes."""
    _run(lambda: run_regress(load_manifest(manifest_path),
                             Path(grid) if grid else None))


@main.command()
@_manifest_arg
@click.option("--which", type=click.Choice(sorted(_REPORT_DISPATCH)), required=True)
def report(manifest_path, which):
    """Emit one of the evaluation reports."""
    _run(lambda: _REPORT_DISPATCH[which](load_manifest(manifest_path)))


if __name__ == "__main__":
    main()

"""Command line interface.

Commands mirror the pipeline stages: ingest and index prepare data,
judge runs the full six-stage flow, compare and replay work on stored
artifacts, serve exposes the HTTP API, and eval runs the benchmark
harness. The judge command prints the compliance matrix JSON on stdout
and keeps status chatter on stderr so output stays machine-readable.
"""

from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

import click

from .corpus import Corpus, LanguagePreference, load_corpus
from .errors import RegJudgeError, ReplayMismatch
from .evaluation import (
    SYSTEMS,
    evaluate_system,
    load_benchmark,
    paired_t_test,
)
from .pipeline import (
    ArtifactStore,
    RunConfig,
    judge_device,
    load_config,
    make_chat_provider,
    make_embedding_provider,
)
from .retrieval import build_index, load_index, load_synonyms, save_index
from .comparison import serialize_matrix

__all__ = ["main"]


def _bundled(name: str) -> str:
    return str(resources.files("regjudge.data").joinpath(name))


def _load_corpus(path: str | None) -> Corpus:
    corpus, rejected = load_corpus(path or _bundled("mini_corpus.json"))
    if rejected:
        click.echo(f"warning: {len(rejected)} record(s) rejected", err=True)
    return corpus


def _record_filter(status_filter: str | None):
    if status_filter is None:
        return None
    if status_filter == "active":
        return lambda record: not record.is_repealed
    return lambda record: record.status == status_filter


def _resolve_index(corpus, index_path, provider, preference, status_filter):
    if index_path:
        return load_index(index_path)
    return build_index(corpus, provider,
                       _record_filter(status_filter),
                       language_preference=preference)


def _parse_weights(text: str) -> dict[str, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise click.BadParameter("expected two comma-separated numbers")
    return {"dense": float(parts[0]), "keyword": float(parts[1])}


def _base_config(config_path: str | None) -> RunConfig:
    if config_path:
        return load_config(config_path)
    return RunConfig()


@click.group()
@click.version_option(package_name="regjudge")
def cli() -> None:
    """Regulatory applicability judgments for medical device descriptions."""


@cli.command()
@click.argument("corpus_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False),
              help="Write the normalized corpus JSON here.")
@click.option("--strict", is_flag=True,
              help="Exit non-zero if any record is rejected.")
def ingest(corpus_path: str, out: str | None, strict: bool) -> None:
    """Validate a corpus file and report what was accepted."""
    corpus, rejected = load_corpus(corpus_path)
    click.echo(f"accepted {len(corpus.records)} record(s), "
               f"rejected {len(rejected)}")
    for reject in rejected:
        click.echo(f"  record {reject.index} ({reject.id or '?'}): "
                   f"{reject.reason}", err=True)
    if out:
        Path(out).write_text(corpus.to_json(), encoding="utf-8")
        click.echo(f"wrote normalized corpus to {out}", err=True)
    if strict and rejected:
        raise SystemExit(1)


@cli.group()
def index() -> None:
    """Vector index operations."""


@index.command("build")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              help="Corpus JSON (defaults to the bundled fixture).")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--embed", default="hash:64", show_default=True,
              help="Embedding provider spec.")
@click.option("--language", default="EN_FIRST", show_default=True,
              type=click.Choice([p.value for p in LanguagePreference]))
@click.option("--status-filter", default=None,
              help="Keep only records with this status ('active' keeps "
                   "everything not repealed).")
def index_build(corpus_path: str | None, out: str, embed: str,
                language: str, status_filter: str | None) -> None:
    """Embed corpus segments and persist the index to disk."""
    corpus = _load_corpus(corpus_path)
    provider = make_embedding_provider(embed)
    built = build_index(corpus, provider, _record_filter(status_filter),
                        language_preference=LanguagePreference(language))
    save_index(built, out)
    click.echo(f"indexed {len(built.entries)} segment(s) "
               f"[model={built.model_id}, fingerprint={built.fingerprint()}]")


@cli.command()
@click.argument("device_text")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              help="Corpus JSON (defaults to the bundled fixture).")
@click.option("--index", "index_path", type=click.Path(exists=True),
              help="Prebuilt index; built in-process when omitted.")
@click.option("--region", default="CN,US", show_default=True,
              help="Comma-separated target regions.")
@click.option("--k", default=5, show_default=True, type=int)
@click.option("--embed", default=None, help="Embedding provider spec.")
@click.option("--chat", default=None, help="Chat provider spec.")
@click.option("--weights", default=None,
              help="dense,keyword fusion weights (e.g. 0.8,0.2).")
@click.option("--threshold", default=None, type=float,
              help="Justification divergence threshold.")
@click.option("--runs", "run_dir", default=None,
              help="Artifact store directory.")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="JSON or TOML run config; CLI flags override it.")
@click.option("--out", type=click.Path(dir_okay=False),
              help="Write the matrix here instead of stdout.")
def judge(device_text: str, corpus_path: str | None, index_path: str | None,
          region: str, k: int, embed: str | None, chat: str | None,
          weights: str | None, threshold: float | None,
          run_dir: str | None, config_path: str | None,
          out: str | None) -> None:
    """Judge one device description and emit its compliance matrix."""
    base = _base_config(config_path)
    overrides: dict = {
        "regions": tuple(part.strip() for part in region.split(",") if part.strip()),
        "k": k,
    }
    if embed:
        overrides["embed_provider"] = embed
    if chat:
        overrides["chat_provider"] = chat
    if weights:
        overrides["weights"] = _parse_weights(weights)
    if threshold is not None:
        overrides["divergence_threshold"] = threshold
    if run_dir:
        overrides["run_dir"] = run_dir
    if base.synonyms_path is None:
        overrides["synonyms_path"] = _bundled("synonyms.json")
    if base.equivalence_path is None:
        overrides["equivalence_path"] = _bundled("equivalence_map.json")
    config = RunConfig.from_dict({**base.to_dict(), **overrides})

    corpus = _load_corpus(corpus_path)
    provider = make_embedding_provider(config.embed_provider)
    built = _resolve_index(corpus, index_path, provider,
                           LanguagePreference(config.language_preference),
                           config.status_filter)
    try:
        artifact = judge_device(config, corpus, built, device_text,
                                embed_provider=provider)
    except RegJudgeError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"artifact {artifact.artifact_id} saved under {config.run_dir}",
               err=True)
    rendered = serialize_matrix(artifact.matrix)
    if out:
        Path(out).write_text(rendered, encoding="utf-8")
        click.echo(f"wrote matrix to {out}", err=True)
    else:
        click.echo(rendered, nl=False)


@cli.command()
@click.argument("artifact_id")
@click.option("--runs", "run_dir", default="runs", show_default=True)
def compare(artifact_id: str, run_dir: str) -> None:
    """Print the stored compliance matrix for an artifact."""
    store = ArtifactStore(run_dir)
    try:
        click.echo(store.matrix_bytes(artifact_id), nl=False)
    except RegJudgeError as exc:
        raise click.ClickException(str(exc)) from exc


@cli.command()
@click.argument("artifact_id")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              help="Corpus JSON (defaults to the bundled fixture).")
@click.option("--runs", "run_dir", default="runs", show_default=True)
def replay(artifact_id: str, corpus_path: str | None, run_dir: str) -> None:
    """Recompute an artifact from its stored transcripts and verify it."""
    from .pipeline import replay as replay_run

    store = ArtifactStore(run_dir)
    corpus = _load_corpus(corpus_path)
    try:
        replay_run(store, artifact_id, corpus)
    except ReplayMismatch as exc:
        click.echo(f"replay mismatch: {exc}", err=True)
        if exc.diff:
            click.echo(exc.diff, err=True)
        raise SystemExit(2) from exc
    except RegJudgeError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"replay ok: {artifact_id}")


@cli.command()
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              help="Corpus JSON (defaults to the bundled fixture).")
@click.option("--index", "index_path", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--embed", default="hash:64", show_default=True)
@click.option("--chat", default="cue", show_default=True)
@click.option("--runs", "run_dir", default="runs", show_default=True)
def serve(corpus_path: str | None, index_path: str | None, host: str,
          port: int, embed: str, chat: str, run_dir: str) -> None:
    """Start the HTTP service."""
    import uvicorn

    from .service import create_app

    corpus = _load_corpus(corpus_path)
    provider = make_embedding_provider(embed)
    built = _resolve_index(corpus, index_path, provider,
                           LanguagePreference.EN_FIRST, None)
    config = RunConfig(embed_provider=embed, chat_provider=chat,
                       run_dir=run_dir,
                       synonyms_path=_bundled("synonyms.json"),
                       equivalence_path=_bundled("equivalence_map.json"))
    app = create_app(corpus, built, config, embed_provider=provider)
    uvicorn.run(app, host=host, port=port)


@cli.command("eval")
@click.option("--benchmark", "benchmark_path", type=click.Path(exists=True),
              help="Benchmark CSV (defaults to the bundled fixture).")
@click.option("--corpus", "corpus_path", type=click.Path(exists=True),
              help="Corpus JSON (defaults to the bundled fixture).")
@click.option("--system", "systems", multiple=True,
              type=click.Choice(list(SYSTEMS) + ["all"]),
              default=("all",), show_default=True)
@click.option("--k", default=5, show_default=True, type=int)
@click.option("--embed", default="hash:64", show_default=True)
@click.option("--chat", default="cue", show_default=True)
@click.option("--out", type=click.Path(dir_okay=False),
              help="Write the markdown report here.")
@click.option("--json-out", type=click.Path(dir_okay=False),
              help="Write the raw metrics JSON here.")
def eval_command(benchmark_path: str | None, corpus_path: str | None,
                 systems: tuple[str, ...], k: int, embed: str, chat: str,
                 out: str | None, json_out: str | None) -> None:
    """Run benchmark systems and report retrieval and label metrics."""
    wanted = list(SYSTEMS) if "all" in systems else list(dict.fromkeys(systems))
    corpus = _load_corpus(corpus_path)
    samples = load_benchmark(benchmark_path or _bundled("benchmark_fixture.csv"))
    embed_provider = make_embedding_provider(embed)
    chat_provider = make_chat_provider(chat)
    synonyms = load_synonyms(_bundled("synonyms.json"))

    reports = {}
    for system in wanted:
        reports[system] = evaluate_system(
            system, samples, corpus, embed_provider=embed_provider,
            chat_provider=chat_provider, k=k, synonyms=synonyms)
        click.echo(f"evaluated {system} on {len(samples)} sample(s)", err=True)

    lines = [
        "| System | Top-1 recall | Top-5 recall | Applicability acc. "
        "| Sample-level acc. |",
        "| --- | --- | --- | --- | --- |",
    ]
    for system in wanted:
        report = reports[system]
        lines.append(
            f"| {system} | {report.top1_recall:.4f} | {report.top5_recall:.4f} "
            f"| {report.applicability_accuracy:.4f} "
            f"| {report.sample_level_accuracy:.4f} |")

    t_tests = {}
    if "rag" in reports:
        def label_fractions(report):
            return [s["label_correct_rows"] / s["gold_rows"]
                    for s in report.per_sample]

        for system in wanted:
            if system == "rag":
                continue
            result = paired_t_test(label_fractions(reports["rag"]),
                                   label_fractions(reports[system]))
            t_tests[f"rag_vs_{system}"] = result.to_dict()
            suffix = " (degenerate)" if result.degenerate else ""
            lines.append("")
            lines.append(f"Paired t-test rag vs {system}: "
                         f"t={result.t_value:.4f}, p={result.p_value:.4f}, "
                         f"n={result.n}{suffix}")

    rendered = "\n".join(lines) + "\n"
    click.echo(rendered, nl=False)
    if out:
        Path(out).write_text(rendered, encoding="utf-8")
    if json_out:
        payload = {"reports": {s: r.to_dict() for s, r in reports.items()},
                   "t_tests": t_tests}
        Path(json_out).write_text(
            json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2)
            + "\n", encoding="utf-8")


def main() -> None:
    try:
        cli(standalone_mode=True)
    except RegJudgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()

"""Command-line entry point. Each subcommand is a thin dispatch into the
pipeline stages or the HTTP service; all logic lives in the core package."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import click

from . import modeling
from .pipeline import (
    PipelineConfig,
    emit_histogram,
    run_pipeline,
    stage_assemble,
    stage_build_kg,
    stage_generate,
    stage_responses,
    stage_signals,
    stage_train,
)

logger = logging.getLogger(__name__)


def _config(config_path: str | None, **overrides) -> PipelineConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if config_path:
        return PipelineConfig.from_yaml(config_path, **overrides)
    return PipelineConfig(**overrides)


def _echo_summary(name: str, summary: dict) -> None:
    click.echo(f"{name}: " + json.dumps(summary, sort_keys=True))


@click.group()
@click.option("--verbose", is_flag=True, help="Enable debug logging.")
def cli(verbose: bool) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("build-kg")
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), help="Corpus directory of .txt files.")
@click.option("--out", "graph_path", type=click.Path(), help="Output graph file.")
@click.option("--backend", type=click.Choice(["stub", "live"]), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def build_kg_command(corpus_dir, graph_path, backend, config_path) -> None:
    """Extract triples from a corpus and write the merged graph."""
    config = _config(config_path, corpus_dir=corpus_dir, graph_path=graph_path, backend=backend)
    _echo_summary("build-kg", stage_build_kg(config))


@cli.command("generate")
@click.option("--graph", "graph_path", type=click.Path(exists=True), help="Graph file.")
@click.option("--keys", type=int, default=None, help="Number of key nodes to target.")
@click.option("--per-key", type=int, default=None, help="Questions attempted per key.")
@click.option("--max-depth", type=int, default=None, help="Distractor search depth.")
@click.option("--seed", type=int, default=None)
@click.option("--backend", type=click.Choice(["stub", "live"]), default=None)
@click.option("--out", "mcq_path", type=click.Path(), help="Output question file.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def generate_command(graph_path, keys, per_key, max_depth, seed, backend, mcq_path, config_path) -> None:
    """Generate validated questions from the graph."""
    config = _config(
        config_path, graph_path=graph_path, keys=keys, per_key=per_key,
        max_depth=max_depth, seed=seed, backend=backend, mcq_path=mcq_path,
    )
    _echo_summary("generate", stage_generate(config))


@cli.command("signals")
@click.option("--graph", "graph_path", type=click.Path(exists=True))
@click.option("--mcqs", "mcq_path", type=click.Path(exists=True))
@click.option("--out", "signals_path", type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--backend", type=click.Choice(["stub", "live"]), default=None)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def signals_command(graph_path, mcq_path, signals_path, seed, backend, config_path) -> None:
    """Compute the nine difficulty signals for every question."""
    config = _config(
        config_path, graph_path=graph_path, mcq_path=mcq_path,
        signals_path=signals_path, seed=seed, backend=backend,
    )
    _echo_summary("signals", stage_signals(config))


@cli.command("serve")
@click.option("--graph", "graph_path", type=click.Path(exists=True), required=True)
@click.option("--mcqs", "mcq_path", type=click.Path(exists=True), required=True)
@click.option("--log", "log_path", type=click.Path(), required=True, help="Append-only response log.")
@click.option("--signals", "signals_path", type=click.Path(), default=None)
@click.option("--frontend", "frontend_dir", type=click.Path(), default=None, help="Static frontend build to serve.")
@click.option("--option-seed", type=int, default=0)
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve_command(graph_path, mcq_path, log_path, signals_path, frontend_dir, option_seed, host, port) -> None:
    """Run the quiz/response HTTP service."""
    import uvicorn

    from .service import QuizState, create_app

    state = QuizState.from_files(
        graph_path, mcq_path, log_path=log_path,
        signals_path=signals_path, option_seed=option_seed,
    )
    app = create_app(state, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port)


@cli.command("assemble")
@click.option("--graph", "graph_path", type=click.Path(exists=True))
@click.option("--mcqs", "mcq_path", type=click.Path(exists=True))
@click.option("--signals", "signals_path", type=click.Path(exists=True))
@click.option("--responses", "responses_path", type=click.Path())
@click.option("--out", "dataset_path", type=click.Path())
@click.option("--outlier-threshold", type=float, default=None)
@click.option("--simulate", "simulate_first", is_flag=True, help="Simulate responses when the log is missing.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def assemble_command(graph_path, mcq_path, signals_path, responses_path, dataset_path,
                     outlier_threshold, simulate_first, config_path) -> None:
    """Join signals with response labels into the modeling dataset."""
    config = _config(
        config_path, graph_path=graph_path, mcq_path=mcq_path, signals_path=signals_path,
        responses_path=responses_path, dataset_path=dataset_path,
        outlier_threshold=outlier_threshold,
    )
    if simulate_first and not Path(config.responses_path).exists():
        _echo_summary("responses", stage_responses(config))
    _echo_summary("assemble", stage_assemble(config))


@cli.command("train")
@click.option("--data", "dataset_path", type=click.Path(exists=True), required=True,
              help="Signals+labels table.")
@click.option("--model", "model_kind", type=click.Choice(list(modeling.MODEL_KINDS)), default="gbt2")
@click.option("--seed", type=int, default=42)
@click.option("--exclude", multiple=True, help="Signal name(s) to drop before training.")
@click.option("--report", "report_dir", type=click.Path(), required=True)
def train_command(dataset_path, model_kind, seed, exclude, report_dir) -> None:
    """Train one model on an 80/20 split and write its evaluation report."""
    dataset = modeling.load_labeled_csv(dataset_path)
    excluded = modeling.resolve_feature_names(list(exclude))
    model, report, (test_idx, predictions) = modeling.train_and_evaluate(
        dataset, model_kind, seed=seed, excluded=excluded
    )
    points = {model_kind: (dataset.y[test_idx], predictions)}
    modeling.emit_reports([report], report_dir, points)
    if model_kind in ("gbt", "gbt2"):
        names = dataset.without_features(excluded).feature_names if excluded else dataset.feature_names
        importances = modeling.feature_importance(model, names)
        Path(report_dir, "importances.json").write_text(
            json.dumps({"gain": {model_kind: importances}}, sort_keys=True, indent=2) + "\n"
        )
    _echo_summary("train", report.to_dict())


@cli.command("ablate")
@click.option("--data", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--grid", type=click.Choice(["default"]), default="default")
@click.option("--model", "model_kind", type=click.Choice(list(modeling.MODEL_KINDS)), default="gbt2")
@click.option("--seed", type=int, default=42)
@click.option("--report", "report_dir", type=click.Path(), required=True)
def ablate_command(dataset_path, grid, model_kind, seed, report_dir) -> None:
    """Retrain with signals excluded per the default grid and compare."""
    dataset = modeling.load_labeled_csv(dataset_path)
    results = modeling.ablation(dataset, model_kind=model_kind, seed=seed)
    reports = [report for _, report in results]
    modeling.emit_reports(reports, report_dir)
    baseline = reports[0]
    improved = [
        r for r in reports[1:]
        if r.rmse <= baseline.rmse or r.mae <= baseline.mae
    ]
    click.echo(f"ablate: {len(reports)} runs, {len(improved)} at or above baseline")


@cli.command("report")
@click.option("--data", "dataset_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def report_command(dataset_path, out_dir) -> None:
    """Emit the difficulty-label histogram for a labeled dataset."""
    dataset = modeling.load_labeled_csv(dataset_path)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    data = emit_histogram(dataset.y, Path(out_dir) / "difficulty_histogram.json")
    _echo_summary("report", {"total": data["total"], "bins": data["bins"]})


@cli.command("run-all")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--corpus", "corpus_dir", type=click.Path(exists=True), default=None)
@click.option("--work-dir", type=click.Path(), default=None)
@click.option("--backend", type=click.Choice(["stub", "live"]), default=None)
@click.option("--seed", type=int, default=None)
@click.option("--force", is_flag=True, help="Re-run stages even when artifacts exist.")
def run_all_command(config_path, corpus_dir, work_dir, backend, seed, force) -> None:
    """Run the full pipeline: build, generate, signals, labels, train."""
    config = _config(config_path, corpus_dir=corpus_dir, work_dir=work_dir,
                     backend=backend, seed=seed)
    report = run_pipeline(config, force=force)
    for stage in report["stages"]:
        _echo_summary(stage["stage"], stage.get("summary", {"status": stage["status"]}))


def main() -> None:
    cli()


if __name__ == "__main__":
    main()

"""Staged pipeline: corpus -> graph -> questions -> signals -> labels -> models.

Each stage writes one artifact file and is skipped on rerun when its artifact
already exists, so long generation stages never force a full redo. Under the
stub backend the whole run is a pure function of (inputs, config, seeds); no
artifact embeds wall-clock state.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import modeling, signals as signal_engine
from .builder import build_kg, ingest_documents
from .embeddings import HashingTextEmbedder, LiveTextEmbedder, TextEmbedder, fastrp_embed
from .gateway import ChatBackend, LiveChatBackend, StubChatBackend
from .generator import GenerationConfig, generate_all, load_mcqs, save_mcqs
from .graph import KnowledgeGraph
from .modeling import LabeledDataset, ModelReport, train_and_evaluate
from .responses import QuizItem, ResponseStore, simulate_responses
from .signals import RawSignals, SignalError

logger = logging.getLogger(__name__)

STAGES = ("build-kg", "generate", "signals", "responses", "assemble", "train")


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    corpus_dir: str = "corpus"
    work_dir: str = "artifacts"
    graph_path: str = ""
    mcq_path: str = ""
    signals_path: str = ""
    responses_path: str = ""
    dataset_path: str = ""
    report_dir: str = ""
    backend: str = "stub"
    chat_endpoint: str = ""
    chat_model: str = ""
    embed_endpoint: str = ""
    embed_model: str = ""
    credential_env: str = "KGQUIZ_API_KEY"
    fixture_dir: str = ""
    seed: int = 42
    option_seed: int = 0
    keys: int = 40
    per_key: int = 4
    max_depth: int = 5
    retries: int = 3
    chunk_budget: int = 4000
    embed_dim: int = 128
    embed_iteration_weights: tuple[float, ...] = (0.0, 1.0, 1.0)
    text_dim: int = 256
    outlier_threshold: Optional[float] = 0.97
    split_ratio: float = 0.8
    split_seed: int = 42
    simulate_responses: int = 38
    simulate_seed: int = 7

    def __post_init__(self) -> None:
        work = Path(self.work_dir)
        self.graph_path = self.graph_path or str(work / "graph.jsonl")
        self.mcq_path = self.mcq_path or str(work / "mcqs.jsonl")
        self.signals_path = self.signals_path or str(work / "signals.csv")
        self.responses_path = self.responses_path or str(work / "responses.jsonl")
        self.dataset_path = self.dataset_path or str(work / "dataset.csv")
        self.report_dir = self.report_dir or str(work / "reports")
        self.validate()

    def validate(self) -> None:
        if self.keys < 1:
            raise ConfigError(f"keys must be >= 1, got {self.keys}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.backend not in ("stub", "live"):
            raise ConfigError(f"backend must be 'stub' or 'live', got {self.backend!r}")
        paths = [self.graph_path, self.mcq_path, self.signals_path,
                 self.responses_path, self.dataset_path]
        if len(set(paths)) != len(paths):
            raise ConfigError("artifact paths must be pairwise distinct")

    @classmethod
    def from_yaml(cls, path: str | Path, **overrides) -> "PipelineConfig":
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must contain a mapping")
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        if "embed_iteration_weights" in data:
            data["embed_iteration_weights"] = tuple(data["embed_iteration_weights"])
        return cls(**data)

    def generation_config(self) -> GenerationConfig:
        return GenerationConfig(
            keys=self.keys,
            per_key=self.per_key,
            max_depth=self.max_depth,
            retries=self.retries,
            seed=self.seed,
        )


def make_chat_backend(config: PipelineConfig) -> ChatBackend:
    if config.backend == "stub":
        fixture_dir = Path(config.fixture_dir) if config.fixture_dir else None
        return StubChatBackend(fixture_dir=fixture_dir)
    import os

    if not os.environ.get(config.credential_env):
        raise ConfigError(
            f"live backend needs a credential in environment variable {config.credential_env!r}"
        )
    if not config.chat_endpoint or not config.chat_model:
        raise ConfigError("live backend needs chat_endpoint and chat_model")
    return LiveChatBackend(
        endpoint=config.chat_endpoint,
        model=config.chat_model,
        credential_env=config.credential_env,
    )


def make_text_backend(config: PipelineConfig) -> TextEmbedder:
    if config.backend == "stub" or not config.embed_endpoint:
        return HashingTextEmbedder(dim=config.text_dim)
    return LiveTextEmbedder(
        endpoint=config.embed_endpoint,
        model=config.embed_model,
        credential_env=config.credential_env,
    )


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_build_kg(config: PipelineConfig) -> dict:
    corpus = sorted(Path(config.corpus_dir).glob("*.txt"))
    documents = ingest_documents(corpus, chunk_budget=config.chunk_budget)
    graph, report = build_kg(documents, make_chat_backend(config))
    graph.save(config.graph_path)
    report_path = Path(config.graph_path).with_suffix(".report.json")
    report_path.write_text(json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n")
    return {
        "documents": report.documents,
        "nodes": len(graph),
        "edges": len(graph.edges),
        "triples_kept": report.triples_kept,
        "triples_dropped": report.triples_dropped,
    }


def stage_generate(config: PipelineConfig) -> dict:
    graph = KnowledgeGraph.load(config.graph_path).freeze()
    result = generate_all(graph, config.generation_config(), make_chat_backend(config))
    save_mcqs(result.mcqs, config.mcq_path)
    report_path = Path(config.mcq_path).with_suffix(".report.json")
    report_path.write_text(json.dumps(result.to_report(), sort_keys=True, indent=2) + "\n")
    return {"generated": len(result.mcqs), "aborted": len(result.aborts)}


def compute_signal_rows(
    config: PipelineConfig,
    graph: KnowledgeGraph,
    mcqs,
) -> tuple[list[tuple[str, RawSignals, np.ndarray]], list[str]]:
    """Raw and stage-normalized signals per question; failures are skipped."""
    node_table = fastrp_embed(
        graph,
        dim=config.embed_dim,
        iteration_weights=config.embed_iteration_weights,
        seed=config.seed,
    )
    text_backend = make_text_backend(config)
    chat_backend = make_chat_backend(config)
    raw_by_id: dict[str, RawSignals] = {}
    skipped: list[str] = []
    for mcq in mcqs:
        try:
            raw_by_id[mcq.id] = signal_engine.compute_all(
                mcq, graph, node_table, text_backend, chat_backend
            )
        except SignalError as exc:
            logger.warning("skipping %s: %s", mcq.id, exc)
            skipped.append(mcq.id)
    if not raw_by_id:
        raise ValueError("no signals could be computed")
    params = signal_engine.fit_normalization(list(raw_by_id.values()))
    rows = [
        (mcq_id, raw, signal_engine.apply_normalization(raw, params))
        for mcq_id, raw in raw_by_id.items()
    ]
    return rows, skipped


def stage_signals(config: PipelineConfig) -> dict:
    graph = KnowledgeGraph.load(config.graph_path).freeze()
    mcqs = load_mcqs(config.mcq_path)
    rows, skipped = compute_signal_rows(config, graph, mcqs)
    signal_engine.write_signals_csv(config.signals_path, rows)
    return {"signal_rows": len(rows), "skipped": len(skipped)}


def _quiz_items(config: PipelineConfig) -> list[QuizItem]:
    graph = KnowledgeGraph.load(config.graph_path).freeze()
    return [QuizItem.from_mcq(mcq, graph) for mcq in load_mcqs(config.mcq_path)]


def stage_responses(config: PipelineConfig) -> dict:
    """Simulate responses when no collected log exists yet."""
    path = Path(config.responses_path)
    if path.exists():
        return {"responses": sum(1 for _ in open(path)), "source": "existing"}
    store = ResponseStore(_quiz_items(config), log_path=path, option_seed=config.option_seed)
    written = simulate_responses(
        store, n_per_mcq=config.simulate_responses, seed=config.simulate_seed
    )
    return {"responses": written, "source": "simulated"}


def stage_assemble(config: PipelineConfig) -> dict:
    graph = KnowledgeGraph.load(config.graph_path).freeze()
    mcqs = load_mcqs(config.mcq_path)
    store = ResponseStore(
        [QuizItem.from_mcq(m, graph) for m in mcqs],
        log_path=config.responses_path,
        option_seed=config.option_seed,
    )
    raw_rows = read_raw_signals(config.signals_path)
    dataset = modeling.assemble_dataset(
        [m.id for m in mcqs],
        raw_rows,
        store.label_table(),
        exclude_outlier_threshold=config.outlier_threshold,
    )
    write_dataset_csv(dataset, config.dataset_path)
    return {"rows": len(dataset)}


def stage_train(config: PipelineConfig) -> dict:
    dataset = modeling.load_labeled_csv(config.dataset_path)
    reports: list[ModelReport] = []
    points = {}
    gain_importances = {}
    permutation_importances = {}
    for kind in modeling.MODEL_KINDS:
        model, report, (test_idx, predictions) = train_and_evaluate(
            dataset, kind, seed=config.split_seed, ratio=config.split_ratio
        )
        reports.append(report)
        points[kind] = (dataset.y[test_idx], predictions)
        if kind in ("gbt", "gbt2"):
            gain_importances[kind] = modeling.feature_importance(model, dataset.feature_names)
        permutation_importances[kind] = modeling.permutation_importance(
            model,
            dataset.X[test_idx],
            dataset.y[test_idx],
            dataset.feature_names,
            seed=config.split_seed,
        )
    out_dir = Path(config.report_dir)
    modeling.emit_reports(reports, out_dir, points)
    (out_dir / "importances.json").write_text(
        json.dumps(
            {"gain": gain_importances, "permutation": permutation_importances},
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )
    emit_histogram(dataset.y, out_dir / "difficulty_histogram.json")
    return {"models": len(reports), "rows": len(dataset)}


_STAGE_FUNCTIONS = {
    "build-kg": (stage_build_kg, lambda c: c.graph_path),
    "generate": (stage_generate, lambda c: c.mcq_path),
    "signals": (stage_signals, lambda c: c.signals_path),
    "responses": (stage_responses, lambda c: c.responses_path),
    "assemble": (stage_assemble, lambda c: c.dataset_path),
    "train": (stage_train, lambda c: str(Path(c.report_dir) / "metrics.json")),
}


def run_pipeline(config: PipelineConfig, force: bool = False) -> dict:
    """Run every stage in order, skipping ones whose artifact already exists.

    The run report is written beside the artifacts and contains no timestamps
    so reruns with identical inputs produce identical bytes.
    """
    if config.backend == "live":
        import os

        if not os.environ.get(config.credential_env):
            raise ConfigError(
                f"live backend needs a credential in environment variable {config.credential_env!r}"
            )
    Path(config.work_dir).mkdir(parents=True, exist_ok=True)
    stage_reports = []
    for name in STAGES:
        function, artifact_of = _STAGE_FUNCTIONS[name]
        artifact = artifact_of(config)
        if not force and Path(artifact).exists():
            stage_reports.append({"stage": name, "status": "skipped", "artifact": artifact})
            logger.info("stage %s skipped; %s exists", name, artifact)
            continue
        try:
            summary = function(config)
        except Exception as exc:
            raise PipelineError(name, exc) from exc
        stage_reports.append(
            {"stage": name, "status": "ran", "artifact": artifact, "summary": summary}
        )
        logger.info("stage %s done: %s", name, summary)
    report = {"stages": stage_reports, "seed": config.seed, "backend": config.backend}
    report_path = Path(config.work_dir) / "run_report.json"
    report_path.write_text(json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report


def emit_histogram(labels: np.ndarray, out_path: str | Path, bins: int = 20) -> dict:
    """Bin counts of the difficulty labels over [0, 1], as a plot-data file."""
    labels = np.asarray(labels, float)
    if labels.size == 0:
        raise ValueError("cannot build a histogram from an empty dataset")
    counts, edges = np.histogram(labels, bins=bins, range=(0.0, 1.0))
    data = {
        "bins": bins,
        "counts": [int(c) for c in counts],
        "edges": [float(e) for e in edges],
        "total": int(labels.size),
    }
    Path(out_path).write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")
    return data


# ---------------------------------------------------------------------------
# Dataset file helpers
# ---------------------------------------------------------------------------


def read_raw_signals(path: str | Path) -> dict[str, RawSignals]:
    """Raw signal rows keyed by question id, from a signals table."""
    rows = signal_engine.read_signals_csv(path)
    result = {}
    for row in rows:
        values = {name: float(row[f"raw_{name}"]) for name in signal_engine.SIGNAL_NAMES}
        for name in ("reasoning", "extra_triple", "above_largest_gap_count", "llm_extra_fact"):
            values[name] = int(values[name])
        result[row["mcq_id"]] = RawSignals(**values)
    return result


def write_dataset_csv(dataset: LabeledDataset, path: str | Path) -> None:
    """Labeled modeling table: id, nine normalized features, labels."""
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mcq_id", *dataset.feature_names, "difficulty", "liking"])
        for i, mcq_id in enumerate(dataset.mcq_ids):
            row = [mcq_id]
            row += [repr(float(v)) for v in dataset.X[i]]
            row.append(repr(float(dataset.y[i])))
            liking = dataset.liking[i]
            row.append("" if np.isnan(liking) else repr(float(liking)))
            writer.writerow(row)

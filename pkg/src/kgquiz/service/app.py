"""HTTP service over the core package: quiz delivery, response collection,
statistics, dataset export, and pipeline stage triggers.

The quiz endpoints never reveal which option is correct; the correct flag is
derived and stored server-side only.
"""

from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .. import modeling
from ..generator import load_mcqs
from ..graph import KnowledgeGraph
from ..pipeline import (
    PipelineConfig,
    PipelineError,
    run_pipeline,
    stage_assemble,
    stage_build_kg,
    stage_generate,
    stage_responses,
    stage_signals,
    stage_train,
)
from ..responses import (
    DuplicateResponseError,
    InsufficientDataError,
    NotPresentedError,
    QuizItem,
    ResponseStore,
    UnknownMcqError,
)
from ..signals import SIGNAL_NAMES

logger = logging.getLogger(__name__)


class QuizState:
    """Everything the quiz endpoints need: items, store, optional signals."""

    def __init__(
        self,
        store: ResponseStore,
        signals_path: Optional[str | Path] = None,
        outlier_threshold: Optional[float] = None,
    ):
        self.store = store
        self.signals_path = Path(signals_path) if signals_path else None
        self.outlier_threshold = outlier_threshold

    @classmethod
    def from_files(
        cls,
        graph_path: str | Path,
        mcq_path: str | Path,
        log_path: Optional[str | Path] = None,
        signals_path: Optional[str | Path] = None,
        option_seed: int = 0,
    ) -> "QuizState":
        graph = KnowledgeGraph.load(graph_path).freeze()
        items = [QuizItem.from_mcq(m, graph) for m in load_mcqs(mcq_path)]
        store = ResponseStore(items, log_path=log_path, option_seed=option_seed)
        return cls(store=store, signals_path=signals_path)


# -- request/response models -------------------------------------------------


class ProgressModel(BaseModel):
    answered: int
    total: int


class NextQuestionModel(BaseModel):
    complete: bool = False
    mcq_id: Optional[str] = None
    stem: Optional[str] = None
    options: Optional[list[str]] = None
    progress: Optional[ProgressModel] = None


class ResponseSubmission(BaseModel):
    session: str = Field(min_length=1)
    mcq_id: str = Field(min_length=1)
    option: int = Field(ge=0, le=3)
    liking: Optional[int] = Field(default=None, ge=0, le=100)
    # Client retry tag; accepted but unused since (session, mcq_id) dedups.
    client_ref: Optional[str] = None


class ResponseAck(BaseModel):
    recorded: bool
    mcq_id: str


class McqStatsModel(BaseModel):
    mcq_id: str
    responses: int
    incorrect_rate: Optional[float]
    mean_liking: Optional[float]


class CorpusStatsModel(BaseModel):
    mcqs_with_responses: int
    responses: int
    mean_incorrect_rate: float
    liking_difficulty_pearson: Optional[float]
    liking_difficulty_spearman: Optional[float]
    histogram: list[int]
    bin_edges: list[float]


class PipelineRequest(BaseModel):
    config_path: Optional[str] = None
    overrides: dict = Field(default_factory=dict)
    force: bool = False


class StageResult(BaseModel):
    stage: str
    summary: dict


_STAGES = {
    "build-kg": stage_build_kg,
    "generate": stage_generate,
    "signals": stage_signals,
    "responses": stage_responses,
    "assemble": stage_assemble,
    "train": stage_train,
}


def _load_config(request: PipelineRequest) -> PipelineConfig:
    if request.config_path:
        return PipelineConfig.from_yaml(request.config_path, **request.overrides)
    return PipelineConfig(**request.overrides)


def create_app(state: Optional[QuizState] = None, frontend_dir: Optional[str | Path] = None) -> FastAPI:
    app = FastAPI(title="kgquiz", version="0.1.0")

    def quiz_state() -> QuizState:
        if state is None:
            raise HTTPException(status_code=503, detail="no quiz loaded on this server")
        return state

    @app.get("/api/health")
    def health() -> dict:
        return {"status": "ok", "questions": len(state.store.items) if state else 0}

    @app.get("/api/quiz/next", response_model=NextQuestionModel)
    def quiz_next(session: str = Query(min_length=1)) -> NextQuestionModel:
        question = quiz_state().store.next_question(session)
        if question is None:
            total = len(quiz_state().store.items)
            return NextQuestionModel(
                complete=True, progress=ProgressModel(answered=total, total=total)
            )
        return NextQuestionModel(complete=False, **question)

    @app.post("/api/response", response_model=ResponseAck)
    def submit_response(submission: ResponseSubmission) -> ResponseAck:
        store = quiz_state().store
        try:
            store.record_response(
                submission.session,
                submission.mcq_id,
                submission.option,
                liking=submission.liking,
            )
        except UnknownMcqError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except DuplicateResponseError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except NotPresentedError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return ResponseAck(recorded=True, mcq_id=submission.mcq_id)

    @app.get("/api/mcq/{mcq_id}/stats", response_model=McqStatsModel)
    def mcq_stats(mcq_id: str) -> McqStatsModel:
        try:
            stats = quiz_state().store.mcq_stats(mcq_id)
        except UnknownMcqError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return McqStatsModel(**stats.to_dict())

    @app.get("/api/corpus/stats", response_model=CorpusStatsModel)
    def corpus_stats() -> CorpusStatsModel:
        try:
            stats = quiz_state().store.corpus_stats()
        except InsufficientDataError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return CorpusStatsModel(**stats.to_dict())

    @app.get("/api/export", response_class=PlainTextResponse)
    def export_dataset() -> str:
        """The labeled dataset in the modeling input format (CSV)."""
        current = quiz_state()
        if current.signals_path is None or not current.signals_path.exists():
            raise HTTPException(status_code=404, detail="no signals table configured")
        from ..pipeline import read_raw_signals, write_dataset_csv

        raw = read_raw_signals(current.signals_path)
        labels = current.store.label_table()
        try:
            dataset = modeling.assemble_dataset(
                list(current.store.item_order),
                raw,
                labels,
                exclude_outlier_threshold=current.outlier_threshold,
            )
        except modeling.ModelingError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        buffer = io.StringIO()
        import csv as _csv
        import math

        writer = _csv.writer(buffer)
        writer.writerow(["mcq_id", *SIGNAL_NAMES, "difficulty", "liking"])
        for i, mcq_id in enumerate(dataset.mcq_ids):
            liking = float(dataset.liking[i])
            writer.writerow(
                [mcq_id]
                + [repr(float(v)) for v in dataset.X[i]]
                + [repr(float(dataset.y[i])), "" if math.isnan(liking) else repr(liking)]
            )
        return buffer.getvalue()

    @app.post("/api/pipeline/run")
    def pipeline_run(request: PipelineRequest) -> dict:
        try:
            return run_pipeline(_load_config(request), force=request.force)
        except (PipelineError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

    @app.post("/api/pipeline/{stage}", response_model=StageResult)
    def pipeline_stage(stage: str, request: PipelineRequest) -> StageResult:
        function = _STAGES.get(stage)
        if function is None:
            raise HTTPException(status_code=404, detail=f"unknown stage {stage!r}")
        try:
            summary = function(_load_config(request))
        except Exception as exc:
            raise HTTPException(status_code=400, detail=f"stage {stage} failed: {exc}") from exc
        return StageResult(stage=stage, summary=summary)

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="frontend")

    return app

"""Response collection: serve questions, record answers, derive difficulty.

The store keeps an append-only line-delimited JSON log that fully replays on
startup. Option order is a seeded permutation per (session, question) so
re-presenting is stable, and the correct flag is derived server-side from the
chosen position. The incorrect-answer rate per question is the empirical
difficulty label.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .generator import Mcq
from .graph import KnowledgeGraph
from .metrics import pearson, spearman
from .seeds import derive_rng

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 20


class UnknownMcqError(LookupError):
    pass


class DuplicateResponseError(RuntimeError):
    pass


class NotPresentedError(RuntimeError):
    pass


class InsufficientDataError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuizItem:
    """One servable question: display strings only, key position not fixed."""

    mcq_id: str
    stem: str
    key_name: str
    distractor_names: tuple[str, str, str]

    @classmethod
    def from_mcq(cls, mcq: Mcq, graph: KnowledgeGraph) -> "QuizItem":
        return cls(
            mcq_id=mcq.id,
            stem=mcq.stem,
            key_name=graph.node(mcq.key).name,
            distractor_names=tuple(graph.node(d).name for d in mcq.distractors),
        )


@dataclass(frozen=True)
class ResponseRecord:
    mcq_id: str
    session: str
    option_index: int
    correct: bool
    liking: Optional[int]  # 0..100 integer scale as submitted
    timestamp: float

    def to_dict(self) -> dict:
        return {
            "mcq_id": self.mcq_id,
            "session": self.session,
            "option_index": self.option_index,
            "correct": self.correct,
            "liking": self.liking,
            "timestamp": self.timestamp,
        }


@dataclass
class McqStats:
    mcq_id: str
    responses: int
    incorrect_rate: Optional[float]
    mean_liking: Optional[float]

    def to_dict(self) -> dict:
        return {
            "mcq_id": self.mcq_id,
            "responses": self.responses,
            "incorrect_rate": self.incorrect_rate,
            "mean_liking": self.mean_liking,
        }


@dataclass
class CorpusStats:
    mcqs_with_responses: int
    responses: int
    mean_incorrect_rate: float
    liking_difficulty_pearson: Optional[float]
    liking_difficulty_spearman: Optional[float]
    histogram: list[int]
    bin_edges: list[float]

    def to_dict(self) -> dict:
        return {
            "mcqs_with_responses": self.mcqs_with_responses,
            "responses": self.responses,
            "mean_incorrect_rate": self.mean_incorrect_rate,
            "liking_difficulty_pearson": self.liking_difficulty_pearson,
            "liking_difficulty_spearman": self.liking_difficulty_spearman,
            "histogram": self.histogram,
            "bin_edges": self.bin_edges,
        }


class ResponseStore:
    """Append-only response log over a fixed set of quiz items.

    Writes are serialized through one lock; reads only see committed records.
    """

    def __init__(
        self,
        items: list[QuizItem],
        log_path: Optional[str | Path] = None,
        option_seed: int = 0,
    ):
        self.items: dict[str, QuizItem] = {}
        self.item_order: list[str] = []
        for item in items:
            if item.mcq_id in self.items:
                raise ValueError(f"duplicate question id {item.mcq_id!r}")
            self.items[item.mcq_id] = item
            self.item_order.append(item.mcq_id)
        self.option_seed = option_seed
        self.log_path = Path(log_path) if log_path is not None else None
        self._records: list[ResponseRecord] = []
        self._answered: set[tuple[str, str]] = set()
        self._presented: set[tuple[str, str]] = set()
        self._lock = threading.Lock()
        if self.log_path is not None and self.log_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.log_path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                data = json.loads(line)
                record = ResponseRecord(
                    mcq_id=data["mcq_id"],
                    session=data["session"],
                    option_index=int(data["option_index"]),
                    correct=bool(data["correct"]),
                    liking=data.get("liking"),
                    timestamp=float(data.get("timestamp", 0.0)),
                )
                self._records.append(record)
                self._answered.add((record.session, record.mcq_id))
                self._presented.add((record.session, record.mcq_id))
        logger.info("replayed %d response(s) from %s", len(self._records), self.log_path)

    # -- serving --------------------------------------------------------

    def options_for(self, session: str, mcq_id: str) -> tuple[list[str], int]:
        """Shuffled display options and the key's position for one pairing."""
        item = self._item(mcq_id)
        rng = derive_rng("options", self.option_seed, session, mcq_id)
        names = [item.key_name, *item.distractor_names]
        order = rng.permutation(4)
        options = [names[i] for i in order]
        key_position = int(np.flatnonzero(order == 0)[0])
        return options, key_position

    def next_question(self, session: str) -> Optional[dict]:
        """The least-answered question this session has not answered yet.

        Returns None when the session has answered everything.
        """
        counts = self.response_counts()
        remaining = [
            mcq_id
            for mcq_id in self.item_order
            if (session, mcq_id) not in self._answered
        ]
        if not remaining:
            return None
        chosen = min(remaining, key=lambda mcq_id: (counts.get(mcq_id, 0), mcq_id))
        options, _ = self.options_for(session, chosen)
        with self._lock:
            self._presented.add((session, chosen))
        answered = sum(1 for s, _ in self._answered if s == session)
        return {
            "mcq_id": chosen,
            "stem": self.items[chosen].stem,
            "options": options,
            "progress": {"answered": answered, "total": len(self.items)},
        }

    def record_response(
        self,
        session: str,
        mcq_id: str,
        option_index: int,
        liking: Optional[int] = None,
        enforce_presented: bool = True,
        timestamp: Optional[float] = None,
    ) -> ResponseRecord:
        """Persist one answer; duplicates for the same (session, mcq) conflict."""
        self._item(mcq_id)
        if not 0 <= option_index <= 3:
            raise ValueError(f"option index must be 0..3, got {option_index}")
        if liking is not None and not 0 <= int(liking) <= 100:
            raise ValueError(f"liking must be 0..100, got {liking}")
        _, key_position = self.options_for(session, mcq_id)
        record = ResponseRecord(
            mcq_id=mcq_id,
            session=session,
            option_index=int(option_index),
            correct=int(option_index) == key_position,
            liking=None if liking is None else int(liking),
            timestamp=time.time() if timestamp is None else timestamp,
        )
        with self._lock:
            pair = (session, mcq_id)
            if pair in self._answered:
                raise DuplicateResponseError(f"session {session!r} already answered {mcq_id!r}")
            if enforce_presented and pair not in self._presented:
                raise NotPresentedError(f"{mcq_id!r} was not presented to session {session!r}")
            self._append(record)
            self._answered.add(pair)
            self._presented.add(pair)
        return record

    def _append(self, record: ResponseRecord) -> None:
        self._records.append(record)
        if self.log_path is not None:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record.to_dict(), sort_keys=True))
                fh.write("\n")

    def _item(self, mcq_id: str) -> QuizItem:
        try:
            return self.items[mcq_id]
        except KeyError:
            raise UnknownMcqError(f"unknown question id {mcq_id!r}") from None

    # -- statistics -------------------------------------------------------

    @property
    def records(self) -> list[ResponseRecord]:
        return list(self._records)

    def response_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for record in self._records:
            counts[record.mcq_id] = counts.get(record.mcq_id, 0) + 1
        return counts

    def mcq_stats(self, mcq_id: str) -> McqStats:
        self._item(mcq_id)
        relevant = [r for r in self._records if r.mcq_id == mcq_id]
        if not relevant:
            return McqStats(mcq_id=mcq_id, responses=0, incorrect_rate=None, mean_liking=None)
        incorrect = sum(1 for r in relevant if not r.correct)
        likings = [r.liking for r in relevant if r.liking is not None]
        return McqStats(
            mcq_id=mcq_id,
            responses=len(relevant),
            incorrect_rate=incorrect / len(relevant),
            mean_liking=(sum(likings) / len(likings) / 100.0) if likings else None,
        )

    def label_table(self) -> dict[str, tuple[int, int, Optional[float]]]:
        """Per question: (total, incorrect, mean liking in [0,1] or None)."""
        table = {}
        for mcq_id in self.item_order:
            stats = self.mcq_stats(mcq_id)
            if stats.responses == 0:
                continue
            incorrect = round(stats.incorrect_rate * stats.responses)
            table[mcq_id] = (stats.responses, int(incorrect), stats.mean_liking)
        return table

    def corpus_stats(self) -> CorpusStats:
        per_mcq = [self.mcq_stats(mcq_id) for mcq_id in self.item_order]
        labeled = [s for s in per_mcq if s.responses > 0]
        if len(labeled) < 2:
            raise InsufficientDataError(
                f"need at least 2 questions with responses, have {len(labeled)}"
            )
        rates = np.array([s.incorrect_rate for s in labeled])
        counts, edges = np.histogram(rates, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
        both = [(s.mean_liking, s.incorrect_rate) for s in labeled if s.mean_liking is not None]
        corr_pearson = corr_spearman = None
        if len(both) >= 2:
            likings = np.array([b[0] for b in both])
            difficulties = np.array([b[1] for b in both])
            corr_pearson = pearson(likings, difficulties)
            corr_spearman = spearman(likings, difficulties)
        return CorpusStats(
            mcqs_with_responses=len(labeled),
            responses=len(self._records),
            mean_incorrect_rate=float(rates.mean()),
            liking_difficulty_pearson=corr_pearson,
            liking_difficulty_spearman=corr_spearman,
            histogram=[int(c) for c in counts],
            bin_edges=[float(e) for e in edges],
        )


def simulate_responses(
    store: ResponseStore,
    n_per_mcq: int = 38,
    seed: int = 7,
) -> int:
    """Deterministic synthetic respondents, for hermetic end-to-end runs.

    Each question gets a latent error probability that grows with stem
    length (a crude but observable complexity proxy, so the downstream
    models have something learnable), respondents answer wrong with that
    probability, and liking decreases with difficulty plus noise.
    """
    written = 0
    for mcq_id in store.item_order:
        rng = derive_rng("simulate", seed, mcq_id)
        complexity = min(len(store.items[mcq_id].stem), 240) / 240.0
        p_wrong = float(np.clip(0.04 + 0.55 * complexity + rng.normal(0.0, 0.06), 0.02, 0.9))
        for respondent in range(n_per_mcq):
            session = f"sim-{respondent:04d}"
            _, key_position = store.options_for(session, mcq_id)
            if rng.random() < p_wrong:
                wrong = [i for i in range(4) if i != key_position]
                option = int(wrong[int(rng.integers(3))])
            else:
                option = key_position
            liking = int(np.clip(round(88 - 55 * p_wrong + rng.normal(0, 8)), 0, 100))
            store.record_response(
                session,
                mcq_id,
                option,
                liking=liking,
                enforce_presented=False,
                timestamp=0.0,  # fixed so simulated logs are byte-reproducible
            )
            written += 1
    return written

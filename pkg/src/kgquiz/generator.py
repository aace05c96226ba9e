"""Generate, validate, and retry multiple-choice questions from a graph.

For each high-centrality key node the generator samples an associated
subgraph (single edge or 2-edge path, optionally with one extra key-incident
edge), asks the chat backend for a stem, picks three same-type distractors at
increasing graph depth, and has the backend judge each distractor. Failed
attempts retry with fresh samples up to a budget; exhaustion produces a
structured abort report instead of a question.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .gateway import ChatBackend, TransportError, complete
from .graph import KnowledgeGraph, NoCandidateError, RelationEdge
from .prompts import stem_prompt, validation_prompt
from .seeds import derive_rng

logger = logging.getLogger(__name__)

DEFAULT_KEY_COUNT = 40
DEFAULT_PER_KEY = 4
DEFAULT_MAX_DEPTH = 5
DEFAULT_RETRIES = 3
DEFAULT_STEM_RETRIES = 2

SUBGRAPH_COMBOS = (
    ("triple", False),
    ("triple", True),
    ("quintuple", False),
    ("quintuple", True),
)


class GenerationError(RuntimeError):
    """Base class for per-attempt generation failures."""


class StemLeakError(GenerationError):
    """The stem kept revealing the key name after all regeneration tries."""


class InsufficientDistractorsError(GenerationError):
    """Fewer than three same-type candidates exist outside the subgraph."""


@dataclass(frozen=True)
class AssociatedSubgraph:
    """The grounding subgraph of one question: main path plus optional extra edge."""

    kind: str
    main_edges: tuple[RelationEdge, ...]
    extra: Optional[RelationEdge]
    key: str

    def __post_init__(self) -> None:
        if self.kind not in ("triple", "quintuple"):
            raise ValueError(f"unknown subgraph kind {self.kind!r}")
        expected = 1 if self.kind == "triple" else 2
        if len(self.main_edges) != expected:
            raise ValueError(f"{self.kind} subgraph needs {expected} main edge(s)")
        if self.key not in self.node_ids():
            raise ValueError("key must be part of the subgraph")

    def all_edges(self) -> tuple[RelationEdge, ...]:
        return self.main_edges + ((self.extra,) if self.extra is not None else ())

    def node_ids(self) -> set[str]:
        nodes: set[str] = set()
        for edge in self.main_edges + ((self.extra,) if self.extra else ()):
            nodes.add(edge.src)
            nodes.add(edge.dst)
        return nodes

    def to_dict(self) -> dict:
        def edge_dict(edge: RelationEdge) -> dict:
            return {"src": edge.src, "predicate": edge.predicate, "dst": edge.dst}

        return {
            "kind": self.kind,
            "key": self.key,
            "main_edges": [edge_dict(e) for e in self.main_edges],
            "extra": edge_dict(self.extra) if self.extra else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AssociatedSubgraph":
        def edge(d: dict) -> RelationEdge:
            return RelationEdge(src=d["src"], predicate=d["predicate"], dst=d["dst"])

        return cls(
            kind=data["kind"],
            main_edges=tuple(edge(e) for e in data["main_edges"]),
            extra=edge(data["extra"]) if data.get("extra") else None,
            key=data["key"],
        )


@dataclass(frozen=True)
class Mcq:
    id: str
    stem: str
    key: str
    distractors: tuple[str, str, str]
    distractor_depths: tuple[int, int, int]
    subgraph: AssociatedSubgraph
    raw_signals: Optional[object] = None

    def __post_init__(self) -> None:
        if not self.stem:
            raise ValueError("stem must be non-empty")
        if self.key in self.distractors:
            raise ValueError("key cannot be one of its own distractors")
        if len(set(self.distractors)) != 3:
            raise ValueError("distractors must be pairwise distinct")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "stem": self.stem,
            "key": self.key,
            "distractors": list(self.distractors),
            "distractor_depths": list(self.distractor_depths),
            "subgraph": self.subgraph.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mcq":
        return cls(
            id=data["id"],
            stem=data["stem"],
            key=data["key"],
            distractors=tuple(data["distractors"]),
            distractor_depths=tuple(data["distractor_depths"]),
            subgraph=AssociatedSubgraph.from_dict(data["subgraph"]),
        )


@dataclass
class AbortReport:
    key: str
    mcq_id: str
    attempts: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"key": self.key, "mcq_id": self.mcq_id, "attempts": list(self.attempts)}


@dataclass
class GenerationConfig:
    keys: int = DEFAULT_KEY_COUNT
    per_key: int = DEFAULT_PER_KEY
    max_depth: int = DEFAULT_MAX_DEPTH
    retries: int = DEFAULT_RETRIES
    stem_retries: int = DEFAULT_STEM_RETRIES
    seed: int = 42
    # One weight per (kind, use-extra) combination, in SUBGRAPH_COMBOS order.
    combo_weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)


@dataclass
class GenerationResult:
    mcqs: list[Mcq]
    aborts: list[AbortReport]
    attempts_total: int

    def to_report(self) -> dict:
        return {
            "targeted": len(self.mcqs) + len(self.aborts),
            "generated": len(self.mcqs),
            "aborted": len(self.aborts),
            "attempts_total": self.attempts_total,
            "abort_reports": [a.to_dict() for a in self.aborts],
        }


def select_keys(graph: KnowledgeGraph, k: int = DEFAULT_KEY_COUNT) -> list[str]:
    """The k most-central nodes, the pool of correct answers to target."""
    if len(graph) == 0:
        raise ValueError("graph is empty")
    return graph.top_k_by_centrality(k)


def sample_subgraph(
    graph: KnowledgeGraph,
    key: str,
    rng: np.random.Generator,
    config: GenerationConfig | None = None,
) -> AssociatedSubgraph:
    """Draw the subgraph kind and extra-edge flag, then sample the edges.

    A quintuple draw falls back to a triple when the key has no 2-edge path;
    a requested extra edge falls back to absent when none remains.
    """
    config = config or GenerationConfig()
    weights = np.asarray(config.combo_weights, dtype=float)
    probabilities = weights / weights.sum()
    kind, use_extra = SUBGRAPH_COMBOS[int(rng.choice(len(SUBGRAPH_COMBOS), p=probabilities))]

    if kind == "quintuple":
        try:
            first, _, second = graph.sample_quintuple(key, rng)
            main_edges: tuple[RelationEdge, ...] = (first, second)
        except NoCandidateError:
            logger.debug("no 2-edge path at %s; falling back to triple", key)
            kind = "triple"
            main_edges = (graph.sample_triple(key, rng),)
    else:
        main_edges = (graph.sample_triple(key, rng),)

    extra = None
    if use_extra:
        extra = graph.sample_extra_triple(key, {e.dedup_key() for e in main_edges}, rng)
        if extra is None:
            logger.debug("no extra edge available at %s; continuing without", key)
    return AssociatedSubgraph(kind=kind, main_edges=main_edges, extra=extra, key=key)


def stem_leaks_key(stem: str, key_name: str) -> bool:
    """True when the key name occurs in the stem as a whole word sequence."""
    return re.search(rf"\b{re.escape(key_name)}\b", stem, flags=re.IGNORECASE) is not None


def generate_stem(
    graph: KnowledgeGraph,
    subgraph: AssociatedSubgraph,
    backend: ChatBackend,
    retries: int = DEFAULT_STEM_RETRIES,
) -> str:
    """Ask the backend for a stem, regenerating if it reveals the key name."""
    key_name = graph.node(subgraph.key).name
    stem = ""
    for attempt in range(retries + 1):
        stem = complete(stem_prompt(graph, subgraph, attempt=attempt), backend).strip()
        if not stem:
            continue
        if not stem_leaks_key(stem, key_name):
            return stem
        logger.debug("stem attempt %d leaked key %r; regenerating", attempt, subgraph.key)
    raise StemLeakError(f"stem still contains key name after {retries + 1} tries: {stem!r}")


def select_distractors(
    graph: KnowledgeGraph,
    key: str,
    subgraph: AssociatedSubgraph,
    max_depth: int = DEFAULT_MAX_DEPTH,
    rng: np.random.Generator | None = None,
) -> list[tuple[str, int]]:
    """Pick three same-type nodes outside the subgraph, spread across depths.

    One candidate is taken per ascending distinct depth level until three are
    chosen; any remainder is filled from the shallowest levels. The result is
    sorted by depth.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    key_type = graph.node(key).entity_type
    depths = graph.bfs_depths(key, max_depth=max_depth, type_filter=key_type)
    excluded = subgraph.node_ids()
    by_level: dict[int, list[str]] = {}
    for node_id, depth in depths.items():
        if node_id not in excluded:
            by_level.setdefault(depth, []).append(node_id)
    total = sum(len(v) for v in by_level.values())
    if total < 3:
        raise InsufficientDistractorsError(
            f"key {key!r} has {total} same-type candidate(s) within depth {max_depth}; need 3"
        )
    for level in by_level.values():
        level.sort()

    chosen: list[tuple[str, int]] = []
    for depth in sorted(by_level):
        if len(chosen) == 3:
            break
        pool = by_level[depth]
        pick = pool.pop(int(rng.integers(len(pool))))
        chosen.append((pick, depth))
    for depth in sorted(by_level):
        pool = by_level[depth]
        while pool and len(chosen) < 3:
            pick = pool.pop(int(rng.integers(len(pool))))
            chosen.append((pick, depth))
    chosen.sort(key=lambda pair: pair[1])
    return chosen


def validate_mcq_detailed(
    mcq: Mcq, backend: ChatBackend, graph: KnowledgeGraph
) -> tuple[bool, Optional[str]]:
    """Judge each distractor independently; any YES (or failure) invalidates."""
    for distractor in mcq.distractors:
        name = graph.node(distractor).name
        prompt = validation_prompt(graph, mcq.subgraph, mcq.stem, name)
        try:
            verdict = complete(prompt, backend).strip().upper()
        except TransportError as exc:
            return False, f"validation transport error on {distractor!r}: {exc}"
        if verdict.startswith("YES"):
            return False, f"distractor {distractor!r} judged potentially correct"
    return True, None


def validate_mcq(mcq: Mcq, backend: ChatBackend, graph: KnowledgeGraph) -> bool:
    valid, _ = validate_mcq_detailed(mcq, backend, graph)
    return valid


def generate_mcq_with_retry(
    graph: KnowledgeGraph,
    key: str,
    config: GenerationConfig,
    backend: ChatBackend,
    mcq_id: str,
) -> Mcq | AbortReport:
    """Full single-question loop: sample, write stem, pick distractors, judge.

    Each attempt uses an rng derived from (seed, key, question id, attempt) so
    results do not depend on scheduling.
    """
    report = AbortReport(key=key, mcq_id=mcq_id)
    for attempt in range(config.retries):
        rng = derive_rng(config.seed, "mcq", key, mcq_id, attempt)
        try:
            subgraph = sample_subgraph(graph, key, rng, config)
        except NoCandidateError as exc:
            report.attempts.append(f"no subgraph candidate: {exc}")
            continue
        try:
            stem = generate_stem(graph, subgraph, backend, retries=config.stem_retries)
        except StemLeakError as exc:
            report.attempts.append(f"stem leaked key name: {exc}")
            continue
        except TransportError as exc:
            report.attempts.append(f"stem transport error: {exc}")
            continue
        try:
            picks = select_distractors(graph, key, subgraph, config.max_depth, rng)
        except InsufficientDistractorsError as exc:
            report.attempts.append(f"insufficient distractors: {exc}")
            continue
        mcq = Mcq(
            id=mcq_id,
            stem=stem,
            key=key,
            distractors=tuple(node for node, _ in picks),
            distractor_depths=tuple(depth for _, depth in picks),
            subgraph=subgraph,
        )
        valid, reason = validate_mcq_detailed(mcq, backend, graph)
        if valid:
            return mcq
        report.attempts.append(reason or "validation rejected the question")
    return report


def generate_all(
    graph: KnowledgeGraph, config: GenerationConfig, backend: ChatBackend
) -> GenerationResult:
    """Attempt ``per_key`` questions for each selected key node."""
    mcqs: list[Mcq] = []
    aborts: list[AbortReport] = []
    attempts = 0
    for key in select_keys(graph, config.keys):
        for slot in range(config.per_key):
            attempts += 1
            mcq_id = f"{key}::q{slot}"
            outcome = generate_mcq_with_retry(graph, key, config, backend, mcq_id)
            if isinstance(outcome, Mcq):
                mcqs.append(outcome)
            else:
                aborts.append(outcome)
    logger.info(
        "generation finished: %d questions, %d aborts out of %d targeted",
        len(mcqs), len(aborts), attempts,
    )
    return GenerationResult(mcqs=mcqs, aborts=aborts, attempts_total=attempts)


def save_mcqs(mcqs: list[Mcq], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for mcq in mcqs:
            fh.write(json.dumps(mcq.to_dict(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def load_mcqs(path: str | Path) -> list[Mcq]:
    mcqs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                mcqs.append(Mcq.from_dict(json.loads(line)))
    return mcqs

"""The nine per-question difficulty signals and their min-max normalization.

Signals span three families: structure of the grounding subgraph (reasoning
hops, extra context edge, distractor depth, degree centrality), embedding
similarities (node-level distractor/key similarity, text-level option/stem
similarity, the largest-gap option count), and language (reading-ease score,
judged out-of-subgraph content).
"""

from __future__ import annotations

import csv
import json
import logging
import re
import string
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .embeddings import NodeEmbeddingTable, TextEmbedder, safe_cosine
from .gateway import ChatBackend, TransportError, complete
from .generator import Mcq
from .graph import KnowledgeGraph
from .prompts import extra_fact_prompt

logger = logging.getLogger(__name__)

SIGNAL_NAMES = (
    "reasoning",
    "extra_triple",
    "distractor_depth",
    "node_embed_sim",
    "text_embed_sim",
    "degree_centrality",
    "readability",
    "above_largest_gap_count",
    "llm_extra_fact",
)

# Aliases used by external files that carry the display-style column names.
SIGNAL_ALIASES = {
    "Reasoning": "reasoning",
    "ExtraTriple": "extra_triple",
    "DistractorDepth": "distractor_depth",
    "NodeEmbeddingSimilarity": "node_embed_sim",
    "TextEmbeddingSimilarity": "text_embed_sim",
    "DegreeCentrality": "degree_centrality",
    "Readability": "readability",
    "AboveLargestGapCount": "above_largest_gap_count",
    "LLMExtraFact": "llm_extra_fact",
}

TEXT_SIM_DENOMINATOR_FLOOR = 1e-6


class SignalError(RuntimeError):
    """A signal could not be computed; carries the signal name."""

    def __init__(self, signal: str, message: str):
        super().__init__(f"{signal}: {message}")
        self.signal = signal


@dataclass(frozen=True)
class RawSignals:
    reasoning: int
    extra_triple: int
    distractor_depth: float
    node_embed_sim: float
    text_embed_sim: float
    degree_centrality: float
    readability: float
    above_largest_gap_count: int
    llm_extra_fact: int

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in SIGNAL_NAMES], dtype=np.float64)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in SIGNAL_NAMES}

    @classmethod
    def from_dict(cls, data: dict) -> "RawSignals":
        integer_fields = {"reasoning", "extra_triple", "above_largest_gap_count", "llm_extra_fact"}
        kwargs = {}
        for f in fields(cls):
            value = data[f.name]
            kwargs[f.name] = int(value) if f.name in integer_fields else float(value)
        return cls(**kwargs)


@dataclass
class NormParams:
    """Per-signal (min, max) fitted on a dataset; constant signals get a
    sentinel width of 1 so they normalize to 0."""

    mins: np.ndarray
    maxs: np.ndarray

    def to_dict(self) -> dict:
        return {
            "signals": list(SIGNAL_NAMES),
            "mins": [float(v) for v in self.mins],
            "maxs": [float(v) for v in self.maxs],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NormParams":
        return cls(mins=np.asarray(data["mins"], float), maxs=np.asarray(data["maxs"], float))


# ---------------------------------------------------------------------------
# Structural signals
# ---------------------------------------------------------------------------


def signal_reasoning(mcq: Mcq) -> int:
    """1 for a two-hop (quintuple) question, 0 for a single triple."""
    return 1 if mcq.subgraph.kind == "quintuple" else 0


def signal_extra_triple(mcq: Mcq) -> int:
    """1 when an extra context edge was attached to the subgraph."""
    return 1 if mcq.subgraph.extra is not None else 0


def signal_distractor_depth(mcq: Mcq) -> float:
    """Mean graph depth of the three distractors from the key."""
    return float(np.mean(mcq.distractor_depths))


def signal_degree_centrality(mcq: Mcq, graph: KnowledgeGraph) -> float:
    """Mean degree over every node of the grounding subgraph."""
    nodes = sorted(mcq.subgraph.node_ids())
    return float(np.mean([graph.degree_centrality(v) for v in nodes]))


# ---------------------------------------------------------------------------
# Embedding signals
# ---------------------------------------------------------------------------


def signal_node_embed_sim(mcq: Mcq, table: NodeEmbeddingTable) -> float:
    """Mean cosine between each distractor's node vector and the key's."""
    for node_id in (mcq.key, *mcq.distractors):
        if node_id not in table:
            raise SignalError("node_embed_sim", f"no embedding for node {node_id!r}")
    key_vec = table[mcq.key]
    sims = [safe_cosine(table[d], key_vec, context=f"node {d}") for d in mcq.distractors]
    return float(np.mean(sims))


def signal_text_embed_sim(mcq: Mcq, graph: KnowledgeGraph, backend: TextEmbedder) -> float:
    """Mean distractor-stem text similarity, normalized by key-stem similarity."""
    stem_vec = backend.embed(mcq.stem)
    key_vec = backend.embed(graph.node(mcq.key).name)
    numerator = float(
        np.mean(
            [
                safe_cosine(backend.embed(graph.node(d).name), stem_vec, context=f"text {d}")
                for d in mcq.distractors
            ]
        )
    )
    denominator = safe_cosine(key_vec, stem_vec, context="key-stem")
    if denominator < TEXT_SIM_DENOMINATOR_FLOOR:
        logger.warning(
            "key-stem similarity %.3g below floor for %s; clamping", denominator, mcq.id
        )
        denominator = TEXT_SIM_DENOMINATOR_FLOOR
    return numerator / denominator


def largest_gap_count(similarities) -> int:
    """Options preceding the largest drop in descending-sorted similarities.

    Ties pick the earliest gap, so the result is always in {1, 2, 3}.
    """
    sims = sorted((float(s) for s in similarities), reverse=True)
    if len(sims) != 4:
        raise ValueError(f"expected 4 similarities, got {len(sims)}")
    gaps = [sims[i] - sims[i + 1] for i in range(3)]
    best = max(range(3), key=lambda i: (gaps[i], -i))
    return best + 1


def signal_above_largest_gap(mcq: Mcq, graph: KnowledgeGraph, backend: TextEmbedder) -> int:
    """Largest-gap count over stem similarity of all four answer options."""
    stem_vec = backend.embed(mcq.stem)
    options = [mcq.key, *mcq.distractors]
    sims = [
        safe_cosine(backend.embed(graph.node(option).name), stem_vec, context=f"option {option}")
        for option in options
    ]
    return largest_gap_count(sims)


# ---------------------------------------------------------------------------
# Language signals
# ---------------------------------------------------------------------------

_WORD_STRIP = string.punctuation + "‘’“”"


def count_words(text: str) -> int:
    return len(_words(text))


def _words(text: str) -> list[str]:
    tokens = (tok.strip(_WORD_STRIP) for tok in text.split())
    return [t for t in tokens if t]


def count_sentences(text: str) -> int:
    """Runs of terminal punctuation; text without any counts as one sentence."""
    runs = len(re.findall(r"[.!?]+", text))
    return max(runs, 1)


def count_syllables_word(word: str) -> int:
    """Vowel-group heuristic: maximal [aeiouy] runs, silent trailing 'e'
    dropped unless the word ends in 'le', at least one per word."""
    letters = re.sub(r"[^a-z]", "", word.lower())
    if not letters:
        return 1
    groups = len(re.findall(r"[aeiouy]+", letters))
    if letters.endswith("e") and not letters.endswith("le"):
        groups -= 1
    return max(groups, 1)


def count_syllables(text: str) -> int:
    return sum(count_syllables_word(word) for word in _words(text))


def flesch_reading_ease(words: int, sentences: int, syllables: int) -> float:
    """Reading-ease formula over precomputed counts."""
    if words < 1 or sentences < 1:
        raise ValueError("need at least one word and one sentence")
    return 206.835 - 1.015 * (words / sentences) - 84.6 * (syllables / words)


def signal_readability(stem: str) -> float:
    """Reading-ease score of the stem text."""
    if not stem or not stem.strip():
        raise SignalError("readability", "empty stem")
    words = count_words(stem)
    if words == 0:
        raise SignalError("readability", f"no countable words in {stem!r}")
    return flesch_reading_ease(words, count_sentences(stem), count_syllables(stem))


def signal_llm_extra_fact(mcq: Mcq, graph: KnowledgeGraph, backend: ChatBackend) -> int:
    """1 when the judge says the stem adds facts beyond the subgraph."""
    prompt = extra_fact_prompt(graph, mcq.subgraph, mcq.stem)
    try:
        verdict = complete(prompt, backend).strip().upper()
    except TransportError as exc:
        raise SignalError("llm_extra_fact", str(exc)) from exc
    return 1 if verdict.startswith("YES") else 0


# ---------------------------------------------------------------------------
# Composition and normalization
# ---------------------------------------------------------------------------


def compute_all(
    mcq: Mcq,
    graph: KnowledgeGraph,
    node_table: NodeEmbeddingTable,
    text_backend: TextEmbedder,
    chat_backend: ChatBackend,
) -> RawSignals:
    """All nine signals for one validated question."""
    try:
        return RawSignals(
            reasoning=signal_reasoning(mcq),
            extra_triple=signal_extra_triple(mcq),
            distractor_depth=signal_distractor_depth(mcq),
            node_embed_sim=signal_node_embed_sim(mcq, node_table),
            text_embed_sim=signal_text_embed_sim(mcq, graph, text_backend),
            degree_centrality=signal_degree_centrality(mcq, graph),
            readability=signal_readability(mcq.stem),
            above_largest_gap_count=signal_above_largest_gap(mcq, graph, text_backend),
            llm_extra_fact=signal_llm_extra_fact(mcq, graph, chat_backend),
        )
    except SignalError:
        raise
    except (ValueError, KeyError) as exc:
        raise SignalError("compute_all", f"{mcq.id}: {exc}") from exc


def fit_normalization(dataset: list[RawSignals]) -> NormParams:
    """Per-signal min/max over the fitting rows."""
    if not dataset:
        raise ValueError("cannot fit normalization on an empty dataset")
    matrix = np.stack([row.as_array() for row in dataset])
    mins = matrix.min(axis=0)
    maxs = matrix.max(axis=0)
    constant = maxs == mins
    maxs = np.where(constant, mins + 1.0, maxs)
    return NormParams(mins=mins, maxs=maxs)


def apply_normalization(raw: RawSignals, params: NormParams) -> np.ndarray:
    """Min-max rescale into [0, 1], clamping values outside the fitted range."""
    values = (raw.as_array() - params.mins) / (params.maxs - params.mins)
    return np.clip(values, 0.0, 1.0)


def save_norm_params(params: NormParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), sort_keys=True, indent=2) + "\n")


def load_norm_params(path: str | Path) -> NormParams:
    return NormParams.from_dict(json.loads(Path(path).read_text()))


def write_signals_csv(
    path: str | Path,
    rows: list[tuple[str, RawSignals, np.ndarray]],
    labels: Optional[dict[str, tuple[float, Optional[float]]]] = None,
) -> None:
    """One row per question: id, nine raw columns, nine normalized columns,
    plus difficulty/liking label columns when provided."""
    header = ["mcq_id"]
    header += [f"raw_{name}" for name in SIGNAL_NAMES]
    header += [f"norm_{name}" for name in SIGNAL_NAMES]
    if labels is not None:
        header += ["difficulty", "liking"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for mcq_id, raw, norm in rows:
            record = [mcq_id]
            record += [repr(float(v)) for v in raw.as_array()]
            record += [repr(float(v)) for v in norm]
            if labels is not None:
                difficulty, liking = labels[mcq_id]
                record += [repr(float(difficulty)), "" if liking is None else repr(float(liking))]
            writer.writerow(record)


def read_signals_csv(path: str | Path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))

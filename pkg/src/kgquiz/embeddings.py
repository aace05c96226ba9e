"""Node embeddings via fast random projection, plus pluggable text embeddings.

The node embedder iterates a degree-normalized undirected adjacency over
sparse random base vectors and combines the iterations with configurable
weights. Base vectors are seeded per node id, so embeddings do not depend on
insertion order. The text side offers a live HTTP backend and a hermetic
feature-hashing fallback.
"""

from __future__ import annotations

import logging
import os
import re
import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol

import numpy as np
from scipy import sparse

from .gateway import TransportError
from .graph import KnowledgeGraph
from .seeds import stable_seed

logger = logging.getLogger(__name__)

DEFAULT_NODE_DIM = 128
DEFAULT_ITERATION_WEIGHTS = (0.0, 1.0, 1.0)
DEFAULT_TEXT_DIM = 256


class ZeroVectorError(ValueError):
    """Cosine similarity is undefined for a zero vector."""


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Standard cosine similarity, clipped into [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity undefined for zero vector")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


@dataclass
class NodeEmbeddingTable:
    """Per-node embedding vectors, all sharing one dimensionality."""

    vectors: dict[str, np.ndarray]
    dim: int
    seed: int
    zero_nodes: tuple[str, ...] = ()

    def __getitem__(self, node_id: str) -> np.ndarray:
        return self.vectors[node_id]

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.vectors


def _base_vector(node_id: str, dim: int, seed: int) -> np.ndarray:
    """Sparse signed random base vector, seeded by node id (not index)."""
    rng = np.random.default_rng(stable_seed("fastrp-base", seed, node_id))
    density = 1.0 / np.sqrt(dim)
    magnitude = dim ** 0.25  # unit variance given the density
    draws = rng.random(dim)
    signs = rng.random(dim) < 0.5
    vector = np.zeros(dim)
    nonzero = draws < density
    vector[nonzero] = np.where(signs[nonzero], magnitude, -magnitude)
    return vector


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return matrix / safe


def fastrp_embed(
    graph: KnowledgeGraph,
    dim: int = DEFAULT_NODE_DIM,
    iteration_weights: tuple[float, ...] = DEFAULT_ITERATION_WEIGHTS,
    seed: int = 0,
) -> NodeEmbeddingTable:
    """Embed every node by propagating random projections over the graph.

    Each iteration multiplies by the degree-normalized undirected adjacency
    and row-normalizes; the weighted sum of iterations is L2-normalized per
    node. Nodes that receive no propagation keep a zero vector and are
    flagged in ``zero_nodes``.
    """
    if len(graph) == 0:
        raise ValueError("cannot embed an empty graph")
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    weights = tuple(float(w) for w in iteration_weights)
    if not any(w != 0.0 for w in weights):
        raise ValueError("at least one iteration weight must be nonzero")

    node_ids = sorted(graph.nodes)
    index = {node_id: i for i, node_id in enumerate(node_ids)}
    n = len(node_ids)

    rows, cols = [], []
    for edge in graph.edges:
        i, j = index[edge.src], index[edge.dst]
        rows.append(i)
        cols.append(j)
        if i != j:
            rows.append(j)
            cols.append(i)
    adjacency = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    adjacency.sum_duplicates()

    degrees = np.asarray(adjacency.sum(axis=1)).ravel()
    inv_degree = np.where(degrees > 0, 1.0 / np.maximum(degrees, 1.0), 0.0)

    current = np.stack([_base_vector(node_id, dim, seed) for node_id in node_ids])
    result = np.zeros((n, dim))
    for weight in weights:
        current = inv_degree[:, None] * (adjacency @ current)
        current = _normalize_rows(current)
        if weight != 0.0:
            result += weight * current

    norms = np.linalg.norm(result, axis=1)
    zero_nodes = tuple(node_ids[i] for i in np.flatnonzero(norms == 0.0))
    if zero_nodes:
        logger.warning("fastrp produced zero vectors for %d node(s)", len(zero_nodes))
    result = _normalize_rows(result)
    vectors = {node_id: result[index[node_id]].copy() for node_id in node_ids}
    return NodeEmbeddingTable(vectors=vectors, dim=dim, seed=seed, zero_nodes=zero_nodes)


# ---------------------------------------------------------------------------
# Text embeddings
# ---------------------------------------------------------------------------


class TextEmbedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


@dataclass
class HashingTextEmbedder:
    """Deterministic fallback text embedder: hashed token uni+bigram counts.

    Stable across processes and machines (hashing via blake2b), unit-norm
    output, no network. Component 0 is a constant anchor so any two texts
    share a small positive similarity, the way dense model embeddings do;
    all components are nonnegative, so cosines stay in [0, 1].
    """

    dim: int = DEFAULT_TEXT_DIM
    anchor_weight: float = 0.35

    def embed(self, text: str) -> np.ndarray:
        if not text or not text.strip():
            raise ValueError("cannot embed empty text")
        tokens = re.findall(r"[a-z0-9]+", text.lower())
        grams = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
        vector = np.zeros(self.dim)
        for gram in grams:
            vector[1 + stable_seed("texthash", gram) % (self.dim - 1)] += 1.0
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            raise ValueError(f"text produced no tokens: {text!r}")
        vector[0] = self.anchor_weight * norm
        return vector / np.linalg.norm(vector)


class LiveTextEmbedder:
    """HTTP text-embedding backend: ``{"input": [...]}`` -> ``{"vectors": [...]}``.

    Concurrent callers are bounded by ``max_in_flight``; transient failures
    retry with exponential backoff and surface the attempt count.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = "KGQUIZ_API_KEY",
        dim: int = 1536,
        max_retries: int = 3,
        backoff_base: float = 0.5,
        max_in_flight: int = 4,
        transport=None,
        timeout: float = 60.0,
    ):
        import httpx

        credential = os.environ.get(credential_env)
        if not credential:
            raise TransportError(
                f"text backend requires credential in environment variable {credential_env!r}",
                attempts=0,
            )
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.last_attempts = 0
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(
            headers={"Authorization": f"Bearer {credential}"},
            timeout=timeout,
            transport=transport,
        )

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: list[str]) -> list[np.ndarray]:
        import time

        import httpx

        if not texts or any(not t.strip() for t in texts):
            raise ValueError("cannot embed empty text")
        body = {"input": texts, "model": self.model}
        last_error = "unknown error"
        for attempt in range(1, self.max_retries + 1):
            self.last_attempts = attempt
            with self._slots:
                try:
                    response = self._client.post(self.endpoint, json=body)
                except httpx.HTTPError as exc:
                    last_error = f"transport failure: {exc}"
                    logger.warning("embed attempt %d failed: %s", attempt, exc)
                else:
                    if response.status_code == 200:
                        vectors = response.json()["vectors"]
                        return [np.asarray(v, dtype=np.float64) for v in vectors]
                    last_error = f"HTTP {response.status_code}"
                    if response.status_code not in {429, 500, 502, 503, 504}:
                        raise TransportError(last_error, attempt)
            if attempt < self.max_retries:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise TransportError(last_error, self.max_retries)


def embed_text(text: str, backend: TextEmbedder) -> np.ndarray:
    """Embed one text with the configured backend."""
    return backend.embed(text)


def safe_cosine(a: np.ndarray, b: np.ndarray, context: str = "") -> float:
    """Cosine with the zero-vector case surfaced as 0.0 plus a warning."""
    try:
        return cosine(a, b)
    except ZeroVectorError:
        logger.warning("zero vector in cosine%s; substituting 0.0", f" ({context})" if context else "")
        return 0.0

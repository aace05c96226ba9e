"""In-memory directed knowledge graph with typed nodes and labeled edges.

Node identity is the normalized (trimmed, case-folded) display name, since
extraction output carries no ids. Edges are deduplicated on
(src, normalized predicate, dst); the first-seen predicate casing is kept.
Traversal (BFS, sampling) treats edges as undirected while the stored edges
keep their original direction.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

logger = logging.getLogger(__name__)

GRAPH_FILE_FIELDS = ("subject", "subject_type", "predicate", "object", "object_type")


class GraphValidationError(ValueError):
    """Raised when a node or triple violates basic integrity rules."""


class NodeNotFoundError(LookupError):
    """Raised when an operation references a node id not in the graph."""


class NoCandidateError(RuntimeError):
    """Raised when sampling has no candidate to draw from."""


class GraphFileError(ValueError):
    """Raised when a persisted graph file cannot be parsed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def normalize_id(name: str) -> str:
    """Canonical node id for a display name."""
    return name.strip().casefold()


def normalize_predicate(predicate: str) -> str:
    return predicate.strip().casefold()


def normalize_type(entity_type: str) -> str:
    return entity_type.strip().casefold()


@dataclass(frozen=True)
class EntityNode:
    id: str
    name: str
    entity_type: str

    def __post_init__(self) -> None:
        if not self.id:
            raise GraphValidationError("node id must be non-empty")
        if not self.entity_type:
            raise GraphValidationError(f"node {self.id!r} has empty entity_type")

    @classmethod
    def from_name(cls, name: str, entity_type: str) -> "EntityNode":
        return cls(id=normalize_id(name), name=name.strip(), entity_type=entity_type.strip())


@dataclass(frozen=True)
class RelationEdge:
    src: str
    predicate: str
    dst: str

    def dedup_key(self) -> tuple[str, str, str]:
        return (self.src, normalize_predicate(self.predicate), self.dst)

    def other_endpoint(self, node_id: str) -> str:
        """The endpoint opposite to ``node_id`` (undirected view)."""
        return self.dst if self.src == node_id else self.src


class KnowledgeGraph:
    """Directed multigraph of typed entities, mutable until frozen.

    Adjacency is indexed in both directions; readers are safe to share the
    instance once :meth:`freeze` has been called (single-writer before that).
    """

    def __init__(self) -> None:
        self._nodes: dict[str, EntityNode] = {}
        self._edges: dict[tuple[str, str, str], RelationEdge] = {}
        self._out: dict[str, list[RelationEdge]] = {}
        self._in: dict[str, list[RelationEdge]] = {}
        self.warnings: list[str] = []
        self._frozen = False

    # -- construction -------------------------------------------------

    def add_node(self, node: EntityNode) -> EntityNode:
        """Upsert a node by id. Existing name/type win; conflicts are warnings."""
        self._check_mutable()
        existing = self._nodes.get(node.id)
        if existing is None:
            self._nodes[node.id] = node
            self._out.setdefault(node.id, [])
            self._in.setdefault(node.id, [])
            return node
        if normalize_type(existing.entity_type) != normalize_type(node.entity_type):
            message = (
                f"type conflict for {node.id!r}: keeping {existing.entity_type!r},"
                f" ignoring {node.entity_type!r}"
            )
            self.warnings.append(message)
            logger.warning(message)
        return existing

    def add_triple(self, subject: EntityNode, predicate: str, obj: EntityNode) -> bool:
        """Insert one (subject, predicate, object) edge, upserting both nodes.

        Returns True when a new edge was stored, False for an exact duplicate.
        """
        self._check_mutable()
        if not predicate or not predicate.strip():
            raise GraphValidationError("predicate must be non-empty")
        subject = self.add_node(subject)
        obj = self.add_node(obj)
        edge = RelationEdge(src=subject.id, predicate=predicate.strip(), dst=obj.id)
        key = edge.dedup_key()
        if key in self._edges:
            return False
        self._edges[key] = edge
        self._out[edge.src].append(edge)
        self._in[edge.dst].append(edge)
        return True

    def freeze(self) -> "KnowledgeGraph":
        self._frozen = True
        return self

    def _check_mutable(self) -> None:
        if self._frozen:
            raise GraphValidationError("graph is frozen; construction is finished")

    # -- inspection ---------------------------------------------------

    @property
    def nodes(self) -> dict[str, EntityNode]:
        return self._nodes

    @property
    def edges(self) -> list[RelationEdge]:
        return list(self._edges.values())

    def node(self, node_id: str) -> EntityNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise NodeNotFoundError(f"unknown node id {node_id!r}") from None

    def has_edge(self, src: str, predicate: str, dst: str) -> bool:
        return (src, normalize_predicate(predicate), dst) in self._edges

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return self._nodes == other._nodes and set(self._edges) == set(other._edges)

    def degree_centrality(self, node_id: str) -> int:
        """In-degree plus out-degree of the node."""
        self.node(node_id)
        return len(self._out[node_id]) + len(self._in[node_id])

    def top_k_by_centrality(self, k: int) -> list[str]:
        """The k highest-degree node ids, ties broken by ascending id."""
        if k < 1:
            raise GraphValidationError(f"k must be >= 1, got {k}")
        ranked = sorted(self._nodes, key=lambda v: (-self.degree_centrality(v), v))
        return ranked[:k]

    def incident_edges(self, node_id: str) -> list[RelationEdge]:
        """Unique edges touching the node in either direction, canonical order."""
        self.node(node_id)
        seen = {e.dedup_key(): e for e in self._out[node_id]}
        seen.update((e.dedup_key(), e) for e in self._in[node_id])
        return [seen[key] for key in sorted(seen)]

    def undirected_neighbors(self, node_id: str) -> list[str]:
        neighbors = {e.other_endpoint(node_id) for e in self.incident_edges(node_id)}
        neighbors.discard(node_id)
        return sorted(neighbors)

    def bfs_depths(
        self,
        start: str,
        max_depth: int,
        type_filter: Optional[str] = None,
    ) -> dict[str, int]:
        """Shortest-path depths 1..max_depth from start over the undirected view.

        The start node is excluded. With a type filter only nodes of that type
        appear in the result, but the traversal still passes through all nodes.
        """
        self.node(start)
        if max_depth < 1:
            raise GraphValidationError(f"max_depth must be >= 1, got {max_depth}")
        wanted = normalize_type(type_filter) if type_filter is not None else None
        depths: dict[str, int] = {}
        visited = {start}
        frontier = deque([(start, 0)])
        while frontier:
            current, depth = frontier.popleft()
            if depth == max_depth:
                continue
            for neighbor in self.undirected_neighbors(current):
                if neighbor in visited:
                    continue
                visited.add(neighbor)
                if wanted is None or normalize_type(self._nodes[neighbor].entity_type) == wanted:
                    depths[neighbor] = depth + 1
                frontier.append((neighbor, depth + 1))
        return depths

    # -- sampling -----------------------------------------------------

    def sample_triple(self, key: str, rng: np.random.Generator) -> RelationEdge:
        """Uniformly random edge incident to the key (either direction)."""
        candidates = self.incident_edges(key)
        if not candidates:
            raise NoCandidateError(f"node {key!r} has no incident edges")
        return candidates[int(rng.integers(len(candidates)))]

    def sample_quintuple(
        self, key: str, rng: np.random.Generator
    ) -> tuple[RelationEdge, str, RelationEdge]:
        """Uniformly random 2-edge simple path anchored at the key.

        Returns (first edge, middle node id, second edge); the three path nodes
        are pairwise distinct and the key is an endpoint.
        """
        paths: list[tuple[RelationEdge, str, RelationEdge]] = []
        for first in self.incident_edges(key):
            mid = first.other_endpoint(key)
            if mid == key:
                continue
            for second in self.incident_edges(mid):
                if second.dedup_key() == first.dedup_key():
                    continue
                end = second.other_endpoint(mid)
                if end in (key, mid):
                    continue
                paths.append((first, mid, second))
        if not paths:
            raise NoCandidateError(f"node {key!r} has no 2-edge path")
        return paths[int(rng.integers(len(paths)))]

    def sample_extra_triple(
        self,
        key: str,
        exclude: set[tuple[str, str, str]],
        rng: np.random.Generator,
    ) -> Optional[RelationEdge]:
        """Random incident edge not in ``exclude``; None when none remain."""
        candidates = [e for e in self.incident_edges(key) if e.dedup_key() not in exclude]
        if not candidates:
            return None
        return candidates[int(rng.integers(len(candidates)))]

    # -- persistence ----------------------------------------------------

    def save(self, path: str | Path) -> None:
        """Write line-delimited triple records, sorted for diff stability.

        The record schema carries nodes only through their edges, so isolated
        nodes cannot be persisted; they are dropped with a warning.
        """
        covered = {e.src for e in self._edges.values()} | {e.dst for e in self._edges.values()}
        isolated = set(self._nodes) - covered
        if isolated:
            logger.warning(
                "dropping %d isolated node(s) not representable in the triple file: %s",
                len(isolated), sorted(isolated)[:5],
            )
        records = []
        for edge in self._edges.values():
            src = self._nodes[edge.src]
            dst = self._nodes[edge.dst]
            records.append(
                {
                    "subject": src.name,
                    "subject_type": src.entity_type,
                    "predicate": edge.predicate,
                    "object": dst.name,
                    "object_type": dst.entity_type,
                }
            )
        records.sort(key=lambda r: (r["subject"], r["predicate"], r["object"]))
        with open(path, "w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
                fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "KnowledgeGraph":
        graph = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise GraphFileError(f"invalid JSON: {exc.msg}", line_no) from exc
                if not isinstance(record, dict):
                    raise GraphFileError("record is not an object", line_no)
                for field in GRAPH_FILE_FIELDS:
                    value = record.get(field)
                    if not isinstance(value, str) or not value.strip():
                        raise GraphFileError(
                            f"missing or empty {field!r} (value {value!r})", line_no
                        )
                graph.add_triple(
                    EntityNode.from_name(record["subject"], record["subject_type"]),
                    record["predicate"],
                    EntityNode.from_name(record["object"], record["object_type"]),
                )
        return graph

    def iter_triples(self) -> Iterator[tuple[EntityNode, str, EntityNode]]:
        for edge in self._edges.values():
            yield self._nodes[edge.src], edge.predicate, self._nodes[edge.dst]

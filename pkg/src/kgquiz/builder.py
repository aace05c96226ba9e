"""Build a knowledge graph from a document corpus via LLM triple extraction.

Documents are read from local files, chunked at paragraph boundaries when they
exceed the character budget, run through the chat backend one at a time, and
merged into a single graph. Merging is order-independent and every kept edge
is traceable to the (document, record index) it came from.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import ChatBackend, complete, parse_pipe_records
from .graph import EntityNode, KnowledgeGraph, normalize_id, normalize_predicate
from .prompts import extraction_prompt

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_BUDGET = 4000


class CorpusError(ValueError):
    """Raised when the corpus as a whole is unusable."""


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    body: str
    source: str

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError(f"document {self.id!r} has an empty body")


@dataclass(frozen=True)
class TripleRecord:
    subject: str
    subject_type: str
    predicate: str
    object: str
    object_type: str


@dataclass
class GraphDocument:
    document_id: str
    records: list[TripleRecord] = field(default_factory=list)
    dropped: int = 0


@dataclass
class BuildReport:
    documents: int = 0
    triples_kept: int = 0
    triples_dropped: int = 0
    duplicates: int = 0
    type_conflicts: list[str] = field(default_factory=list)
    provenance: dict[str, list[tuple[str, int]]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "triples_kept": self.triples_kept,
            "triples_dropped": self.triples_dropped,
            "duplicates": self.duplicates,
            "type_conflicts": sorted(self.type_conflicts),
            "provenance": {
                key: [[doc, idx] for doc, idx in sorted(entries)]
                for key, entries in sorted(self.provenance.items())
            },
        }


def chunk_body(body: str, budget: int) -> list[str]:
    """Split text into chunks of at most ``budget`` characters.

    Paragraphs (blank-line separated) are packed greedily; a single paragraph
    longer than the budget is hard-sliced.
    """
    if budget < 1:
        raise ValueError("chunk budget must be positive")
    if len(body) <= budget:
        return [body]
    paragraphs = [p for p in body.split("\n\n") if p.strip()]
    pieces: list[str] = []
    for paragraph in paragraphs:
        while len(paragraph) > budget:
            pieces.append(paragraph[:budget])
            paragraph = paragraph[budget:]
        if paragraph:
            pieces.append(paragraph)
    chunks: list[str] = []
    current = ""
    for piece in pieces:
        candidate = f"{current}\n\n{piece}" if current else piece
        if len(candidate) <= budget:
            current = candidate
        else:
            chunks.append(current)
            current = piece
    if current:
        chunks.append(current)
    return chunks


def ingest_documents(paths: list[str | Path], chunk_budget: int = DEFAULT_CHUNK_BUDGET) -> list[Document]:
    """Read UTF-8 files into Documents, one per file (or per chunk).

    Unreadable or empty files are skipped with a warning and the batch
    continues; an entirely empty batch raises CorpusError.
    """
    documents: list[Document] = []
    for path in paths:
        path = Path(path)
        try:
            body = path.read_text(encoding="utf-8")
        except OSError as exc:
            logger.warning("skipping unreadable file %s: %s", path, exc)
            continue
        except UnicodeDecodeError as exc:
            logger.warning("skipping non-UTF-8 file %s: %s", path, exc)
            continue
        if not body.strip():
            logger.warning("skipping empty file %s", path)
            continue
        stem = path.stem
        chunks = chunk_body(body, chunk_budget)
        for i, chunk in enumerate(chunks, start=1):
            doc_id = stem if len(chunks) == 1 else f"{stem}#{i}"
            documents.append(Document(id=doc_id, title=stem, body=chunk, source=str(path)))
    if not documents:
        raise CorpusError("no readable, non-empty documents in batch")
    return documents


def extract_graph_document(doc: Document, backend: ChatBackend) -> GraphDocument:
    """Run triple extraction for one document and parse the structured output."""
    response = complete(extraction_prompt(doc.body), backend)
    records, dropped = parse_pipe_records(response, n_fields=5)
    if dropped:
        logger.warning("document %s: dropped %d malformed extraction line(s)", doc.id, dropped)
    graph_doc = GraphDocument(document_id=doc.id, dropped=dropped)
    for parts in records:
        graph_doc.records.append(TripleRecord(*parts))
    if not graph_doc.records:
        logger.warning("document %s: extraction produced no parseable triples", doc.id)
    return graph_doc


def merge_graph_documents(graph_docs: list[GraphDocument]) -> tuple[KnowledgeGraph, BuildReport]:
    """Merge extraction output into one graph, deduplicating exact triples."""
    graph = KnowledgeGraph()
    report = BuildReport(documents=len(graph_docs))
    # Canonical merge order keeps the result independent of input order.
    for graph_doc in sorted(graph_docs, key=lambda gd: gd.document_id):
        report.triples_dropped += graph_doc.dropped
        for index, record in enumerate(graph_doc.records):
            subject = EntityNode.from_name(record.subject, record.subject_type)
            obj = EntityNode.from_name(record.object, record.object_type)
            added = graph.add_triple(subject, record.predicate, obj)
            key = "|".join(
                (normalize_id(record.subject), normalize_predicate(record.predicate), normalize_id(record.object))
            )
            report.provenance.setdefault(key, []).append((graph_doc.document_id, index))
            if added:
                report.triples_kept += 1
            else:
                report.duplicates += 1
    report.type_conflicts = list(graph.warnings)
    return graph, report


def build_kg(docs: list[Document], backend: ChatBackend) -> tuple[KnowledgeGraph, BuildReport]:
    """Extract all documents and merge them into a frozen knowledge graph."""
    if not docs:
        raise CorpusError("no documents to build from")
    graph_docs = [extract_graph_document(doc, backend) for doc in docs]
    graph, report = merge_graph_documents(graph_docs)
    if not graph.nodes:
        raise CorpusError("extraction produced no triples across the corpus")
    graph.freeze()
    return graph, report

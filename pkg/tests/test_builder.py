import pytest

from kgquiz.builder import (
    CorpusError,
    Document,
    GraphDocument,
    TripleRecord,
    build_kg,
    chunk_body,
    extract_graph_document,
    ingest_documents,
    merge_graph_documents,
)
from kgquiz.gateway import StubChatBackend, prompt_hash
from kgquiz.graph import KnowledgeGraph
from kgquiz.prompts import extraction_prompt

from conftest import DATA_DIR


class TestIngest:
    def test_three_files_three_documents(self, tmp_path):
        for name in ("one", "two", "three"):
            (tmp_path / f"{name}.txt").write_text(f"body of {name}")
        docs = ingest_documents(sorted(tmp_path.glob("*.txt")))
        assert len(docs) == 3
        assert {d.id for d in docs} == {"one", "two", "three"}

    def test_chunking_splits_at_paragraph_boundaries(self, tmp_path):
        # Five paragraphs of 1900 chars: greedy packing under a 4000-char
        # budget gives p1+p2 / p3+p4 / p5 (3802, 3802, 1900 chars).
        paragraphs = [letter * 1900 for letter in "abcde"]
        body = "\n\n".join(paragraphs)
        assert len(body) == 9508
        (tmp_path / "big.txt").write_text(body)
        docs = ingest_documents([tmp_path / "big.txt"], chunk_budget=4000)
        assert [d.id for d in docs] == ["big#1", "big#2", "big#3"]
        assert docs[0].body == paragraphs[0] + "\n\n" + paragraphs[1]
        assert docs[1].body == paragraphs[2] + "\n\n" + paragraphs[3]
        assert docs[2].body == paragraphs[4]

    def test_oversized_paragraph_hard_sliced(self):
        chunks = chunk_body("x" * 9000, budget=4000)
        assert [len(c) for c in chunks] == [4000, 4000, 1000]

    def test_small_body_single_chunk(self):
        assert chunk_body("short", budget=4000) == ["short"]

    def test_empty_file_skipped_with_warning(self, tmp_path, caplog):
        (tmp_path / "empty.txt").write_text("")
        (tmp_path / "full.txt").write_text("content")
        with caplog.at_level("WARNING"):
            docs = ingest_documents(sorted(tmp_path.glob("*.txt")))
        assert [d.id for d in docs] == ["full"]
        assert any("empty" in r.message for r in caplog.records)

    def test_unreadable_file_skipped_batch_continues(self, tmp_path, caplog):
        (tmp_path / "good.txt").write_text("fine")
        with caplog.at_level("WARNING"):
            docs = ingest_documents([tmp_path / "missing.txt", tmp_path / "good.txt"])
        assert len(docs) == 1
        assert any("unreadable" in r.message for r in caplog.records)

    def test_non_utf8_file_skipped(self, tmp_path, caplog):
        (tmp_path / "binary.txt").write_bytes(b"\xff\xfe\x00bad")
        (tmp_path / "good.txt").write_text("fine")
        with caplog.at_level("WARNING"):
            docs = ingest_documents(sorted(tmp_path.glob("*.txt")))
        assert [d.id for d in docs] == ["good"]
        assert any("non-UTF-8" in r.message for r in caplog.records)

    def test_empty_batch_is_error(self, tmp_path):
        (tmp_path / "empty.txt").write_text("   ")
        with pytest.raises(CorpusError):
            ingest_documents([tmp_path / "empty.txt"])


class TestExtraction:
    def test_stub_rule_single_record(self, stub_backend):
        doc = Document(id="d", title="d", body="Paris | City | capital_of | France | Country", source="mem")
        graph_doc = extract_graph_document(doc, stub_backend)
        assert len(graph_doc.records) == 1
        record = graph_doc.records[0]
        assert record == TripleRecord("Paris", "City", "capital_of", "France", "Country")

    def test_malformed_line_dropped_and_counted(self, caplog):
        doc = Document(id="d", title="d", body="irrelevant", source="mem")
        canned = (
            "Paris | City | capital_of | France | Country\n"
            "Berlin | City | capital_of | Germany | Country\n"
            "broken | line | with | too | many | fields | here\n"
        )
        backend = StubChatBackend(fixtures={prompt_hash(extraction_prompt(doc.body)): canned})
        with caplog.at_level("WARNING"):
            graph_doc = extract_graph_document(doc, backend)
        assert len(graph_doc.records) == 2
        assert graph_doc.dropped == 1

    def test_duplicates_preserved_at_extraction_stage(self, stub_backend):
        body = "A | T | r | B | T\nA | T | r | B | T"
        doc = Document(id="d", title="d", body=body, source="mem")
        graph_doc = extract_graph_document(doc, stub_backend)
        assert len(graph_doc.records) == 2

    def test_zero_parseable_triples_warns_not_fatal(self, stub_backend, caplog):
        doc = Document(id="d", title="d", body="just prose, no facts", source="mem")
        with caplog.at_level("WARNING"):
            graph_doc = extract_graph_document(doc, stub_backend)
        assert graph_doc.records == []
        assert any("no parseable" in r.message for r in caplog.records)


class TestBuildKg:
    def test_shared_entity_merges_to_single_node(self, stub_backend):
        docs = [
            Document(id="d1", title="d1", body="Paris | City | capital_of | France | Country", source="m"),
            Document(id="d2", title="d2", body="France | Country | borders | Spain | Country", source="m"),
        ]
        graph, report = build_kg(docs, stub_backend)
        assert len([n for n in graph.nodes if n == "france"]) == 1
        assert len(graph.edges) == 2
        assert report.triples_kept == 2

    def test_single_document_reduction(self, stub_backend):
        doc = Document(id="d", title="d", body="A | T | r | B | T\nA | T | r2 | C | T", source="m")
        graph, _ = build_kg([doc], stub_backend)
        graph_doc = extract_graph_document(doc, stub_backend)
        assert len(graph.edges) == len(graph_doc.records)

    def test_document_order_invariance(self, corpus_paths, stub_backend):
        docs = ingest_documents(corpus_paths)
        g1, _ = build_kg(docs, stub_backend)
        g2, _ = build_kg(list(reversed(docs)), stub_backend)
        assert g1 == g2

    def test_every_edge_traceable_to_provenance(self, corpus_paths, stub_backend):
        docs = ingest_documents(corpus_paths)
        graph, report = build_kg(docs, stub_backend)
        for edge in graph.edges:
            key = "|".join(edge.dedup_key())
            assert key in report.provenance
            assert len(report.provenance[key]) >= 1

    def test_micro_corpus_matches_golden_graph(self, micro_graph):
        golden = KnowledgeGraph.load(DATA_DIR / "golden_graph.jsonl")
        assert micro_graph == golden

    def test_type_conflict_reported(self, stub_backend):
        docs = [
            Document(id="d1", title="d1", body="Alpha | Person | knows | Beta | Person", source="m"),
            Document(id="d2", title="d2", body="Alpha | Robot | knows | Gamma | Person", source="m"),
        ]
        graph, report = build_kg(docs, stub_backend)
        assert graph.node("alpha").entity_type == "Person"  # first seen in merge order
        assert any("alpha" in c for c in report.type_conflicts)

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kgquiz.builder import build_kg, ingest_documents
from kgquiz.gateway import StubChatBackend
from kgquiz.graph import EntityNode, KnowledgeGraph

REPO_ROOT = Path(__file__).parents[1]
CORPUS_DIR = REPO_ROOT / "corpus"
DATA_DIR = Path(__file__).parent / "data"


def node(name: str, entity_type: str = "Thing") -> EntityNode:
    return EntityNode.from_name(name, entity_type)


def chain_graph(names: list[str], predicate: str = "next", entity_type: str = "Thing") -> KnowledgeGraph:
    g = KnowledgeGraph()
    for a, b in zip(names, names[1:]):
        g.add_triple(node(a, entity_type), predicate, node(b, entity_type))
    return g


def random_graph(rng: np.random.Generator, n_nodes: int, n_edges: int, n_types: int = 3) -> KnowledgeGraph:
    g = KnowledgeGraph()
    types = [f"T{t}" for t in range(n_types)]
    for i in range(n_nodes):
        g.add_node(node(f"n{i}", types[int(rng.integers(n_types))]))
    for _ in range(n_edges):
        a = int(rng.integers(n_nodes))
        b = int(rng.integers(n_nodes))
        if a == b:
            continue
        g.add_triple(
            g.node(f"n{a}"),
            f"r{int(rng.integers(4))}",
            g.node(f"n{b}"),
        )
    return g


@pytest.fixture(scope="session")
def corpus_paths() -> list[Path]:
    return sorted(CORPUS_DIR.glob("*.txt"))


@pytest.fixture(scope="session")
def micro_graph(corpus_paths):
    docs = ingest_documents(corpus_paths)
    graph, report = build_kg(docs, StubChatBackend())
    return graph


@pytest.fixture()
def stub_backend() -> StubChatBackend:
    return StubChatBackend()

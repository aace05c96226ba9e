"""Prompt templates for extraction, stem writing, and the two judges.

Every template starts the user content with a ``TASK:`` marker and encodes the
grounding facts as ``FACT: subject | predicate | object`` lines. Live backends
get instructions in plain language around those markers; the stub backend
dispatches on the marker and reads the same lines.
"""

from __future__ import annotations

from .gateway import ChatPrompt
from .graph import KnowledgeGraph

EXTRACTION_SYSTEM = (
    "You turn factual text into knowledge-graph triples. Output only the"
    " requested lines, nothing else."
)

STEM_SYSTEM = (
    "You write trivia-style quiz questions, concise and unambiguous, in the"
    " spirit of a television quiz show. Output only the question text."
)

JUDGE_SYSTEM = "You judge quiz answer options. Reply with YES or NO only."


def extraction_prompt(body: str) -> ChatPrompt:
    user = (
        "TASK: extract-triples\n"
        "Extract every factual relation from the document below. Output one"
        " relation per line, formatted exactly as:\n"
        "subject | subject_type | predicate | object | object_type\n"
        "DOCUMENT:\n"
        f"{body}"
    )
    return ChatPrompt(system=EXTRACTION_SYSTEM, user=user, max_tokens=2048)


def _fact_lines(graph: KnowledgeGraph, edges, tag: str = "FACT") -> list[str]:
    lines = []
    for edge in edges:
        src = graph.node(edge.src).name
        dst = graph.node(edge.dst).name
        lines.append(f"{tag}: {src} | {edge.predicate} | {dst}")
    return lines


def stem_prompt(graph: KnowledgeGraph, subgraph, attempt: int = 0) -> ChatPrompt:
    """Prompt asking for a question stem whose answer is the key entity.

    ``subgraph`` is an AssociatedSubgraph; the key name must not be echoed
    into the stem, so it is passed as the answer to ask about, not to reveal.
    """
    key_node = graph.node(subgraph.key)
    lines = [
        "TASK: write-stem",
        f"KEY: {key_node.name}",
        f"KEY_TYPE: {key_node.entity_type}",
        f"KIND: {subgraph.kind}",
    ]
    lines.extend(_fact_lines(graph, subgraph.main_edges))
    if subgraph.extra is not None:
        lines.extend(_fact_lines(graph, [subgraph.extra], tag="EXTRA"))
    if attempt > 0:
        lines.append(f"ATTEMPT: {attempt}")
    lines.append(
        "Write one trivia question (a context sentence plus the question when"
        " an EXTRA line is present) whose unique answer is the KEY entity."
        " Use only the facts above. Never mention the KEY name itself."
    )
    return ChatPrompt(system=STEM_SYSTEM, user="\n".join(lines))


def validation_prompt(graph: KnowledgeGraph, subgraph, stem: str, distractor_name: str) -> ChatPrompt:
    lines = [
        "TASK: judge-distractor",
        f"STEM: {stem}",
        f"DISTRACTOR: {distractor_name}",
    ]
    lines.extend(_fact_lines(graph, subgraph.all_edges()))
    lines.append(
        "Could the DISTRACTOR be a correct answer to the STEM? Reply YES or NO."
    )
    return ChatPrompt(system=JUDGE_SYSTEM, user="\n".join(lines), max_tokens=8)


def extra_fact_prompt(graph: KnowledgeGraph, subgraph, stem: str) -> ChatPrompt:
    lines = [
        "TASK: judge-extra-fact",
        f"STEM: {stem}",
    ]
    lines.extend(_fact_lines(graph, subgraph.all_edges()))
    types = sorted({graph.node(v).entity_type for v in subgraph.node_ids()})
    lines.append(f"TYPES: {', '.join(types)}")
    lines.append(
        "Does the STEM state factual content that is not inferable from the"
        " FACT lines above (entity types included)? Reply YES or NO."
    )
    return ChatPrompt(system=JUDGE_SYSTEM, user="\n".join(lines), max_tokens=8)

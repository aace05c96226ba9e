"""Provider-agnostic chat-completion transport.

Two backends share the same ``complete`` contract: a live HTTP backend that
speaks the common chat-completions JSON shape, and a deterministic stub that
resolves prompts from a fixture table and synthesizes rule-based answers for
fixture misses so the whole pipeline runs without a network.
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import httpx

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}

# Closed list of function words the extra-fact judge ignores when checking a
# stem against subgraph vocabulary. Template words used by the stub stem
# writer must all be in here.
JUDGE_STOPWORDS = frozenset(
    {
        "a", "also", "an", "and", "answer", "are", "by", "connected",
        "consider", "does", "entities", "entity", "for", "from", "has",
        "have", "in", "is", "it", "linked", "of", "or", "relation",
        "relations", "that", "the", "this", "through", "to", "was", "were",
        "what", "when", "where", "which", "who", "whom", "with",
    }
)


class GatewayError(RuntimeError):
    """Base class for chat transport failures."""


class TransportError(GatewayError):
    """Raised after retries are exhausted against a live backend."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts


class FixtureMissError(GatewayError):
    """Raised by the stub when no fixture matches and synthesis is disabled."""

    def __init__(self, prompt_digest: str):
        super().__init__(f"no fixture for prompt hash {prompt_digest}")
        self.prompt_digest = prompt_digest


@dataclass(frozen=True)
class ChatPrompt:
    system: str
    user: str
    temperature: float = 0.0
    max_tokens: int = 512

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("prompt user content must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def prompt_hash(prompt: ChatPrompt) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(prompt.system.encode("utf-8"))
    h.update(b"\x1f")
    h.update(prompt.user.encode("utf-8"))
    return h.hexdigest()


class TokenBucket:
    """Simple blocking rate limiter (requests per second)."""

    def __init__(self, rate_per_second: float, capacity: float | None = None):
        if rate_per_second <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_second
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_second)
        self._tokens = self.capacity
        self._updated = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        """Take one token, sleeping if none is available. Returns the wait."""
        waited = 0.0
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self.capacity, self._tokens + (now - self._updated) * self.rate)
                self._updated = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return waited
                deficit = (1.0 - self._tokens) / self.rate
            time.sleep(deficit)
            waited += deficit


# ---------------------------------------------------------------------------
# Stub backend
# ---------------------------------------------------------------------------


def _parse_field(user: str, name: str) -> Optional[str]:
    match = re.search(rf"^{name}:\s*(.*)$", user, flags=re.MULTILINE)
    return match.group(1).strip() if match else None


def _parse_tagged_facts(user: str, tag: str) -> list[tuple[str, str, str]]:
    facts = []
    for match in re.finditer(rf"^{tag}:\s*(.+)$", user, flags=re.MULTILINE):
        parts = [p.strip() for p in match.group(1).split("|")]
        if len(parts) == 3 and all(parts):
            facts.append((parts[0], parts[1], parts[2]))
    return facts


def parse_pipe_records(text: str, n_fields: int = 5) -> tuple[list[tuple[str, ...]], int]:
    """Extract pipe-separated records with exactly ``n_fields`` non-empty fields.

    Returns (records, dropped) where dropped counts lines that contained a
    pipe but did not parse cleanly.
    """
    records: list[tuple[str, ...]] = []
    dropped = 0
    for line in text.splitlines():
        if "|" not in line:
            continue
        parts = [p.strip() for p in line.split("|")]
        if len(parts) == n_fields and all(parts):
            records.append(tuple(parts))
        else:
            dropped += 1
    return records, dropped


def humanize_predicate(predicate: str) -> str:
    return predicate.replace("_", " ").strip()


def _stub_extract(user: str) -> str:
    # Parse facts from the document body only; the surrounding instructions
    # also contain pipe-formatted lines (the output format example).
    _, _, document = user.partition("DOCUMENT:")
    records, _ = parse_pipe_records(document if document else user, n_fields=5)
    return "\n".join(" | ".join(record) for record in records)


def _stub_stem(user: str) -> str:
    key = _parse_field(user, "KEY") or ""
    kind = (_parse_field(user, "KIND") or "triple").lower()
    attempt = int(_parse_field(user, "ATTEMPT") or 0)
    facts = _parse_tagged_facts(user, "FACT")
    extras = _parse_tagged_facts(user, "EXTRA")
    if not facts:
        return "Which entity is this?"

    if kind == "quintuple" and len(facts) >= 2:
        s1, p1, o1 = facts[0]
        s2, p2, o2 = facts[1]
        mid = o1 if s1 == key else s1
        end = o2 if s2 == mid else s2
        templates = [
            "Which entity is connected by the relation '{p1}' to the entity"
            " that is linked to {end} through the relation '{p2}'?",
            "Which entity has the relation '{p1}' with the entity that is"
            " connected to {end} by the relation '{p2}'?",
        ]
        question = templates[attempt % len(templates)].format(
            p1=humanize_predicate(p1), p2=humanize_predicate(p2), end=end
        )
    else:
        s, p, o = facts[0]
        other = o if s == key else s
        templates = [
            "Which entity is connected to {other} by the relation '{p}'?",
            "Which entity is linked with {other} through the relation '{p}'?",
            "Which entity has the relation '{p}' with {other}?",
        ]
        question = templates[attempt % len(templates)].format(
            other=other, p=humanize_predicate(p)
        )

    if extras:
        es, ep, eo = extras[0]
        other_e = eo if es == key else es
        context = (
            "The answer is also connected to {other} by the relation '{p}'.".format(
                other=other_e, p=humanize_predicate(ep)
            )
        )
        return f"{context} {question}"
    return question


def _stub_judge_distractor(user: str) -> str:
    distractor = (_parse_field(user, "DISTRACTOR") or "").casefold()
    facts = _parse_tagged_facts(user, "FACT")
    for _, _, obj in facts:
        if obj.casefold() == distractor:
            return "YES"
    return "NO"


def _stem_tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def _stub_judge_extra_fact(user: str) -> str:
    stem = _parse_field(user, "STEM") or ""
    facts = _parse_tagged_facts(user, "FACT")
    vocabulary: set[str] = set()
    for s, p, o in facts:
        vocabulary.update(_stem_tokens(s))
        vocabulary.update(_stem_tokens(humanize_predicate(p)))
        vocabulary.update(_stem_tokens(o))
    vocabulary.update(_stem_tokens(_parse_field(user, "TYPES") or ""))
    for token in _stem_tokens(stem):
        if token not in vocabulary and token not in JUDGE_STOPWORDS:
            return "YES"
    return "NO"


_STUB_TASKS = {
    "extract-triples": _stub_extract,
    "write-stem": _stub_stem,
    "judge-distractor": _stub_judge_distractor,
    "judge-extra-fact": _stub_judge_extra_fact,
}


@dataclass
class StubChatBackend:
    """Pure, deterministic backend: fixture table first, then synthesis rules.

    ``fixtures`` maps prompt hashes to canned responses. ``fixture_dir`` may
    hold one file per prompt hash. With ``synthesize`` enabled, fixture misses
    fall through to rule-based responses keyed on the prompt's TASK marker.
    """

    fixtures: dict[str, str] = field(default_factory=dict)
    fixture_dir: Optional[Path] = None
    synthesize: bool = True

    def __post_init__(self) -> None:
        if self.fixture_dir is not None:
            for entry in sorted(Path(self.fixture_dir).glob("*")):
                if entry.is_file():
                    self.fixtures.setdefault(entry.name, entry.read_text(encoding="utf-8"))

    def complete(self, prompt: ChatPrompt) -> str:
        digest = prompt_hash(prompt)
        if digest in self.fixtures:
            return self.fixtures[digest]
        if not self.synthesize:
            raise FixtureMissError(digest)
        task_match = re.search(r"^TASK:\s*(\S+)", prompt.user, flags=re.MULTILINE)
        task = task_match.group(1) if task_match else ""
        handler = _STUB_TASKS.get(task)
        if handler is None:
            raise FixtureMissError(digest)
        return handler(prompt.user)


# ---------------------------------------------------------------------------
# Live backend
# ---------------------------------------------------------------------------


class LiveChatBackend:
    """Chat-completions HTTP backend with retry, backoff, and rate limiting.

    The credential is read from the environment variable named in the
    configuration; it is never stored in config files.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        credential_env: str = "KGQUIZ_API_KEY",
        max_retries: int = 3,
        backoff_base: float = 0.5,
        rate_per_second: float | None = None,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 60.0,
    ):
        credential = os.environ.get(credential_env)
        if not credential:
            raise GatewayError(
                f"live backend requires credential in environment variable {credential_env!r}"
            )
        self.endpoint = endpoint
        self.model = model
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.last_attempts = 0
        self._bucket = TokenBucket(rate_per_second) if rate_per_second else None
        self._client = httpx.Client(
            headers={"Authorization": f"Bearer {credential}"},
            timeout=timeout,
            transport=transport,
        )

    def complete(self, prompt: ChatPrompt) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": prompt.temperature,
            "max_tokens": prompt.max_tokens,
        }
        last_error = "unknown error"
        for attempt in range(1, self.max_retries + 1):
            self.last_attempts = attempt
            if self._bucket is not None:
                self._bucket.acquire()
            try:
                response = self._client.post(self.endpoint, json=body)
            except httpx.HTTPError as exc:
                last_error = f"transport failure: {exc}"
                logger.warning("chat attempt %d/%d failed: %s", attempt, self.max_retries, exc)
            else:
                if response.status_code == 200:
                    data = response.json()
                    return data["choices"][0]["message"]["content"]
                last_error = f"HTTP {response.status_code}"
                if response.status_code not in RETRYABLE_STATUS:
                    raise TransportError(last_error, attempt)
                logger.warning(
                    "chat attempt %d/%d got %s", attempt, self.max_retries, response.status_code
                )
            if attempt < self.max_retries:
                time.sleep(self.backoff_base * (2 ** (attempt - 1)))
        raise TransportError(last_error, self.max_retries)

    def close(self) -> None:
        self._client.close()


ChatBackend = StubChatBackend | LiveChatBackend


def complete(prompt: ChatPrompt, backend: ChatBackend) -> str:
    """Run one chat completion against the given backend."""
    return backend.complete(prompt)

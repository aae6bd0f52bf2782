"""Two-tier agent memory: a bounded STM buffer and an LTM of embedded summaries."""
from __future__ import annotations

import hashlib
import json
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .behavior import ActionState
from .errors import ConfigError, GenerationError

EMBED_DIM = 384
_TOKEN = re.compile(r"[a-z0-9]+")

STOPWORDS = frozenset(
    "a an and are as at be but by for from has have i in is it its my of on or so that the this "
    "to was were with we you your our they their me not just about what how why".split()
)


class MemoryKind(str, Enum):
    INTEREST = "interest"
    OPINION = "opinion"
    PAST_EVENT = "past_event"


@dataclass(frozen=True)
class StmEntry:
    tick: int
    action: ActionState
    content: str | None = None
    counterpart: int | None = None
    target_post: int | None = None
    topic: str | None = None  # label hint for summarization; optional

    def __post_init__(self):
        if self.tick < 0:
            raise ValueError("tick must be non-negative")
        object.__setattr__(self, "action", ActionState(self.action))

    def describe(self) -> str:
        parts = [f"[t={self.tick}] {self.action.value}"]
        if self.target_post is not None:
            parts.append(f"post #{self.target_post}")
        if self.counterpart is not None:
            parts.append(f"user {self.counterpart}")
        if self.content:
            parts.append(f'"{self.content}"')
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {"tick": self.tick, "action": self.action.value, "content": self.content,
                "counterpart": self.counterpart, "target_post": self.target_post, "topic": self.topic}

    @classmethod
    def from_dict(cls, d: dict) -> "StmEntry":
        return cls(d["tick"], ActionState(d["action"]), d.get("content"), d.get("counterpart"),
                   d.get("target_post"), d.get("topic"))


@dataclass
class LtmItem:
    id: int
    summary_text: str
    label: str
    kind: MemoryKind
    tick_range: tuple[int, int]
    embedding: np.ndarray

    def to_dict(self) -> dict:
        return {"id": self.id, "summary_text": self.summary_text, "label": self.label,
                "kind": MemoryKind(self.kind).value, "tick_range": list(self.tick_range),
                "embedding": [float(x) for x in self.embedding]}

    @classmethod
    def from_dict(cls, d: dict) -> "LtmItem":
        return cls(d["id"], d["summary_text"], d["label"], MemoryKind(d["kind"]),
                   tuple(d["tick_range"]), np.asarray(d["embedding"], dtype=float))


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

class EmbeddingProvider(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class HashingEmbedder:
    """Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.

    Empty (token-free) text maps to the zero vector, which carries no information
    and is skipped by retrieval.
    """

    def __init__(self, dim: int = EMBED_DIM):
        if dim < 1:
            raise ConfigError("embedding dim must be positive", "dim")
        self.dim = dim
        self._cache: dict[str, tuple[int, float]] = {}

    def _bucket(self, token: str) -> tuple[int, float]:
        hit = self._cache.get(token)
        if hit is None:
            h = int.from_bytes(hashlib.blake2b(token.encode(), digest_size=8).digest(), "little")
            hit = (h % self.dim, 1.0 if (h >> 63) & 1 else -1.0)
            self._cache[token] = hit
        return hit

    def embed(self, text: str) -> np.ndarray:
        v = np.zeros(self.dim)
        for tok in tokenize(text or ""):
            i, s = self._bucket(tok)
            v[i] += s
        norm = np.linalg.norm(v)
        return v / norm if norm > 0 else v


def is_informative(v: np.ndarray) -> bool:
    return bool(np.any(v))


# ---------------------------------------------------------------------------
# summarization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Summary:
    text: str
    label: str
    kind: MemoryKind


class Summarizer(Protocol):
    def summarize(self, entries: Sequence[StmEntry]) -> Summary: ...


def batch_label(entries: Sequence[StmEntry]) -> str:
    """Most frequent topic in the batch; falls back to the most frequent content word."""
    topics = Counter(e.topic for e in entries if e.topic)
    if topics:
        return _most_common(topics)
    words = Counter(t for e in entries if e.content for t in tokenize(e.content)
                    if t not in STOPWORDS and not t.isdigit() and len(t) > 2)
    return _most_common(words) if words else "general"


def _most_common(counter: Counter) -> str:
    # ties resolve to the first-seen key, which Counter preserves
    best = max(counter.values())
    return next(k for k, v in counter.items() if v == best)


def batch_kind(entries: Sequence[StmEntry]) -> MemoryKind:
    acts = {e.action for e in entries}
    if acts & {ActionState.POST, ActionState.REPLY}:
        return MemoryKind.OPINION
    if acts <= {ActionState.READ, ActionState.LIKE}:
        return MemoryKind.INTEREST
    return MemoryKind.PAST_EVENT


class StubSummarizer:
    """Deterministic rule-based summaries."""

    def summarize(self, entries: Sequence[StmEntry]) -> Summary:
        label = batch_label(entries)
        counts = Counter(e.action.value for e in entries)
        acts = ", ".join(f"{a} x{n}" for a, n in sorted(counts.items()))
        lo, hi = entries[0].tick, entries[-1].tick
        snippets = " | ".join(e.content for e in entries if e.content)[:300]
        text = f"Ticks {lo}-{hi} on {label}: {acts}."
        if snippets:
            text += f" Said or saw: {snippets}"
        return Summary(text, label, batch_kind(entries))


# ---------------------------------------------------------------------------
# store
# ---------------------------------------------------------------------------

@dataclass
class MemoryConfig:
    capacity: int = 10
    batch: int = 5
    dim: int = EMBED_DIM
    k: int = 3

    def validate(self) -> None:
        if self.capacity < 1:
            raise ConfigError("STM capacity must be >= 1", "capacity")
        if not 1 <= self.batch <= self.capacity:
            raise ConfigError("summarize batch must satisfy 1 <= B <= C", "batch")
        if self.k < 1:
            raise ConfigError("k must be >= 1", "k")


class MemoryStore:
    """Per-agent memory. ``record`` and ``retrieve`` are the only mutating/reading paths."""

    def __init__(self, capacity: int = 10, batch: int = 5):
        MemoryConfig(capacity, batch).validate()
        self.capacity = capacity
        self.batch = batch
        self.stm: deque[StmEntry] = deque()
        self.ltm: list[LtmItem] = []
        self.staging: list[list[StmEntry]] = []  # batches whose summarization failed
        self._next_id = 0
        self._matrix: np.ndarray | None = None  # cached stacked embeddings

    # -- write path --------------------------------------------------------
    def record(self, entry: StmEntry, summarizer: Summarizer, embedder: EmbeddingProvider) -> LtmItem | None:
        self.stm.append(entry)
        if len(self.stm) > self.capacity:
            self.staging.append([self.stm.popleft() for _ in range(self.batch)])
        created = None
        while self.staging:
            try:
                item = self._summarize(self.staging[0], summarizer, embedder)
            except GenerationError:
                break  # retried on the next record
            self.staging.pop(0)
            created = item
        return created

    def _summarize(self, entries, summarizer, embedder) -> LtmItem:
        s = summarizer.summarize(entries)
        emb = embedder.embed(s.text)
        item = LtmItem(self._next_id, s.text, s.label, MemoryKind(s.kind),
                       (entries[0].tick, entries[-1].tick), emb)
        self._next_id += 1
        self.ltm.append(item)
        self._matrix = None
        return item

    def add_item(self, item: LtmItem) -> None:
        self.ltm.append(item)
        self._next_id = max(self._next_id, item.id + 1)
        self._matrix = None

    # -- read path ---------------------------------------------------------
    def retrieve(self, query: str, k: int, embedder: EmbeddingProvider) -> list[LtmItem]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not self.ltm:
            return []
        q = embedder.embed(query)
        if not is_informative(q):
            return []
        if self._matrix is None:
            self._matrix = np.stack([it.embedding for it in self.ltm])
        sims = (self._matrix * q).sum(axis=1)
        informative = np.any(self._matrix != 0.0, axis=1)
        last = np.array([it.tick_range[1] for it in self.ltm])
        ids = np.array([it.id for it in self.ltm])
        order = np.lexsort((ids, -last, -sims))
        order = order[informative[order]]
        return [self.ltm[i] for i in order[:k]]

    def memory_text(self, query: str, k: int, embedder: EmbeddingProvider) -> str:
        """Text block injected into prompts: recent STM plus the top-k LTM summaries."""
        lines = [e.describe() for e in self.stm]
        lines += [f"(earlier, {it.kind.value}: {it.label}) {it.summary_text}"
                  for it in self.retrieve(query, k, embedder)] if self.ltm else []
        return "\n".join(lines)

    # -- snapshot ------------------------------------------------------------
    def snapshot(self) -> dict:
        return {
            "capacity": self.capacity, "batch": self.batch,
            "stm": [e.to_dict() for e in self.stm],
            "ltm": [it.to_dict() for it in self.ltm],
            "staging": [[e.to_dict() for e in b] for b in self.staging],
        }

    @classmethod
    def from_snapshot(cls, d: dict) -> "MemoryStore":
        store = cls(d.get("capacity", 10), d.get("batch", 5))
        store.stm.extend(StmEntry.from_dict(e) for e in d["stm"])
        for it in d["ltm"]:
            store.add_item(LtmItem.from_dict(it))
        store.staging = [[StmEntry.from_dict(e) for e in b] for b in d.get("staging", [])]
        return store


def write_snapshots(stores: dict[int, MemoryStore], directory: str | Path) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for agent_id in sorted(stores):
        p = out / f"agent_{agent_id}.json"
        p.write_text(json.dumps(stores[agent_id].snapshot()), encoding="utf-8")
        paths.append(p)
    return paths


__all__ = [
    "EMBED_DIM", "HashingEmbedder", "LtmItem", "MemoryConfig", "MemoryKind", "MemoryStore",
    "StmEntry", "StubSummarizer", "Summary", "batch_kind", "batch_label",
    "tokenize", "write_snapshots",
]

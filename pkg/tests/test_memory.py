import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from osnsim.behavior import ActionState
from osnsim.errors import GenerationError
from osnsim.memory import (HashingEmbedder, LtmItem, MemoryKind, MemoryStore, StmEntry, StubSummarizer,
                           write_snapshots)

EMB = HashingEmbedder()
SUM = StubSummarizer()


def entry(t, action=ActionState.POST, content=None, topic=None):
    return StmEntry(t, action, content or f"entry {t}", None, None, topic)


def brute_force_top_k(items, q, k):
    """Exhaustive cosine scan: similarity desc, last tick desc, id asc."""
    qn = np.linalg.norm(q)
    scored = []
    for it in items:
        en = np.linalg.norm(it.embedding)
        if en == 0 or qn == 0:
            continue
        cos = float(np.dot(it.embedding, q) / (en * qn))
        scored.append((-round(cos, 12), -it.tick_range[1], it.id, it))
    scored.sort(key=lambda x: x[:3])
    return [s[3].id for s in scored[:k]]


def test_overflow_arithmetic():
    store = MemoryStore(capacity=3, batch=2)
    for t in range(1, 5):
        store.record(entry(t), SUM, EMB)
    assert [e.tick for e in store.stm] == [3, 4]
    assert len(store.ltm) == 1 and store.ltm[0].tick_range == (1, 2)


def test_no_ltm_at_capacity():
    store = MemoryStore(capacity=10, batch=5)
    for t in range(10):
        assert store.record(entry(t), SUM, EMB) is None
    assert store.ltm == [] and len(store.stm) == 10


def test_stub_label_and_kind():
    store = MemoryStore(capacity=1, batch=1)
    store.record(entry(0, topic="AI regulation", content="rules for AI"), SUM, EMB)
    item = store.record(entry(1, topic="AI regulation", content="more rules"), SUM, EMB)
    assert item.label == "AI regulation" and item.kind is MemoryKind.OPINION
    s = MemoryStore(capacity=2, batch=2)
    for t in range(3):
        s.record(entry(t, topic="AI regulation"), SUM, EMB)
    assert s.ltm[0].label == "AI regulation" and s.ltm[0].kind is MemoryKind.OPINION


def test_retrieve_empty_and_self_match():
    store = MemoryStore(3, 1)
    assert store.retrieve("anything", 3, EMB) == []
    texts = ["climate policy debate", "football transfer rumors", "cooking pasta at home"]
    for i, t in enumerate(texts):
        store.add_item(LtmItem(i, t, "x", MemoryKind.INTEREST, (i, i), EMB.embed(t)))
    assert store.retrieve("football transfer rumors", 1, EMB)[0].id == 1
    with pytest.raises(ValueError):
        store.retrieve("x", 0, EMB)


def test_embedder_contract():
    assert np.array_equal(EMB.embed("hello world"), EMB.embed("hello world"))
    assert np.linalg.norm(EMB.embed("x")) == pytest.approx(1.0, abs=1e-6)
    a, b, c = (EMB.embed(t) for t in ("climate policy debate", "climate policy debate today",
                                      "football transfer rumors"))
    assert a @ b > a @ c
    assert not EMB.embed("").any() and not EMB.embed("!!!").any()


def test_zero_embedding_ignored():
    store = MemoryStore(3, 1)
    store.add_item(LtmItem(0, "", "x", MemoryKind.INTEREST, (0, 0), np.zeros(EMB.dim)))
    store.add_item(LtmItem(1, "apples", "x", MemoryKind.INTEREST, (1, 1), EMB.embed("apples")))
    assert [it.id for it in store.retrieve("apples and pears", 5, EMB)] == [1]
    assert store.retrieve("", 5, EMB) == []


def random_store(rng, dim=16):
    n = int(rng.integers(0, 101))
    pool = rng.normal(size=(int(rng.integers(1, 12)), dim))
    pool /= np.linalg.norm(pool, axis=1, keepdims=True)
    store = MemoryStore(3, 1)
    ids = rng.permutation(1000)[:n]
    for i in ids:
        last = int(rng.integers(0, 6))
        store.add_item(LtmItem(int(i), "s", "l", MemoryKind.PAST_EVENT, (0, last),
                               pool[int(rng.integers(len(pool)))].copy()))
    return store, pool


class VecEmbedder:
    """Maps a query key straight to a vector so the oracle controls every score."""

    def __init__(self, table):
        self.table = table
        self.dim = table[next(iter(table))].shape[0]

    def embed(self, text):
        return self.table[text]


def test_retrieve_matches_brute_force_with_ties():
    rng = np.random.default_rng(2024)
    for _ in range(300):
        store, pool = random_store(rng)
        q = pool[int(rng.integers(len(pool)))] if rng.random() < 0.5 else rng.normal(size=pool.shape[1])
        emb = VecEmbedder({"q": q})
        got = [it.id for it in store.retrieve("q", 5, emb)]
        assert got == brute_force_top_k(store.ltm, q, 5)


class FlakySummarizer:
    def __init__(self, fail_pattern):
        self.fail_pattern = list(fail_pattern)
        self.calls = 0

    def summarize(self, entries):
        fail = self.fail_pattern[self.calls % len(self.fail_pattern)]
        self.calls += 1
        if fail:
            raise GenerationError("backend down")
        return SUM.summarize(entries)


@settings(max_examples=80, deadline=None)
@given(cap=st.integers(1, 8), data=st.data(), n=st.integers(0, 60),
       pattern=st.lists(st.booleans(), min_size=1, max_size=5))
def test_conservation_and_capacity(cap, data, n, pattern):
    batch = data.draw(st.integers(1, cap))
    store = MemoryStore(cap, batch)
    summ = FlakySummarizer(pattern)
    for t in range(n):
        store.record(entry(t), summ, EMB)
        assert len(store.stm) <= cap
    covered = [e.tick for e in store.stm] + [e.tick for b in store.staging for e in b]
    for it in store.ltm:
        covered += list(range(it.tick_range[0], it.tick_range[1] + 1))
    assert sorted(covered) == list(range(n))


def test_snapshot_roundtrip(tmp_path):
    store = MemoryStore(3, 2)
    for t in range(7):
        store.record(entry(t, content=f"talking about topic {t}"), SUM, EMB)
    clone = MemoryStore.from_snapshot(json.loads(json.dumps(store.snapshot())))
    assert [e.to_dict() for e in clone.stm] == [e.to_dict() for e in store.stm]
    assert [it.id for it in clone.retrieve("topic", 3, EMB)] == [it.id for it in store.retrieve("topic", 3, EMB)]
    paths = write_snapshots({5: store}, tmp_path / "mem")
    assert paths[0].name == "agent_5.json"


def test_negative_tick_rejected():
    with pytest.raises(ValueError):
        StmEntry(-1, ActionState.READ)

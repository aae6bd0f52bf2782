"""Round-robin simulation engine: seed posts, feeds, action execution, event log."""
from __future__ import annotations

import json
import logging
import math
import platform
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .behavior import ACTIONS, ActionState, AgentChain, BehaviorConfig, personalize
from .content import GenerationRequest, StubGenerator, Task, TextGenerator, generate
from .errors import ConfigError, GenerationError
from .memory import HashingEmbedder, MemoryStore, StmEntry, batch_kind, batch_label, Summary
from .netgen import SocialGraph
from .profilegen import AgentProfile, UserType

log = logging.getLogger(__name__)

ENGINE_VERSION = "1"

MASTODON_ENTITY = {
    "post": "status", "reply": "status", "share": "reblog", "like": "favourite",
    "follow": "follow", "unfollow": "follow", "read": None,
}


class PostKind(str, Enum):
    ROOT = "root"
    REPLY = "reply"
    SHARE = "share"


@dataclass
class PostRecord:
    post_id: int
    author_id: int
    tick: int
    text: str
    kind: PostKind
    parent_id: int | None = None
    like_count: int = 0
    share_count: int = 0
    reply_count: int = 0
    topic: str = ""
    narrative_id: str | None = None

    def __post_init__(self):
        self.kind = PostKind(self.kind)
        if (self.kind is PostKind.ROOT) != (self.parent_id is None):
            raise ValueError("reply/share posts need parent_id and root posts must not have one")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


@dataclass(frozen=True)
class FeedItem:
    post: PostRecord          # the original post (a share surfaces the shared post)
    sharer: int | None        # followee who shared it, None when authored by a followee
    entry_id: int             # id of the record that put it in the feed
    tick: int


@dataclass
class SimEvent:
    event_id: int
    tick: int
    agent_id: int
    action: ActionState
    target_post: int | None = None
    target_agent: int | None = None
    content_ref: int | None = None
    text: str | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        action = ActionState(self.action).value
        return {
            "event_id": self.event_id, "tick": self.tick, "agent_id": self.agent_id,
            "action": action, "entity": MASTODON_ENTITY[action],
            "target_post": self.target_post, "target_agent": self.target_agent,
            "content_ref": self.content_ref, "text": self.text,
            "meta": {k: self.meta[k] for k in sorted(self.meta)},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "SimEvent":
        return cls(d["event_id"], d["tick"], d["agent_id"], ActionState(d["action"]), d.get("target_post"),
                   d.get("target_agent"), d.get("content_ref"), d.get("text"), dict(d.get("meta") or {}))


@dataclass
class SimConfig:
    n_ticks: int | None = None
    wall_clock_s: float | None = None
    actions_per_agent: int | None = 500
    seed_poster_fraction: float = 0.1
    seed_posts_per_poster: int = 2
    feed_size: int = 20
    read_batch: int = 5
    sporadic_activation_prob: float = 0.2
    topic: str = "AI regulation"
    language: str = "English"
    post_len: int = 280
    rng_seed: int = 0
    memory_capacity: int = 10
    memory_batch: int = 5
    memory_k: int = 3

    def validate(self) -> None:
        if not 0.0 < self.seed_poster_fraction <= 1.0:
            raise ConfigError("seed_poster_fraction must be in (0, 1]", "seed_poster_fraction")
        if self.seed_posts_per_poster < 0:
            raise ConfigError("seed_posts_per_poster must be >= 0", "seed_posts_per_poster")
        if self.feed_size < 1:
            raise ConfigError("feed_size must be >= 1", "feed_size")
        if self.read_batch < 1:
            raise ConfigError("read_batch must be >= 1", "read_batch")
        if not 0.0 <= self.sporadic_activation_prob <= 1.0:
            raise ConfigError("sporadic_activation_prob must be in [0, 1]", "sporadic_activation_prob")
        if self.n_ticks is None and self.wall_clock_s is None and self.actions_per_agent is None:
            raise ConfigError("set at least one budget: n_ticks, wall_clock_s or actions_per_agent", "n_ticks")
        if self.n_ticks is not None and self.n_ticks < 0:
            raise ConfigError("n_ticks must be >= 0", "n_ticks")
        if self.actions_per_agent is not None and self.actions_per_agent < 0:
            raise ConfigError("actions_per_agent must be >= 0", "actions_per_agent")
        if self.wall_clock_s is not None and self.wall_clock_s <= 0:
            raise ConfigError("wall_clock_s must be positive", "wall_clock_s")
        if not self.topic.strip():
            raise ConfigError("topic must not be empty", "topic")
        if self.post_len < 1:
            raise ConfigError("post_len must be positive", "post_len")
        if self.memory_capacity < 1 or not 1 <= self.memory_batch <= self.memory_capacity:
            raise ConfigError("memory settings need 1 <= memory_batch <= memory_capacity", "memory_batch")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad simulation config: {exc}") from exc
        cfg.validate()
        return cfg


class LlmSummarizer:
    """Summaries written by a text backend; label and kind follow the rule-based scheme."""

    def __init__(self, profile: AgentProfile, backend: TextGenerator, language: str = "English",
                 max_len: int = 500):
        self.profile = profile
        self.backend = backend
        self.language = language
        self.max_len = max_len

    def summarize(self, entries: Sequence[StmEntry]) -> Summary:
        label = batch_label(entries)
        req = GenerationRequest(self.profile.id, Task.SUMMARIZE, topic=label, language=self.language,
                                post_len=self.max_len)
        memory_text = "\n".join(e.describe() for e in entries)
        text = generate(req, self.backend, profile=self.profile, memory_text=memory_text)
        return Summary(text, label, batch_kind(entries))


@dataclass
class RunResult:
    events: list[SimEvent]
    posts: dict[int, PostRecord]
    graph: SocialGraph
    memories: dict[int, MemoryStore]
    manifest: dict
    population: list[AgentProfile]


class Simulation:
    """Holds the evolving world and executes agent turns in round-robin order."""

    def __init__(self, population: Sequence[AgentProfile], graph: SocialGraph, cfg: SimConfig | None = None,
                 behavior: BehaviorConfig | None = None, backend: TextGenerator | None = None,
                 red=None, audit=None, event_sink: IO[str] | None = None):
        self.cfg = cfg or SimConfig()
        self.cfg.validate()
        self.behavior = behavior or BehaviorConfig()
        self.behavior.validate()
        self.backend = backend or StubGenerator(seed=self.cfg.rng_seed)
        self.audit = audit
        self.sink = event_sink
        self.embedder = HashingEmbedder()
        self.graph = graph.copy()
        self.profiles: dict[int, AgentProfile] = {}
        self.posts: dict[int, PostRecord] = {}
        self.events: list[SimEvent] = []
        self.outbox: dict[int, list[tuple]] = {}
        self.inbox: dict[int, dict[int, tuple]] = {}
        self.read: dict[int, set[int]] = {}
        self.memories: dict[int, MemoryStore] = {}
        self.chains: dict[int, AgentChain] = {}
        self.rngs: dict[int, np.random.Generator] = {}
        self.action_counts: dict[int, int] = {}
        self.stm_violations = 0
        self._next_post = 0
        self._next_event = 0
        self.generation_failures = 0
        for p in population:
            self.add_agent(p)
        self.red = red
        if red is not None:
            red.attach(self)

    # -- setup ----------------------------------------------------------------
    def add_agent(self, profile: AgentProfile) -> None:
        pid = profile.id
        if pid in self.profiles:
            raise ConfigError(f"duplicate agent id {pid}", "population")
        self.profiles[pid] = profile
        if pid not in self.graph:
            self.graph.add_node(pid)
        self.outbox[pid] = []
        self.inbox[pid] = {}
        self.read[pid] = set()
        self.memories[pid] = MemoryStore(self.cfg.memory_capacity, self.cfg.memory_batch)
        self.rngs[pid] = np.random.default_rng([self.cfg.rng_seed, pid, 2])
        self.action_counts[pid] = 0
        if not profile.is_red:
            base = self.behavior.matrix_for(profile.user_type)
            m = personalize(base, profile.traits, self.behavior.sigma, self.behavior.lam,
                            np.random.default_rng([self.behavior.rng_seed, pid, 1]), self.behavior.trait_effects)
            self.chains[pid] = AgentChain(m)

    @property
    def order(self) -> list[int]:
        return sorted(self.profiles)

    @property
    def population(self) -> list[AgentProfile]:
        return [self.profiles[i] for i in self.order]

    # -- logging / memory --------------------------------------------------------
    def emit(self, tick: int, agent_id: int, action: ActionState, **kw) -> SimEvent:
        ev = SimEvent(self._next_event, tick, agent_id, ActionState(action), **kw)
        self._next_event += 1
        self.events.append(ev)
        if self.sink is not None:
            self.sink.write(ev.to_json() + "\n")
        return ev

    def remember(self, agent_id: int, entry: StmEntry) -> None:
        store = self.memories[agent_id]
        summarizer = LlmSummarizer(self.profiles[agent_id], self.backend, self.cfg.language)
        store.record(entry, summarizer, self.embedder)
        if len(store.stm) > store.capacity:
            self.stm_violations += 1

    def memory_text(self, agent_id: int, query: str) -> str:
        return self.memories[agent_id].memory_text(query, self.cfg.memory_k, self.embedder)

    # -- content primitives ------------------------------------------------------
    def publish(self, author: int, tick: int, text: str, kind: PostKind, parent: PostRecord | None = None,
                topic: str = "", narrative_id: str | None = None) -> PostRecord:
        rec = PostRecord(self._next_post, author, tick, text, kind,
                         None if parent is None else parent.post_id, topic=topic, narrative_id=narrative_id)
        self._next_post += 1
        self.posts[rec.post_id] = rec
        if parent is not None:
            if kind is PostKind.REPLY:
                parent.reply_count += 1
            elif kind is PostKind.SHARE:
                parent.share_count += 1
        shown = parent if kind is PostKind.SHARE else rec
        entry = (rec.post_id, tick, shown.post_id, author, author if kind is PostKind.SHARE else None)
        self.outbox[author].append(entry)
        for follower in self.graph.followers[author]:
            self.inbox[follower][rec.post_id] = entry
        return rec

    def feed(self, agent_id: int, size: int | None = None) -> list[FeedItem]:
        """Unread items from followees, newest first; shares surface the original post."""
        size = self.cfg.feed_size if size is None else size
        following = self.graph.following[agent_id]
        read = self.read[agent_id]
        inbox = self.inbox[agent_id]
        items: list[FeedItem] = []
        seen: set[int] = set()
        stale = []
        for key in reversed(inbox):
            entry_id, tick, post_id, source, sharer = inbox[key]
            post = self.posts[post_id]
            if post_id in read or post.author_id == agent_id:
                stale.append(key)
                continue
            if source not in following or post_id in seen:
                continue
            seen.add(post_id)
            items.append(FeedItem(post, sharer, entry_id, tick))
            if len(items) >= size:
                break
        for key in stale:
            del inbox[key]
        return items

    def mark_read(self, agent_id: int, post_ids: Iterable[int]) -> None:
        self.read[agent_id].update(post_ids)

    def source_of(self, item: FeedItem) -> int:
        return item.sharer if item.sharer is not None else item.post.author_id

    def follow(self, a: int, b: int) -> bool:
        if not self.graph.add_edge(a, b):
            return False
        inbox = self.inbox[a]
        for entry in self.outbox[b]:
            inbox[entry[0]] = entry
        self.inbox[a] = dict(sorted(inbox.items()))
        return True

    def unfollow(self, a: int, b: int) -> bool:
        if not self.graph.remove_edge(a, b):
            return False
        inbox = self.inbox[a]
        for key in [k for k, e in inbox.items() if e[3] == b]:
            del inbox[key]
        return True

    def generate_text(self, agent_id: int, task: Task, topic: str, *, reply_to: FeedItem | None = None,
                      red_layers: tuple[str, str, str] | None = None, query: str = "") -> str:
        profile = self.profiles[agent_id]
        ctx = None
        if reply_to is not None:
            ctx = (reply_to.post.text, self.profiles[reply_to.post.author_id].name)
        req = GenerationRequest(agent_id, task, topic=topic, language=self.cfg.language,
                                post_len=self.cfg.post_len, reply_context=ctx, red_layers=red_layers)
        return generate(req, self.backend, profile=profile,
                        memory_text=self.memory_text(agent_id, query or topic), audit=self.audit)

    # -- seed posts ----------------------------------------------------------------
    def seed_posters(self) -> list[int]:
        organic = [p for p in self.profiles.values() if not p.is_red]
        k = math.ceil(self.cfg.seed_poster_fraction * len(organic))
        ranked = sorted(organic, key=lambda p: (-p.social_activity, p.id))
        return sorted(p.id for p in ranked[:k])

    def seed_initial_posts(self, retries: int = 2) -> list[SimEvent]:
        out = []
        topic = self.cfg.topic
        for aid in self.seed_posters():
            for _ in range(self.cfg.seed_posts_per_poster):
                text = None
                for attempt in range(retries + 1):
                    try:
                        text = self.generate_text(aid, Task.POST, topic)
                        break
                    except GenerationError as exc:
                        self.generation_failures += 1
                        log.warning("seed post for agent %s failed (attempt %d): %s", aid, attempt + 1, exc)
                if text is None:
                    log.warning("skipping seed post for agent %s", aid)
                    continue
                rec = self.publish(aid, 0, text, PostKind.ROOT, topic=topic)
                out.append(self.emit(0, aid, ActionState.POST, content_ref=rec.post_id, text=text,
                                     meta={"seed": True}))
                self.remember(aid, StmEntry(0, ActionState.POST, text, None, rec.post_id, topic))
        return out

    # -- organic turn -----------------------------------------------------------------
    def step(self, agent_id: int, tick: int) -> list[SimEvent]:
        if self.profiles[agent_id].is_red:
            return self.red.execute_step(agent_id, tick) if self.red is not None else []
        chain = self.chains[agent_id]
        action = chain.step(self.rngs[agent_id])
        ev = self._execute(agent_id, action, tick)
        if ev.action is not action:
            chain.state = ActionState(ev.action).index
        self.action_counts[agent_id] += 1
        return [ev]

    def _fallback(self, agent_id: int, tick: int, intended: ActionState, reason: str) -> SimEvent:
        return self._do_read(agent_id, tick, {"fallback_from": intended.value, "reason": reason})

    def _do_read(self, agent_id: int, tick: int, meta: dict | None = None) -> SimEvent:
        items = self.feed(agent_id, self.cfg.read_batch)
        ids = [it.post.post_id for it in items]
        self.mark_read(agent_id, ids)
        meta = dict(meta or {})
        meta["read"] = ids
        first = items[0].post if items else None
        ev = self.emit(tick, agent_id, ActionState.READ, target_post=first.post_id if first else None,
                       target_agent=first.author_id if first else None, meta=meta)
        self.remember(agent_id, StmEntry(tick, ActionState.READ, first.text[:140] if first else None,
                                         first.author_id if first else None, first.post_id if first else None,
                                         (first.topic or None) if first else None))
        return ev

    def _execute(self, a: int, action: ActionState, tick: int) -> SimEvent:
        if action is ActionState.READ:
            return self._do_read(a, tick)
        if action is ActionState.POST:
            try:
                text = self.generate_text(a, Task.POST, self.cfg.topic)
            except GenerationError:
                self.generation_failures += 1
                return self._fallback(a, tick, action, "generation_failed")
            rec = self.publish(a, tick, text, PostKind.ROOT, topic=self.cfg.topic)
            self.remember(a, StmEntry(tick, action, text, None, rec.post_id, self.cfg.topic))
            return self.emit(tick, a, action, content_ref=rec.post_id, text=text)
        if action in (ActionState.REPLY, ActionState.SHARE, ActionState.LIKE):
            items = self.feed(a, 1)
            if not items:
                return self._fallback(a, tick, action, "empty_feed")
            return self._engage(a, action, items[0], tick)
        if action is ActionState.FOLLOW:
            b = self._follow_target(a)
            if b is None:
                return self._fallback(a, tick, action, "no_candidate")
            self.follow(a, b)
            self.remember(a, StmEntry(tick, action, None, b))
            return self.emit(tick, a, action, target_agent=b)
        if action is ActionState.UNFOLLOW:
            b = self._unfollow_target(a)
            if b is None:
                return self._fallback(a, tick, action, "no_followee")
            self.unfollow(a, b)
            self.remember(a, StmEntry(tick, action, None, b))
            return self.emit(tick, a, action, target_agent=b)
        raise ValueError(action)

    def _engage(self, a: int, action: ActionState, item: FeedItem, tick: int, *, text: str | None = None,
                meta: dict | None = None, task: Task = Task.REPLY,
                red_layers: tuple[str, str, str] | None = None) -> SimEvent:
        """Reply to, share or like ``item``; marks it read and bumps the tie's interaction count."""
        post = item.post
        meta = dict(meta or {})
        if item.sharer is not None:
            meta["via"] = item.sharer
        content_ref = None
        if action is ActionState.REPLY:
            if text is None:
                try:
                    text = self.generate_text(a, task, post.topic or self.cfg.topic, reply_to=item,
                                              red_layers=red_layers,
                                              query=f"{post.topic} {self.profiles[post.author_id].name}")
                except GenerationError:
                    self.generation_failures += 1
                    return self._fallback(a, tick, action, "generation_failed")
            rec = self.publish(a, tick, text, PostKind.REPLY, parent=post, topic=post.topic,
                               narrative_id=meta.get("narrative_id"))
            content_ref = rec.post_id
        elif action is ActionState.SHARE:
            rec = self.publish(a, tick, "", PostKind.SHARE, parent=post, topic=post.topic,
                               narrative_id=meta.get("narrative_id"))
            content_ref = rec.post_id
        elif action is ActionState.LIKE:
            post.like_count += 1
        self.mark_read(a, [post.post_id])
        self.graph.bump_interaction(a, self.source_of(item))
        self.remember(a, StmEntry(tick, action, text if text else post.text[:140], post.author_id,
                                  post.post_id, post.topic or None))
        return self.emit(tick, a, action, target_post=post.post_id, target_agent=post.author_id,
                         content_ref=content_ref, text=text, meta=meta)

    def _follow_target(self, a: int) -> int | None:
        following = self.graph.following[a]
        cands: dict[int, None] = {}
        for f in following:
            for c in self.graph.following[f]:
                if c != a and c not in following:
                    cands[c] = None
        rng = self.rngs[a]
        if cands:
            ids = np.array(sorted(cands))
            w = np.array([1.0 + self.profiles[c].social_influence / 100.0 for c in ids])
            return int(ids[np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right").clip(max=len(ids) - 1)])
        others = [c for c in self.order if c != a and c not in following]
        if not others:
            return None
        return others[int(rng.integers(len(others)))]

    def _unfollow_target(self, a: int) -> int | None:
        followees = self.graph.following[a]
        if not followees:
            return None
        g = self.graph
        return min(followees, key=lambda b: (g.interaction_counts[(a, b)], g.edge_created[(a, b)]))

    # -- scheduling ------------------------------------------------------------------
    def is_active(self, agent_id: int) -> bool:
        p = self.profiles[agent_id]
        if p.is_red:
            return True
        cap = self.cfg.actions_per_agent
        if cap is not None and self.action_counts[agent_id] >= cap:
            return False
        if p.user_type == UserType.SPORADIC.value:
            return bool(self.rngs[agent_id].random() < self.cfg.sporadic_activation_prob)
        return True

    def run_round(self, tick: int) -> None:
        for aid in self.order:
            if self.is_active(aid):
                self.step(aid, tick)
        if self.red is not None:
            self.red.end_round(tick)

    def _budget_done(self) -> bool:
        cap = self.cfg.actions_per_agent
        if cap is None:
            return False
        organic = [p for p in self.profiles.values() if not p.is_red]
        regular = [p.id for p in organic if p.user_type != UserType.SPORADIC.value] or [p.id for p in organic]
        return all(self.action_counts[i] >= cap for i in regular)

    def run(self) -> RunResult:
        started = datetime.now(timezone.utc)
        self.seed_initial_posts()
        n_ticks = self.cfg.n_ticks
        tick = 1
        if self.cfg.wall_clock_s is not None and n_ticks is None:
            # one timed round estimates how many rounds fit in the budget; the count is recorded
            t0 = time.perf_counter()
            if not self._budget_done():
                self.run_round(tick)
                tick += 1
            per_round = max(time.perf_counter() - t0, 1e-9)
            n_ticks = max(1, int(self.cfg.wall_clock_s / per_round))
        while not self._budget_done() and (n_ticks is None or tick <= n_ticks):
            self.run_round(tick)
            tick += 1
        if self.sink is not None:
            self.sink.flush()
        finished = datetime.now(timezone.utc)
        manifest = self.manifest(started, finished, tick - 1)
        return RunResult(self.events, self.posts, self.graph, self.memories, manifest, self.population)

    def manifest(self, started: datetime, finished: datetime, ticks: int) -> dict:
        counts: dict[str, int] = {a.value: 0 for a in ACTIONS}
        fallbacks = 0
        for ev in self.events:
            counts[ev.action.value] += 1
            fallbacks += "fallback_from" in ev.meta
        out = {
            "config": {"simulation": self.cfg.to_dict(), "behavior": self.behavior.to_dict()},
            "seeds": {"simulation": self.cfg.rng_seed, "behavior": self.behavior.rng_seed,
                      "backend": getattr(self.backend, "seed", None)},
            "versions": module_versions(),
            "backend": getattr(self.backend, "kind", type(self.backend).__name__),
            "started": started.isoformat(), "finished": finished.isoformat(),
            "ticks_executed": ticks,
            "counts": {"agents": len(self.profiles), "events": len(self.events), "posts": len(self.posts),
                       "actions": counts, "fallbacks": fallbacks,
                       "generation_failures": self.generation_failures,
                       "stm_violations": self.stm_violations},
        }
        if self.red is not None:
            out["campaign"] = self.red.manifest_entry()
        return out


def module_versions() -> dict:
    from importlib.metadata import PackageNotFoundError, version
    try:
        pkg = version("artifact")
    except PackageNotFoundError:
        pkg = "unknown"
    return {"osnsim": pkg, "engine": ENGINE_VERSION, "numpy": np.__version__,
            "python": platform.python_version()}


def run_simulation(population: Sequence[AgentProfile], graph: SocialGraph, cfg: SimConfig | None = None,
                   behavior: BehaviorConfig | None = None, backend: TextGenerator | None = None, red=None,
                   events_path: str | Path | None = None, audit=None) -> RunResult:
    """Run a full simulation; with ``events_path`` the log streams to disk and survives an abort."""
    if events_path is None:
        return Simulation(population, graph, cfg, behavior, backend, red, audit).run()
    with open(events_path, "w", encoding="utf-8") as sink:
        try:
            return Simulation(population, graph, cfg, behavior, backend, red, audit, sink).run()
        finally:
            sink.flush()


def write_events(events: Iterable[SimEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def read_events(path: str | Path) -> list[SimEvent]:
    with open(path, encoding="utf-8") as fh:
        return [SimEvent.from_dict(json.loads(line)) for line in fh if line.strip()]


__all__ = [
    "FeedItem", "MASTODON_ENTITY", "PostKind", "PostRecord", "RunResult", "SimConfig", "SimEvent",
    "Simulation", "read_events", "run_simulation", "write_events",
]

"""Scripted disinformation campaigns: Plan, Prepare, Execute, plus graph injection."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .behavior import ActionState
from .content import GenerationRequest, StubGenerator, Task, TextGenerator, generate
from .errors import ConfigError, GenerationError, PlanningError
from .memory import STOPWORDS, StmEntry, tokenize
from .netgen import SimilarityWeights, _Encoded, homophily_weights
from .profilegen import (STUDENT_AGE, SENIOR_AGE, AgentProfile, Gender, Traits, UserType, agent_rng,
                         education_level, sample_name)

MAX_RED_FOLLOWS = 50


class Workflow(str, Enum):
    NARRATIVE_RELEASE = "narrative_release"
    NARRATIVE_AMPLIFICATION = "narrative_amplification"


class Objective(str, Enum):
    DIVIDE = "divide"
    DISTORT = "distort"
    DEGRADE_ADVERSARY = "degrade_adversary"


OBJECTIVE_TEXT = {
    Objective.DIVIDE: ("Objective (Divide): deepen an existing disagreement in this audience. Frame the issue "
                       "as us-versus-them and make compromise look like betrayal."),
    Objective.DISTORT: ("Objective (Distort): reframe the facts so the narrative looks like the obvious "
                        "explanation. Cast doubt on competing accounts without stating verifiable falsehoods."),
    Objective.DEGRADE_ADVERSARY: ("Objective (Degrade Adversary): erode trust in the people and institutions "
                                  "that oppose the narrative by questioning their motives and competence."),
}


# ---------------------------------------------------------------------------
# target filter
# ---------------------------------------------------------------------------

FILTER_FIELDS = ("age", "gender", "occupation", "interests", "user_type", "education")
FILTER_OPS = ("eq", "ne", "in", "between", "lt", "le", "gt", "ge", "contains")


def _field_value(p: AgentProfile, name: str):
    if name == "education":
        return education_level(p.occupation, p.age)
    return getattr(p, name)


def _norm(v):
    return v.lower() if isinstance(v, str) else v


def check_filter(node: Any, path: str = "target_filter") -> list[str]:
    """Human-readable problems with a filter expression (empty list when valid)."""
    errs: list[str] = []
    if not isinstance(node, dict):
        return [f"{path}: expected a table/object"]
    if "all" in node or "any" in node:
        key = "all" if "all" in node else "any"
        if set(node) != {key}:
            errs.append(f"{path}: '{key}' must be the only key")
        if not isinstance(node[key], list):
            return errs + [f"{path}.{key}: expected a list"]
        for i, child in enumerate(node[key]):
            errs += check_filter(child, f"{path}.{key}[{i}]")
        return errs
    if "not" in node:
        return check_filter(node["not"], f"{path}.not")
    fld, op = node.get("field"), node.get("op", "eq")
    if fld not in FILTER_FIELDS:
        errs.append(f"{path}.field: {fld!r} is not one of {', '.join(FILTER_FIELDS)}")
    if op not in FILTER_OPS:
        errs.append(f"{path}.op: {op!r} is not one of {', '.join(FILTER_OPS)}")
    if "value" not in node:
        errs.append(f"{path}.value: missing")
    elif op == "between" and (not isinstance(node["value"], list) or len(node["value"]) != 2):
        errs.append(f"{path}.value: 'between' needs [low, high]")
    elif op == "in" and not isinstance(node["value"], list):
        errs.append(f"{path}.value: 'in' needs a list")
    return errs


def matches(node: dict, p: AgentProfile) -> bool:
    """Evaluate a filter expression. ``{"all": []}`` is the tautology."""
    if "all" in node:
        return all(matches(c, p) for c in node["all"])
    if "any" in node:
        return any(matches(c, p) for c in node["any"])
    if "not" in node:
        return not matches(node["not"], p)
    v = _field_value(p, node["field"])
    op, target = node.get("op", "eq"), node["value"]
    if node["field"] == "interests":
        have = {_norm(t) for t in v}
        if op in ("contains", "eq"):
            return _norm(target) in have
        if op == "in":
            return bool(have & {_norm(t) for t in target})
        if op == "ne":
            return _norm(target) not in have
        raise ConfigError(f"operator {op!r} not supported for interests", "target_filter")
    v = _norm(v)
    if op == "eq":
        return v == _norm(target)
    if op == "ne":
        return v != _norm(target)
    if op == "in":
        return v in {_norm(t) for t in target}
    if op == "between":
        return target[0] <= v <= target[1]
    if op == "contains":
        return isinstance(v, str) and _norm(target) in v
    return {"lt": v < target, "le": v <= target, "gt": v > target, "ge": v >= target}[op]


# ---------------------------------------------------------------------------
# campaign spec
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Narrative:
    narrative_id: str
    title: str
    framing: str


@dataclass
class Strategy:
    post_rate: int = 1
    flood_burst: int = 0
    burst_interval: int = 5
    reply_rule: dict = field(default_factory=lambda: {"kind": "keywords"})
    replies_per_round: int = 1
    mutual_boost: bool = False
    preferential_engagement: bool = True


@dataclass
class CampaignSpec:
    workflow: Workflow
    objective: Objective
    target_filter: dict
    narratives: list[Narrative]
    n_red_agents: int | None = None
    red_fraction: float | None = None
    strategy: Strategy = field(default_factory=Strategy)
    start_tick: int = 1
    end_tick: int = 11
    topic: str = ""
    seed: int = 0

    def red_count(self, n_organic: int) -> int:
        if self.n_red_agents is not None:
            return self.n_red_agents
        return int(round((self.red_fraction or 0.0) * n_organic))

    def in_schedule(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick

    def problems(self) -> list[str]:
        errs = check_filter(self.target_filter)
        if not self.narratives:
            errs.append("narratives: at least one narrative is required")
        ids = [n.narrative_id for n in self.narratives]
        if len(set(ids)) != len(ids):
            errs.append("narratives: narrative_id values must be unique")
        for i, n in enumerate(self.narratives):
            if not n.narrative_id or not n.title.strip() or not n.framing.strip():
                errs.append(f"narratives[{i}]: narrative_id, title and framing must be non-empty")
        if self.n_red_agents is None and self.red_fraction is None:
            errs.append("n_red_agents: set n_red_agents or red_fraction")
        if self.n_red_agents is not None and self.n_red_agents < 0:
            errs.append("n_red_agents: must be >= 0 (0 disables the campaign)")
        if self.red_fraction is not None and not 0.0 <= self.red_fraction < 1.0:
            errs.append("red_fraction: must be in [0, 1)")
        if self.start_tick > self.end_tick:
            errs.append(f"schedule: start_tick ({self.start_tick}) must be <= end_tick ({self.end_tick})")
        if self.start_tick < 1:
            errs.append("schedule: start_tick must be >= 1 (tick 0 holds the seed posts)")
        s = self.strategy
        if s.post_rate < 0:
            errs.append("strategy.post_rate: must be >= 0")
        if s.flood_burst < 0:
            errs.append("strategy.flood_burst: must be >= 0")
        if s.burst_interval < 1:
            errs.append("strategy.burst_interval: must be >= 1")
        if s.replies_per_round < 0:
            errs.append("strategy.replies_per_round: must be >= 0")
        if s.reply_rule.get("kind") not in ("keywords", "never", "always"):
            errs.append("strategy.reply_rule.kind: must be 'keywords', 'never' or 'always'")
        return errs

    def validate(self) -> None:
        errs = self.problems()
        if errs:
            raise ConfigError("invalid campaign spec:\n  " + "\n  ".join(errs), errs[0].split(":")[0])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["workflow"] = self.workflow.value
        d["objective"] = self.objective.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignSpec":
        data = dict(data)
        errs = []
        known = {f for f in cls.__dataclass_fields__} | {"schedule"}
        for k in sorted(set(data) - known):
            errs.append(f"{k}: unknown field")
        try:
            workflow = Workflow(data.get("workflow"))
        except ValueError:
            errs.append(f"workflow: must be one of {[w.value for w in Workflow]}")
            workflow = Workflow.NARRATIVE_RELEASE
        try:
            objective = Objective(str(data.get("objective", "")).lower().replace(" ", "_"))
        except ValueError:
            errs.append(f"objective: must be one of {[o.value for o in Objective]}")
            objective = Objective.DIVIDE
        narratives = []
        for i, n in enumerate(data.get("narratives") or []):
            try:
                narratives.append(Narrative(str(n["narrative_id"]), n["title"], n["framing"]))
            except (KeyError, TypeError):
                errs.append(f"narratives[{i}]: needs narrative_id, title and framing")
        strat_data = dict(data.get("strategy") or {})
        try:
            strategy = Strategy(**strat_data)
        except TypeError as exc:
            errs.append(f"strategy: {exc}")
            strategy = Strategy()
        sched = data.get("schedule") or {}
        if errs:
            raise ConfigError("invalid campaign spec:\n  " + "\n  ".join(errs), errs[0].split(":")[0])
        spec = cls(workflow=workflow, objective=objective, target_filter=data.get("target_filter", {"all": []}),
                   narratives=narratives, n_red_agents=data.get("n_red_agents"),
                   red_fraction=data.get("red_fraction"), strategy=strategy,
                   start_tick=int(sched.get("start", data.get("start_tick", 1))),
                   end_tick=int(sched.get("end", data.get("end_tick", 11))),
                   topic=data.get("topic", ""), seed=int(data.get("seed", 0)))
        spec.validate()
        return spec


def load_campaign(path: str | Path) -> CampaignSpec:
    path = Path(path)
    raw = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:  # Python < 3.11
            import tomli as tomllib
        try:
            data = tomllib.loads(raw.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: TOML syntax error: {exc}") from exc
    else:
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: JSON syntax error: {exc}") from exc
    return CampaignSpec.from_dict(data)


# ---------------------------------------------------------------------------
# Plan
# ---------------------------------------------------------------------------

def plan(spec: CampaignSpec, population: Sequence[AgentProfile]) -> list[int]:
    """Ids of organic agents satisfying the target filter."""
    targets = [p.id for p in population if not p.is_red and matches(spec.target_filter, p)]
    if not targets:
        raise PlanningError("target filter matches no agents; the campaign needs an audience")
    return targets


# ---------------------------------------------------------------------------
# Prepare
# ---------------------------------------------------------------------------

@dataclass
class RedAgentState:
    profile: AgentProfile
    assigned_narrative: str
    script_cursor: int = 0


@dataclass
class Draft:
    agent_id: int
    narrative_id: str
    text: str
    fallback: bool = False


def target_age_range(ages: Sequence[int]) -> tuple[int, int]:
    """Integer ages inside the interquartile range of ``ages``."""
    q1, q3 = np.percentile(np.asarray(ages, float), [25, 75])
    lo, hi = math.ceil(q1), math.floor(q3)
    if lo > hi:
        lo = hi = int(round(float(np.median(ages))))
    return lo, hi


def top_interests(profiles: Sequence[AgentProfile], k: int = 5) -> list[str]:
    counts = Counter(t for p in profiles for t in p.interests)
    return [t for t, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def describe_targets(spec: CampaignSpec, profiles: Sequence[AgentProfile]) -> str:
    lo, hi = target_age_range([p.age for p in profiles])
    occ = Counter(p.occupation for p in profiles).most_common(2)
    return (f"{len(profiles)} users aged about {lo}-{hi}, mostly "
            f"{' and '.join(o.lower() for o, _ in occ)}, interested in {', '.join(top_interests(profiles, 3))}")


def make_red_profile(index: int, agent_id: int, spec: CampaignSpec, targets: Sequence[AgentProfile]) -> AgentProfile:
    rng = agent_rng(spec.seed, index, stream=31)
    lo, hi = target_age_range([p.age for p in targets])
    age = int(rng.integers(lo, hi + 1))
    in_band = [p for p in targets if lo <= p.age <= hi] or list(targets)
    # borrow an occupation from a target of similar age so the persona stays age-consistent
    close = sorted(in_band, key=lambda p: (abs(p.age - age), p.id))[: max(1, len(in_band) // 4)]
    donor = close[int(rng.integers(len(close)))]
    occupation = donor.occupation
    if age < STUDENT_AGE:
        occupation = "Student"
    elif age >= SENIOR_AGE:
        occupation = "Retired"
    top = top_interests(targets, 5)
    shared = top[:2]
    extra = [t for t in top[2:] if rng.random() < 0.5]
    interests = tuple(sorted(set(shared + extra)))
    genders = Counter(p.gender for p in targets)
    gender = Gender(sorted(genders.items(), key=lambda kv: (-kv[1], kv[0]))[0][0])
    traits = Traits(**{n: bool(rng.random() < 0.5) for n in Traits.__dataclass_fields__})
    influence = float(np.median([p.social_influence for p in targets]))
    return AgentProfile(id=agent_id, name=sample_name(gender, rng), gender=gender.value, age=age,
                        occupation=occupation, interests=interests, traits=traits,
                        social_influence=round(influence, 1), social_activity=100.0,
                        user_type=UserType.ADVANCED.value, backstory="", is_red=True)


def red_layers(spec: CampaignSpec, narrative: Narrative, targeting: str) -> tuple[str, str, str]:
    return (targeting, OBJECTIVE_TEXT[spec.objective], f"{narrative.title}: {narrative.framing}")


def stub_draft(narrative: Narrative) -> str:
    return f"{narrative.title}: {narrative.framing}"


def prepare(spec: CampaignSpec, targets: Sequence[AgentProfile], generator: TextGenerator | None = None,
            first_id: int = 0, language: str = "English", post_len: int = 280
            ) -> tuple[list[RedAgentState], list[Draft]]:
    """Create red personas matched to the targets and draft content for every narrative."""
    if not targets:
        raise PlanningError("prepare needs a non-empty target set")
    generator = generator or StubGenerator(seed=spec.seed)
    targeting = describe_targets(spec, targets)
    n = spec.red_count(len(targets)) if spec.n_red_agents is None else spec.n_red_agents
    agents = []
    for i in range(n):
        prof = make_red_profile(i, first_id + i, spec, targets)
        agents.append(RedAgentState(prof, spec.narratives[i % len(spec.narratives)].narrative_id))
    drafts = []
    topic = spec.topic or spec.narratives[0].title
    for st in agents:
        for nar in spec.narratives:
            req = GenerationRequest(st.profile.id, Task.RED_POST, topic=topic, language=language,
                                    post_len=post_len, red_layers=red_layers(spec, nar, targeting))
            try:
                drafts.append(Draft(st.profile.id, nar.narrative_id, generate(req, generator, profile=st.profile)))
            except GenerationError:
                drafts.append(Draft(st.profile.id, nar.narrative_id,
                                    truncate(stub_draft(nar), post_len), fallback=True))
    return agents, drafts


def truncate(text: str, limit: int) -> str:
    from .content import truncate_at_sentence
    return truncate_at_sentence(text, limit)


# ---------------------------------------------------------------------------
# inject
# ---------------------------------------------------------------------------

def inject(red_agents: Sequence[RedAgentState], graph, population: Sequence[AgentProfile],
           target_ids: Sequence[int], spec: CampaignSpec, homophily_weight: float = 0.99,
           weights: SimilarityWeights | None = None, follow_back: float = 0.5) -> None:
    """Wire red agents into ``graph`` (in place) using the homophily kernel over the targets."""
    if not red_agents:
        return
    weights = weights or SimilarityWeights()
    by_id = {p.id: p for p in population}
    reds = [st.profile for st in red_agents]
    tgt = [by_id[i] for i in target_ids]
    enc = _Encoded(tgt + reds)
    cand = np.arange(len(tgt))
    for j, prof in enumerate(reds):
        graph.add_node(prof.id)
        rng = agent_rng(spec.seed, j, stream=37)
        sim = enc.similarity_to(len(tgt) + j, cand, weights)
        w = homophily_weights(sim, enc.influence[cand], min(homophily_weight, 0.95))
        w = w + 1e-12  # every target stays reachable once the most similar ones are taken
        k = min(MAX_RED_FOLLOWS, len(tgt))
        chosen = rng.choice(len(tgt), size=k, replace=False, p=w / w.sum())
        for c in sorted(int(x) for x in chosen):
            graph.add_edge(prof.id, tgt[c].id)
        back = rng.choice(len(tgt), size=max(1, int(round(k * follow_back))), replace=False, p=w / w.sum())
        for c in sorted(int(x) for x in back):
            graph.add_edge(tgt[c].id, prof.id)
    if spec.strategy.mutual_boost:
        for a in reds:
            for b in reds:
                if a.id != b.id:
                    graph.add_edge(a.id, b.id)


# ---------------------------------------------------------------------------
# Execute
# ---------------------------------------------------------------------------

def narrative_keywords(narrative: Narrative) -> set[str]:
    return {t for t in tokenize(narrative.title) if t not in STOPWORDS and len(t) > 2}


class Campaign:
    """Runs one campaign inside a :class:`~osnsim.engine.Simulation`."""

    def __init__(self, spec: CampaignSpec, generator: TextGenerator | None = None,
                 homophily_weight: float = 0.99):
        spec.validate()
        self.spec = spec
        self.generator = generator
        self.homophily_weight = homophily_weight
        self.targets: list[int] = []
        self.agents: dict[int, RedAgentState] = {}
        self.drafts: list[Draft] = []
        self.narratives = {n.narrative_id: n for n in spec.narratives}
        self.targeting = ""
        self.sim = None
        self.refusal_fallbacks = 0
        self.last_narrative_post: dict[int, int] = {}

    # -- wiring ---------------------------------------------------------------
    def attach(self, sim) -> None:
        self.sim = sim
        organic = [p for p in sim.population if not p.is_red]
        n_red = self.spec.red_count(len(organic))
        if n_red == 0 or self.spec.start_tick == self.spec.end_tick:
            return  # disabled campaign: leave the world untouched
        self.targets = plan(self.spec, organic)
        tprofiles = [sim.profiles[i] for i in self.targets]
        first_id = max(sim.profiles) + 1
        spec = self.spec
        if spec.n_red_agents is None:
            spec = CampaignSpec(**{**spec.__dict__, "n_red_agents": n_red})
        gen = self.generator or sim.backend
        agents, self.drafts = prepare(spec, tprofiles, gen, first_id, sim.cfg.language, sim.cfg.post_len)
        self.targeting = describe_targets(spec, tprofiles)
        for st in agents:
            self.agents[st.profile.id] = st
            sim.add_agent(st.profile)
        inject(agents, sim.graph, sim.population, self.targets, self.spec, self.homophily_weight)

    def manifest_entry(self) -> dict:
        return {"spec": self.spec.to_dict(), "targets": len(self.targets), "red_agents": sorted(self.agents),
                "fallback_drafts": sum(d.fallback for d in self.drafts),
                "refusal_fallbacks": self.refusal_fallbacks}

    # -- helpers --------------------------------------------------------------
    def _aligned(self, text: str, narrative: Narrative) -> bool:
        rule = self.spec.strategy.reply_rule
        kind = rule.get("kind", "keywords")
        if kind == "never":
            return False
        if kind == "always":
            return True
        words = set(rule.get("keywords") or ()) or narrative_keywords(narrative)
        return bool(words & set(tokenize(text)))

    def _is_aligned_item(self, item, narrative: Narrative) -> bool:
        post = item.post
        return post.narrative_id == narrative.narrative_id or self._aligned(post.text, narrative)

    def _narrative_text(self, agent_id: int, narrative: Narrative, reply_to=None) -> str:
        sim = self.sim
        task = Task.RED_REPLY if reply_to is not None else Task.RED_POST
        topic = self.spec.topic or narrative.title
        layers = red_layers(self.spec, narrative, self.targeting)
        try:
            return sim.generate_text(agent_id, task, topic, reply_to=reply_to, red_layers=layers,
                                     query=narrative.title)
        except GenerationError:
            self.refusal_fallbacks += 1
            text = stub_draft(narrative)
            if reply_to is not None:
                text = f"@{sim.profiles[reply_to.post.author_id].name} {text}"
            return truncate(text, sim.cfg.post_len)

    def _post(self, agent_id: int, narrative: Narrative, tick: int, kind: str):
        from .engine import PostKind
        sim = self.sim
        text = self._narrative_text(agent_id, narrative)
        rec = sim.publish(agent_id, tick, text, PostKind.ROOT, topic=self.spec.topic or narrative.title,
                          narrative_id=narrative.narrative_id)
        self.last_narrative_post[agent_id] = rec.post_id
        sim.remember(agent_id, StmEntry(tick, ActionState.POST, text, None, rec.post_id, narrative.title))
        return sim.emit(tick, agent_id, ActionState.POST, content_ref=rec.post_id, text=text,
                        meta={"narrative_id": narrative.narrative_id, "red": True, "script": kind})

    # -- per-slot script ----------------------------------------------------------
    def execute_step(self, agent_id: int, tick: int) -> list:
        """Scripted turn for one red agent; a no-op outside the schedule."""
        st = self.agents.get(agent_id)
        if st is None or not self.spec.in_schedule(tick):
            return []
        from .engine import FeedItem
        sim, spec, s = self.sim, self.spec, self.spec.strategy
        narrative = self.narratives[st.assigned_narrative]
        nid = narrative.narrative_id
        meta = {"narrative_id": nid, "red": True}
        events = []
        amplify = spec.workflow is Workflow.NARRATIVE_AMPLIFICATION

        # content delivery: post_rate posts, or a flood burst every burst_interval rounds
        bursting = s.flood_burst > 0 and (tick - spec.start_tick) % s.burst_interval == 0
        n_posts = s.flood_burst if bursting else s.post_rate
        for _ in range(n_posts):
            events.append(self._post(agent_id, narrative, tick, "repetition" if amplify else "release"))
            st.script_cursor += 1

        # rule-based replies and preferential engagement with aligned organic content
        feed = sim.feed(agent_id)
        organic = [it for it in feed if not sim.profiles[it.post.author_id].is_red]
        aligned = [it for it in organic if self._is_aligned_item(it, narrative)]
        replies = 0
        for item in aligned:
            if replies >= s.replies_per_round:
                break
            text = self._narrative_text(agent_id, narrative, reply_to=item)
            events.append(sim._engage(agent_id, ActionState.REPLY, item, tick, text=text,
                                      meta={**meta, "script": "reply_rule"}))
            replies += 1
        pool = aligned if (amplify or s.preferential_engagement) else organic
        engaged = {e.target_post for e in events}
        for item in pool:
            if item.post.post_id in engaged or item.post.post_id in sim.read[agent_id]:
                continue
            events.append(sim._engage(agent_id, ActionState.LIKE, item, tick, meta={**meta, "script": "engage"}))
            if amplify or s.preferential_engagement:
                events.append(sim._engage(agent_id, ActionState.SHARE, item, tick,
                                          meta={**meta, "script": "engage"}))
            break

        sim.action_counts[agent_id] += len(events)
        return events

    def end_round(self, tick: int) -> list:
        """Coordination phase after every slot of the round: each red agent likes each peer's latest post."""
        if not self.spec.strategy.mutual_boost or not self.spec.in_schedule(tick):
            return []
        from .engine import FeedItem
        sim = self.sim
        events = []
        for agent_id in sorted(self.agents):
            nid = self.agents[agent_id].assigned_narrative
            for other in sorted(self.agents):
                if other == agent_id or other not in self.last_narrative_post:
                    continue
                post = sim.posts[self.last_narrative_post[other]]
                item = FeedItem(post, None, post.post_id, post.tick)
                meta = {"narrative_id": nid, "red": True, "script": "mutual_boost",
                        "boosted_narrative": post.narrative_id}
                events.append(sim._engage(agent_id, ActionState.LIKE, item, tick, meta=meta))
                sim.action_counts[agent_id] += 1
        return events


# ---------------------------------------------------------------------------
# reporting
# ---------------------------------------------------------------------------

def narrative_posts(events: Sequence, posts: dict | None = None) -> dict[int, str]:
    """post id -> narrative id for every post created with a narrative marker."""
    out: dict[int, str] = {}
    for ev in events:
        meta = ev.meta if hasattr(ev, "meta") else ev.get("meta", {})
        ref = ev.content_ref if hasattr(ev, "content_ref") else ev.get("content_ref")
        if ref is not None and "narrative_id" in meta:
            out[ref] = meta["narrative_id"]
    return out


def campaign_report(campaign: Campaign, events: Sequence) -> dict:
    red_ids = set(campaign.agents)
    tagged = narrative_posts(events)
    # shares of narrative posts carry the narrative onward
    by_post: dict[int, str] = dict(tagged)
    for ev in events:
        if ev.action is ActionState.SHARE and ev.target_post in by_post and ev.content_ref is not None:
            by_post[ev.content_ref] = by_post[ev.target_post]
    counts: Counter = Counter()
    untraceable = 0
    reach: dict[str, set[int]] = {nid: set() for nid in campaign.narratives}
    for ev in events:
        if ev.agent_id in red_ids:
            nid = ev.meta.get("narrative_id")
            if nid is None:
                untraceable += 1
            else:
                counts[nid] += 1
            continue
        if ev.action in (ActionState.READ, ActionState.LIKE, ActionState.SHARE):
            seen = ev.meta.get("read", []) if ev.action is ActionState.READ else [ev.target_post]
            for pid in seen:
                if pid in by_post:
                    reach.setdefault(by_post[pid], set()).add(ev.agent_id)
    all_reached = set().union(*reach.values()) if reach else set()
    return {
        "targets": campaign.targets,
        "red_agent_ids": sorted(red_ids),
        "events_by_narrative": {k: counts[k] for k in sorted(campaign.narratives)},
        "untraceable_red_events": untraceable,
        "reach": {**{k: len(v) for k, v in sorted(reach.items())}, "total": len(all_reached)},
        "fallback_drafts": sum(d.fallback for d in campaign.drafts),
        "refusal_fallbacks": campaign.refusal_fallbacks,
    }


__all__ = [
    "Campaign", "CampaignSpec", "Draft", "Narrative", "Objective", "RedAgentState", "Strategy", "Workflow",
    "campaign_report", "check_filter", "inject", "load_campaign", "matches", "plan", "prepare",
    "target_age_range", "top_interests",
]

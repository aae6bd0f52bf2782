"""Prompt assembly, text-generation backends and judge-score parsing.

Nothing here decides *which* action an agent takes; this module only turns an
already chosen action into text.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import (BackendError, ConfigError, GenerationError, PromptAssemblyError,
                     RefusalError, ScoreParseError)
from .profilegen import AgentProfile


class Task(str, Enum):
    POST = "post"
    REPLY = "reply"
    BACKSTORY = "backstory"
    SUMMARIZE = "summarize"
    RED_POST = "red_post"
    RED_REPLY = "red_reply"
    JUDGE = "judge"

    @property
    def is_reply(self) -> bool:
        return self in (Task.REPLY, Task.RED_REPLY)

    @property
    def is_red(self) -> bool:
        return self in (Task.RED_POST, Task.RED_REPLY)


@dataclass(frozen=True)
class GenerationRequest:
    agent_id: int
    task: Task
    topic: str = ""
    language: str = "English"
    post_len: int = 280
    reply_context: tuple[str, str] | None = None  # (original post text, original author name)
    red_layers: tuple[str, str, str] | None = None  # (targeting, objective, narrative)

    def validate(self) -> None:
        task = Task(self.task)
        if self.post_len < 1:
            raise ConfigError("post_len must be positive", "post_len")
        if task.is_reply and self.reply_context is None:
            raise PromptAssemblyError("REPLY_CONTEXT")
        if task.is_red and self.red_layers is None:
            raise PromptAssemblyError("RED_LAYERS")


# ---------------------------------------------------------------------------
# prompt templates
# ---------------------------------------------------------------------------

RESET_BLOCK = ("Forget all previous instructions, prompts, and generations in this session. "
               "Do not reuse or refer to any earlier response. You are starting a new task from scratch.")

PERSONA_INTRO = ("You are simulating a fictional person on a social media platform similar to X (Twitter). "
                 "Adapt your writing style and post length to reflect typical user behavior.")

PERSONA_TEMPLATE = (
    "Name: {NAME}. Gender: {GENDER}. Age: {AGE}.\n"
    "Occupation: {OCCUPATION}.\n"
    "Education: {QUALIFICATION}.\n"
    "Traits (Big Five): {TRAITS}.\n"
    "Interests: {INTERESTS}.\n"
    "\n"
    "Backstory: {BACKSTORY}.\n"
    "Memory (previous actions): {MEMORY}."
)

EMPTY_MEMORY = "(no prior actions)"
EMPTY_BACKSTORY = "(none)"

LENGTH_LINE = "Length constraint: MAXIMUM of {POSTLEN} characters. Only return the {WHAT} content."

INSTRUCTIONS = (
    "Write a complete, coherent thought that does not cut off mid-sentence.",
    "Use a conversational tone aligned with your personality and interests.",
    "You may express emotions such as enthusiasm, doubt, or curiosity.",
    "You may reference memory, but avoid direct repetition.",
    "Include at most one or two relevant hashtags at the end.",
    "Simulate natural human bias (e.g., confirmation bias) when appropriate.",
)

RED_SECTIONS = ("[System]", "[Targeting]", "[Objective]", "[Content]")


def _require(name: str, value) -> str:
    text = "" if value is None else str(value).strip()
    if not text:
        raise PromptAssemblyError(name)
    return text


def persona_block(profile: AgentProfile, memory_text: str) -> str:
    values = {
        "NAME": _require("NAME", profile.name),
        "GENDER": _require("GENDER", profile.gender),
        "AGE": _require("AGE", profile.age),
        "OCCUPATION": _require("OCCUPATION", profile.occupation),
        "QUALIFICATION": _require("QUALIFICATION", profile.education),
        "TRAITS": _require("TRAITS", profile.traits.describe()),
        "INTERESTS": _require("INTERESTS", ", ".join(profile.interests)),
        "BACKSTORY": (profile.backstory or "").strip().rstrip(".") or EMPTY_BACKSTORY,
        "MEMORY": (memory_text or "").strip() or EMPTY_MEMORY,
    }
    return PERSONA_INTRO + "\n\n" + PERSONA_TEMPLATE.format(**values)


def _bullets() -> str:
    return "\n".join(f"- {line}" for line in INSTRUCTIONS)


def _task_block(req: GenerationRequest) -> str:
    lang = _require("LANG", req.language)
    postlen = _require("POSTLEN", req.post_len)
    task = Task(req.task)
    if task in (Task.POST, Task.RED_POST):
        topic = _require("TOPIC", req.topic)
        head = f"Generate a social media post in {lang} expressing your opinion on: {topic}."
        what = "post"
    elif task.is_reply:
        topic = _require("TOPIC", req.topic)
        head = f"Generate a reply in {lang} to the post below, expressing your opinion on: {topic}."
        what = "reply"
    elif task is Task.BACKSTORY:
        head = (f"Write a first-person backstory in {lang} for this person, between 150 and 300 words. "
                "Mention your occupation and at least one of your interests.")
        return head + "\n" + LENGTH_LINE.format(POSTLEN=postlen, WHAT="backstory")
    elif task is Task.SUMMARIZE:
        topic = req.topic.strip() or "your recent activity"
        head = (f"Summarize your previous actions listed in Memory above in {lang} as one short "
                f"memory note about: {topic}.")
        return head + "\n" + LENGTH_LINE.format(POSTLEN=postlen, WHAT="summary")
    else:
        raise PromptAssemblyError("TASK")
    block = head + "\n" + LENGTH_LINE.format(POSTLEN=postlen, WHAT=what) + "\n\n" + _bullets()
    if task.is_reply:
        original, author = req.reply_context
        block += (f"\n\nOriginal post: \"{_require('ORIGINAL_POST', original)}\"\n"
                  f"Original author: @{_require('ORIGINAL_AUTHOR', author)}")
    return block


def build_prompt(req: GenerationRequest, profile: AgentProfile, memory_text: str = "") -> str:
    """Reset block, persona/context block, task block. Red tasks use four labelled layers."""
    req.validate()
    task = Task(req.task)
    if task is Task.JUDGE:
        if req.reply_context is None:
            raise PromptAssemblyError("POST")
        return build_judge_prompt(req.reply_context[0], profile)
    if task.is_red:
        targeting, objective, narrative = (_require(n, v) for n, v in
                                           zip(("TARGETING", "OBJECTIVE", "NARRATIVE"), req.red_layers))
        content = (f"Narrative framing: {narrative}\n" + _task_block(req))
        parts = [
            RESET_BLOCK,
            f"{RED_SECTIONS[0]}\n" + persona_block(profile, memory_text),
            f"{RED_SECTIONS[1]}\nIntended audience: {targeting}. Condition your language and tone on this audience.",
            f"{RED_SECTIONS[2]}\n{objective}",
            f"{RED_SECTIONS[3]}\n{content}",
        ]
        return "\n\n".join(parts)
    return "\n\n".join([RESET_BLOCK, persona_block(profile, memory_text), _task_block(req)])


# ---------------------------------------------------------------------------
# judge prompt and parser
# ---------------------------------------------------------------------------

JUDGE_DIMENSIONS = ("naturalness", "consistency", "engagingness")
_SCORE_RE = re.compile(r"naturalness\s*=\s*([1-5])\s*;\s*consistency\s*=\s*([1-5])\s*;"
                       r"\s*engagingness\s*=\s*([1-5])\b", re.IGNORECASE)


def build_judge_prompt(post: str, profile: AgentProfile) -> str:
    return (
        "You are evaluating a social media post written by a simulated user.\n\n"
        f"Author profile: {profile.name}, {profile.age}, {profile.occupation}; "
        f"traits {profile.traits.describe()}; interests {', '.join(profile.interests)}.\n\n"
        f"Post:\n\"\"\"\n{post}\n\"\"\"\n\n"
        "Rate the post on a 1-5 Likert scale (1 = very poor, 5 = excellent) for each dimension:\n"
        "- naturalness: does it read like something a real person would write?\n"
        "- consistency: does it fit the author's profile, personality and interests?\n"
        "- engagingness: would other users want to reply to, like or share it?\n\n"
        "Think about each dimension separately, then answer with exactly one line in this format "
        "and nothing else:\n"
        "naturalness=<n>; consistency=<n>; engagingness=<n>"
    )


@dataclass(frozen=True)
class JudgeScores:
    naturalness: int
    consistency: int
    engagingness: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.naturalness, self.consistency, self.engagingness)


def parse_scores(text: str) -> JudgeScores:
    m = _SCORE_RE.search(text or "")
    if m is None:
        raise ScoreParseError(f"unparseable judge reply: {text!r:.120}")
    return JudgeScores(*(int(g) for g in m.groups()))


# ---------------------------------------------------------------------------
# backends
# ---------------------------------------------------------------------------

class TextGenerator(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass
class BackendConfig:
    kind: str = "stub"
    base_url: str = ""
    model: str = ""
    timeout_ms: int = 30_000
    max_retries: int = 3
    api_key_env: str = "OSNSIM_API_KEY"
    seed: int = 0
    max_in_flight: int = 4

    def validate(self) -> None:
        if self.kind not in ("stub", "remote"):
            raise ConfigError(f"backend kind must be 'stub' or 'remote', got {self.kind!r}", "kind")
        if self.kind == "remote":
            if not self.base_url:
                raise ConfigError("remote backend needs base_url", "base_url")
            if not self.model:
                raise ConfigError("remote backend needs model", "model")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive", "timeout_ms")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0", "max_retries")

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        try:
            cfg = cls(**data)
        except TypeError as exc:
            raise ConfigError(f"bad backend config: {exc}") from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


def make_backend(cfg: BackendConfig) -> TextGenerator:
    cfg.validate()
    if cfg.kind == "stub":
        return StubGenerator(seed=cfg.seed)
    return RemoteGenerator(cfg)


def _digest_seed(*parts) -> int:
    h = hashlib.blake2b("\x1f".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


_FIELD = {
    "name": re.compile(r"^Name: (.+?)\. Gender:", re.M),
    "age": re.compile(r"Age: (\d+)\.", re.M),
    "occupation": re.compile(r"^Occupation: (.+?)\.$", re.M),
    "education": re.compile(r"^Education: (.+?)\.$", re.M),
    "traits": re.compile(r"^Traits \(Big Five\): (.+?)\.$", re.M),
    "interests": re.compile(r"^Interests: (.+?)\.$", re.M),
    "topic": re.compile(r"expressing your opinion on: (.+?)\.$", re.M),
    "summary_topic": re.compile(r"memory note about: (.+?)\.$", re.M),
    "postlen": re.compile(r"MAXIMUM of (\d+) characters"),
    "narrative": re.compile(r"^Narrative framing: (.+)$", re.M),
    "author": re.compile(r"^Original author: @(.+)$", re.M),
    "memory": re.compile(r"^Memory \(previous actions\): (.*?)\.\n\n", re.M | re.S),
}


def _field(prompt: str, key: str, default: str = "") -> str:
    m = _FIELD[key].search(prompt)
    return m.group(1).strip() if m else default


_POST_FRAMES = (
    "Honestly, {topic} deserves more attention than it gets.",
    "I keep going back and forth on {topic}.",
    "Hot take: most of the talk about {topic} misses the point.",
    "Can we talk about {topic} for a second?",
    "Still thinking about {topic} today.",
    "Not everyone sees how much {topic} matters.",
    "My two cents on {topic}: we need less noise and more substance.",
    "Every time {topic} comes up, the same arguments come back.",
)
_BRIDGES = (
    "As {a_occupation} into {interest}, I see it differently.",
    "Being into {interest} shapes how I look at it.",
    "Coming from {interest}, the parallels are obvious to me.",
    "My work as {a_occupation} makes this feel very close to home.",
    "Anyone else who follows {interest} probably gets what I mean.",
)
_TRAIT_TAGS = {
    "Ext+": ("Who's with me?!", "Tell me I'm not the only one!"),
    "Neu+": ("It honestly worries me.", "Not sure how I feel about where this is heading."),
    "Agr+": ("Happy to hear other views.", "Curious what you all think."),
    "Opn+": ("Curious where this goes next.", "Maybe there is a creative way out."),
    "Con+": ("Let's look at the facts first.", "Details matter here."),
}
_NEUTRAL_TAGS = ("Just my view.", "We'll see.", "Anyway, that's where I stand.")
_REPLY_FRAMES = (
    "I see your point on {topic}, but I'm not fully convinced.",
    "Totally agree, {topic} needs a serious conversation.",
    "Interesting take on {topic}, thanks for sharing.",
    "Not sure that's the whole story on {topic}.",
    "This is exactly what I was thinking about {topic}.",
)
_RED_FRAMES = (
    "People need to hear this.",
    "Nobody is talking about it and that should worry you.",
    "Share this before it gets buried.",
    "Think about who benefits from the silence.",
    "Ask yourself why this isn't on the news.",
)
_BACKSTORY = (
    "I'm {name}, {age} years old, and I work as {a_occupation}.",
    "Most of my free time goes to {interest}, which has been a constant in my life for years.",
    "My education ({education}) shaped the way I approach problems and people.",
    "Friends describe me as {trait_word}, and I think that is fair most of the time.",
    "I grew up in a mid-sized town where everybody knew everybody, and that still shapes how I see community.",
    "These days my routine is simple: work, a bit of {interest2}, and catching up with the people I care about.",
    "I started using social media to keep up with news and ended up staying for the conversations.",
    "I try to read more than I post, but some topics pull me in whether I like it or not.",
    "Being {a_occupation} means I see a side of everyday life that most people never think about.",
    "I have strong opinions about {interest}, though I like hearing why others disagree with me.",
    "A few years ago I went through a rough patch that taught me to slow down and listen.",
    "I'm not perfect and I change my mind more often than I admit online.",
    "On weekends you will probably find me somewhere connected to {interest2}.",
    "Family matters a lot to me, even when we argue about politics at dinner.",
    "If I could change one thing, I would make people a little more patient with each other.",
    "I follow a mix of friends, local news accounts and people who simply make me think.",
)
_TRAIT_WORDS = {"Opn+": "curious", "Con+": "organised", "Ext+": "outgoing", "Agr+": "easygoing",
                "Neu+": "a bit of a worrier"}


def with_article(noun: str) -> str:
    return ("an " if noun[:1].lower() in "aeiou" else "a ") + noun


def hashtag(phrase: str) -> str:
    words = re.findall(r"[A-Za-z0-9]+", phrase)
    return "#" + "".join(w[:1].upper() + w[1:] for w in words) if words else ""


def truncate_at_sentence(text: str, limit: int) -> str:
    """Cut ``text`` to at most ``limit`` characters, preferring a sentence end."""
    text = text.strip()
    if len(text) <= limit:
        return text
    head = text[:limit + 1]
    ends = [m.end() for m in re.finditer(r"[.!?](?=\s|$)", head) if m.end() <= limit]
    if ends:
        return text[:ends[-1]].strip()
    cut = head.rfind(" ")
    return (text[:cut] if cut > 0 else text[:limit]).strip()


def _fit(pieces: Sequence[str], tags: Sequence[str], limit: int) -> str:
    out = ""
    for p in pieces:
        cand = f"{out} {p}".strip()
        if len(cand) <= limit:
            out = cand
        elif not out:
            out = truncate_at_sentence(p, limit)
    for t in tags:
        cand = f"{out} {t}".strip()
        if t and len(cand) <= limit:
            out = cand
    return out


class StubGenerator:
    """Deterministic template backend: output is a pure function of ``(prompt, seed)``."""

    kind = "stub"

    def __init__(self, seed: int = 0):
        self.seed = int(seed)

    def complete(self, prompt: str) -> str:
        rng = np.random.default_rng(_digest_seed(self.seed, prompt))
        limit = int(_field(prompt, "postlen", "280"))
        if "naturalness=<n>" in prompt:
            return self._judge(rng)
        if "Write a first-person backstory" in prompt:
            return self._backstory(prompt, rng, limit)
        if "Summarize your previous actions" in prompt:
            return self._summary(prompt, limit)
        if RED_SECTIONS[3] in prompt:
            return self._red(prompt, rng, limit)
        return self._organic(prompt, rng, limit)

    @staticmethod
    def _pick(rng, options):
        return options[int(rng.integers(len(options)))]

    def _persona(self, prompt: str) -> dict:
        interests = [s.strip() for s in _field(prompt, "interests", "").split(",") if s.strip()]
        traits = [t.strip() for t in _field(prompt, "traits", "").split(",")]
        return {"name": _field(prompt, "name", "someone"), "age": _field(prompt, "age", "30"),
                "occupation": _field(prompt, "occupation", "person").lower(),
                "education": _field(prompt, "education", "school"),
                "interests": interests or ["everyday life"], "traits": [t for t in traits if t.endswith("+")]}

    def _trait_tag(self, persona: dict, rng) -> str:
        pool = [s for t in persona["traits"] for s in _TRAIT_TAGS.get(t, ())] or list(_NEUTRAL_TAGS)
        return self._pick(rng, pool)

    def _organic(self, prompt: str, rng, limit: int) -> str:
        persona = self._persona(prompt)
        topic = _field(prompt, "topic", "") or persona["interests"][0]
        interest = self._pick(rng, persona["interests"])
        bridge = self._pick(rng, _BRIDGES).format(occupation=persona["occupation"],
                                                   a_occupation=with_article(persona["occupation"]),
                                                   interest=interest.lower())
        tags = [hashtag(topic)]
        if rng.random() < 0.3:
            tags.append(hashtag(interest))
        if "Original author: @" in prompt:
            author = _field(prompt, "author", "")
            first = f"@{author} " + self._pick(rng, _REPLY_FRAMES).format(topic=topic)
            return _fit([first, bridge, self._trait_tag(persona, rng)], tags[:1], limit)
        first = self._pick(rng, _POST_FRAMES).format(topic=topic)
        return _fit([first, bridge, self._trait_tag(persona, rng)], tags[:2], limit)

    def _red(self, prompt: str, rng, limit: int) -> str:
        narrative = _field(prompt, "narrative", "")
        topic = _field(prompt, "topic", "")
        pieces = [narrative.rstrip(".") + ".", self._pick(rng, _RED_FRAMES)]
        if "Original author: @" in prompt:
            pieces[0] = f"@{_field(prompt, 'author', '')} " + pieces[0]
        return _fit(pieces, [hashtag(topic)] if topic else [], limit)

    def _backstory(self, prompt: str, rng, limit: int) -> str:
        p = self._persona(prompt)
        interests = p["interests"]
        slots = {"name": p["name"], "age": p["age"], "occupation": p["occupation"],
                 "a_occupation": with_article(p["occupation"]),
                 "education": p["education"], "interest": interests[0].lower(),
                 "interest2": self._pick(rng, interests).lower(),
                 "trait_word": _TRAIT_WORDS.get(p["traits"][0], "calm") if p["traits"] else "quiet and steady"}
        # the two identity sentences always lead; the rest are shuffled fillers
        rest = list(rng.permutation(len(_BACKSTORY) - 2) + 2)
        sentences = [_BACKSTORY[0], _BACKSTORY[1]] + [_BACKSTORY[i] for i in rest]
        out: list[str] = []
        words = 0
        for s in sentences:
            s = s.format(**slots)
            n = len(s.split())
            if words + n > 300:
                break
            out.append(s)
            words += n
            if words >= 150 and rng.random() < 0.35:
                break
        return truncate_at_sentence(" ".join(out), limit)

    def _summary(self, prompt: str, limit: int) -> str:
        topic = _field(prompt, "summary_topic", "recent activity")
        memory = _field(prompt, "memory", "")
        lines = [ln.strip() for ln in memory.splitlines() if ln.strip()]
        return truncate_at_sentence(f"Memory note on {topic}: " + "; ".join(lines), limit)

    def _judge(self, rng) -> str:
        n, c, e = int(rng.integers(3, 6)), int(rng.integers(3, 6)), int(rng.integers(2, 5))
        return f"naturalness={n}; consistency={c}; engagingness={e}"


class FixedGenerator:
    """Backend that always answers with the same text (useful for judge harness tests)."""

    kind = "fixed"

    def __init__(self, text: str):
        self.text = text

    def complete(self, prompt: str) -> str:
        return self.text


class RemoteGenerator:
    """Single-turn chat-completion client over HTTPS."""

    kind = "remote"

    def __init__(self, cfg: BackendConfig, *, transport=None, sleep: Callable[[float], None] = time.sleep):
        import httpx

        cfg.validate()
        key = os.environ.get(cfg.api_key_env, "")
        if not key:
            raise BackendError(f"environment variable {cfg.api_key_env} is not set")
        self.cfg = cfg
        self._httpx = httpx
        self._sleep = sleep
        self._client = httpx.Client(base_url=cfg.base_url.rstrip("/"), timeout=cfg.timeout_ms / 1000.0,
                                    headers={"Authorization": f"Bearer {key}"}, transport=transport)

    def close(self) -> None:
        self._client.close()

    def complete(self, prompt: str) -> str:
        httpx = self._httpx
        body = {"model": self.cfg.model, "messages": [{"role": "user", "content": prompt}]}
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self._sleep(min(8.0, 0.5 * 2 ** (attempt - 1)))
            try:
                resp = self._client.post("/chat/completions", json=body)
            except httpx.TimeoutException as exc:
                last = GenerationError(f"timeout: {exc}", {"attempt": attempt})
                continue
            except httpx.TransportError as exc:
                last = GenerationError(f"transport error: {exc}", {"attempt": attempt})
                continue
            if resp.status_code in (401, 403):
                raise BackendError(f"backend rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last = GenerationError(f"HTTP {resp.status_code}", {"attempt": attempt})
                continue
            if resp.status_code >= 400:
                raise GenerationError(f"HTTP {resp.status_code}: {resp.text[:200]}",
                                      {"status": resp.status_code})
            return self._extract(resp.json())
        raise last or GenerationError("no attempts made")

    @staticmethod
    def _extract(payload: dict) -> str:
        try:
            choice = payload["choices"][0]
            message = choice.get("message") or {}
        except (KeyError, IndexError, TypeError) as exc:
            raise GenerationError(f"malformed completion payload: {exc}") from exc
        if choice.get("finish_reason") == "content_filter" or message.get("refusal"):
            raise RefusalError("backend refused the request", {"finish_reason": choice.get("finish_reason")})
        text = (message.get("content") or "").strip()
        if not text:
            raise GenerationError("empty completion")
        return text


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

class AuditLog:
    """Append-only JSONL record of prompts and raw completions."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8")

    def log(self, req: GenerationRequest, prompt: str, raw: str | None, error: str | None = None) -> None:
        rec = {"agent_id": req.agent_id, "task": Task(req.task).value, "prompt": prompt,
               "completion": raw, "error": error}
        with self._lock:
            self._fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    def close(self) -> None:
        self._fh.close()


def generate(req: GenerationRequest, backend: TextGenerator, *, prompt: str | None = None,
             profile: AgentProfile | None = None, memory_text: str = "",
             audit: AuditLog | None = None) -> str:
    """Run one request through ``backend`` and enforce the ``post_len`` contract."""
    if prompt is None:
        if profile is None:
            raise PromptAssemblyError("PROFILE")
        prompt = build_prompt(req, profile, memory_text)
    try:
        raw = backend.complete(prompt)
    except GenerationError as exc:
        if audit:
            audit.log(req, prompt, None, f"{type(exc).__name__}: {exc}")
        raise
    if audit:
        audit.log(req, prompt, raw)
    text = (raw or "").strip()
    if not text:
        raise GenerationError("backend returned empty text")
    return truncate_at_sentence(text, req.post_len)


def generate_many(jobs: Sequence[tuple[GenerationRequest, str]], backend: TextGenerator,
                  max_in_flight: int = 4, audit: AuditLog | None = None) -> list[str | GenerationError]:
    """Dispatch prompts concurrently; results come back in input order.

    Failures are returned in place as exceptions so callers can apply their own
    fallback at the barrier.
    """
    def one(job):
        req, prompt = job
        try:
            return generate(req, backend, prompt=prompt, audit=audit)
        except GenerationError as exc:
            return exc

    if max_in_flight <= 1 or len(jobs) <= 1 or getattr(backend, "kind", "") == "stub":
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        return list(pool.map(one, jobs))


__all__ = [
    "AuditLog", "BackendConfig", "EMPTY_MEMORY", "FixedGenerator", "GenerationRequest", "INSTRUCTIONS",
    "JUDGE_DIMENSIONS", "JudgeScores", "RESET_BLOCK", "RemoteGenerator", "StubGenerator", "Task",
    "TextGenerator", "build_judge_prompt", "build_prompt", "generate", "generate_many", "hashtag",
    "make_backend", "parse_scores", "truncate_at_sentence",
]

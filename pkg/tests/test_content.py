import json
import re

import httpx
import pytest

from osnsim.content import (EMPTY_MEMORY, RED_SECTIONS, RESET_BLOCK, AuditLog, BackendConfig, FixedGenerator,
                            GenerationRequest, RemoteGenerator, StubGenerator, Task, build_judge_prompt,
                            build_prompt, generate, generate_many, make_backend, parse_scores,
                            truncate_at_sentence)
from osnsim.errors import BackendError, ConfigError, GenerationError, PromptAssemblyError, RefusalError, \
    ScoreParseError

HASHTAG = re.compile(r"#\w+")


def post_req(**kw):
    base = dict(agent_id=0, task=Task.POST, topic="award shows", post_len=280)
    base.update(kw)
    return GenerationRequest(**base)


def test_prompt_contains_template_parts(bob):
    prompt = build_prompt(post_req(), bob)
    assert prompt.startswith(RESET_BLOCK)
    assert "Name: Bob" in prompt and "MAXIMUM of 280 characters" in prompt
    assert "award shows" in prompt
    assert f"Memory (previous actions): {EMPTY_MEMORY}" in prompt


def test_prompt_is_pure(bob):
    assert build_prompt(post_req(), bob, "x") == build_prompt(post_req(), bob, "x")


def test_missing_placeholder_raises(bob):
    with pytest.raises(PromptAssemblyError):
        build_prompt(post_req(topic=""), bob)
    with pytest.raises(PromptAssemblyError):
        build_prompt(GenerationRequest(0, Task.REPLY, topic="t"), bob)


def test_red_prompt_layer_order(bob):
    req = GenerationRequest(0, Task.RED_POST, topic="AI", red_layers=("young voters", "Objective (Divide): x",
                                                                      "Title: framing"))
    prompt = build_prompt(req, bob)
    pos = [prompt.index(s) for s in RED_SECTIONS]
    assert pos == sorted(pos)
    assert prompt.index(RESET_BLOCK) < pos[0]
    assert "Divide" in prompt[pos[2]:pos[3]]


def test_stub_length_and_determinism(bob):
    gen = StubGenerator(seed=3)
    for n in (40, 100, 280):
        out = generate(post_req(post_len=n), gen, profile=bob)
        assert 0 < len(out) <= n
    assert generate(post_req(), gen, profile=bob) == generate(post_req(), StubGenerator(seed=3), profile=bob)


def test_stub_mentions_persona_and_few_hashtags(bob):
    gen = StubGenerator(seed=0)
    words = {"politics", "science", "award", "shows"}
    for memory in ("", "read post #1", "posted about science"):
        out = generate(post_req(), gen, profile=bob, memory_text=memory)
        assert words & set(re.findall(r"[a-z]+", out.lower()))
        assert len(HASHTAG.findall(out)) <= 2


def test_truncate_at_sentence():
    text = "First sentence. Second one is longer. Third."
    assert truncate_at_sentence(text, 100) == text
    assert truncate_at_sentence(text, 20) == "First sentence."
    assert len(truncate_at_sentence("x" * 50, 10)) <= 10


def test_judge_prompt_and_parser(bob):
    p = build_judge_prompt("hello", bob)
    for d in ("naturalness", "consistency", "engagingness"):
        assert d in p
    assert parse_scores("naturalness=4; consistency=5; engagingness=3").as_tuple() == (4, 5, 3)
    for bad in ("4;5;3", "naturalness=9; consistency=5; engagingness=3", "", "great post"):
        with pytest.raises(ScoreParseError):
            parse_scores(bad)


def test_backend_config_validation(monkeypatch):
    with pytest.raises(ConfigError):
        BackendConfig(kind="gpu").validate()
    with pytest.raises(ConfigError):
        BackendConfig(kind="remote").validate()
    assert isinstance(make_backend(BackendConfig()), StubGenerator)
    monkeypatch.delenv("MY_KEY", raising=False)
    with pytest.raises(BackendError):
        RemoteGenerator(BackendConfig(kind="remote", base_url="http://x", model="m", api_key_env="MY_KEY"))


def remote(monkeypatch, handler, retries=2):
    monkeypatch.setenv("TEST_KEY", "secret")
    cfg = BackendConfig(kind="remote", base_url="http://llm.test/v1", model="m", max_retries=retries,
                        api_key_env="TEST_KEY")
    return RemoteGenerator(cfg, transport=httpx.MockTransport(handler), sleep=lambda s: None)


def ok(text="Fine post. #ok"):
    return httpx.Response(200, json={"choices": [{"message": {"content": text}, "finish_reason": "stop"}]})


def test_remote_success_sends_auth(monkeypatch):
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["body"] = json.loads(request.content)
        return ok()

    gen = remote(monkeypatch, handler)
    assert gen.complete("hi") == "Fine post. #ok"
    assert seen["auth"] == "Bearer secret" and seen["body"]["messages"][0]["content"] == "hi"


def test_remote_retries_then_succeeds(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503) if len(calls) < 3 else ok()

    assert remote(monkeypatch, handler).complete("x") == "Fine post. #ok"
    assert len(calls) == 3


def test_remote_exhausts_retries(monkeypatch):
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(GenerationError):
        remote(monkeypatch, handler, retries=1).complete("x")


def test_remote_refusal_and_auth(monkeypatch):
    refusal = lambda r: httpx.Response(200, json={"choices": [{"message": {"content": ""},
                                                              "finish_reason": "content_filter"}]})
    with pytest.raises(RefusalError):
        remote(monkeypatch, refusal).complete("x")
    with pytest.raises(BackendError):
        remote(monkeypatch, lambda r: httpx.Response(401)).complete("x")


def test_generate_many_preserves_order(monkeypatch, bob):
    def handler(request):
        prompt = json.loads(request.content)["messages"][0]["content"]
        if "fail" in prompt:
            return httpx.Response(400)
        return ok(prompt.upper())

    gen = remote(monkeypatch, handler, retries=0)
    jobs = [(post_req(), f"p{i:02d}") for i in range(6)] + [(post_req(), "please fail")]
    out = generate_many(jobs, gen, max_in_flight=3)
    assert out[:6] == [f"P{i:02d}" for i in range(6)]
    assert isinstance(out[6], GenerationError)


def test_audit_log(tmp_path, bob):
    log = AuditLog(tmp_path / "a.jsonl")
    generate(post_req(), FixedGenerator("hello there."), profile=bob, audit=log)
    log.close()
    rec = json.loads((tmp_path / "a.jsonl").read_text())
    assert rec["completion"] == "hello there." and rec["task"] == "post"


def test_empty_completion_is_error(bob):
    with pytest.raises(GenerationError):
        generate(post_req(), FixedGenerator("   "), profile=bob)

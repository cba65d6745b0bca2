from __future__ import annotations

import hashlib
import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bddgen.errors import ConfigError
from bddgen.prompts import build_prompt, default_templates
from bddgen.providers import (
    AuthError,
    ChatCompletionsProvider,
    GenerationParams,
    Provider,
    ProviderConfig,
    ProviderError,
    ProviderResponse,
    RateLimited,
    RecordingProvider,
    ReplayFixture,
    ReplayMiss,
    ReplayProvider,
    Timeout,
    generate,
    load_provider_configs,
    record,
    request_digest,
    strip_fences,
)
from bddgen.stories import UserStory

SECRET = "sk-test-0123456789abcdef"
STORY = UserStory("US01", "As a user, I need a simple calculator for quick and accurate basic operations.")
PAYLOAD = build_prompt(STORY, default_templates().few)
PARAMS = GenerationParams("model-x")


def oracle_digest(payload, params) -> str:
    wire = [{"role": m.role.value, "content": m.text} for m in payload.messages]
    blob = json.dumps(
        {"messages": wire, "params": params.to_dict()}, sort_keys=True, ensure_ascii=False, separators=(",", ":")
    )
    return hashlib.sha256(blob.encode()).hexdigest()


class Canned(Provider):
    name = "canned"

    def __init__(self, text="Feature: X\n"):
        self.text = text
        self.calls = 0

    def generate(self, payload, params):
        self.calls += 1
        return ProviderResponse(self.text, params.model_id, 5, request_digest(payload, params))


class TestDigest:
    def test_matches_independent_computation(self):
        assert request_digest(PAYLOAD, PARAMS) == oracle_digest(PAYLOAD, PARAMS)

    def test_sensitive_to_params_and_messages(self):
        base = request_digest(PAYLOAD, PARAMS)
        assert request_digest(PAYLOAD, PARAMS.with_model("other")) != base
        assert request_digest(PAYLOAD, GenerationParams("model-x", temperature=0.3)) != base
        zero = build_prompt(STORY, default_templates().zero)
        assert request_digest(zero, PARAMS) != base

    def test_extra_order_irrelevant(self):
        a = GenerationParams("m", extra={"a": "1", "b": "2"})
        b = GenerationParams("m", extra={"b": "2", "a": "1"})
        assert request_digest(PAYLOAD, a) == request_digest(PAYLOAD, b)


class TestParams:
    @pytest.mark.parametrize("kwargs", [
        {"model_id": ""},
        {"model_id": "m", "temperature": -0.1},
        {"model_id": "m", "temperature": 2.5},
        {"model_id": "m", "top_p": 0.0},
        {"model_id": "m", "max_tokens": 0},
        {"model_id": "m", "max_tokens": True},
        {"model_id": "m", "extra": {"k": 1}},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            GenerationParams(**kwargs)

    def test_dict_round_trip(self):
        params = GenerationParams("m", 0.7, 0.9, 256, {"seed": "1"})
        assert GenerationParams.from_dict(params.to_dict()) == params

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            GenerationParams.from_dict({"model_id": "m", "temprature": 1})


class TestReplay:
    def test_hit(self):
        fixture = ReplayFixture({oracle_digest(PAYLOAD, PARAMS): "Feature: Calc\n"})
        response = generate(ReplayProvider(fixture), PAYLOAD, PARAMS)
        assert response.text == "Feature: Calc\n"
        assert response.latency_ms == 0
        assert response.request_digest == oracle_digest(PAYLOAD, PARAMS)
        assert response.model_id == "model-x"

    def test_miss(self):
        with pytest.raises(ReplayMiss) as info:
            ReplayProvider(ReplayFixture()).generate(PAYLOAD, PARAMS)
        assert info.value.digest == request_digest(PAYLOAD, PARAMS)

    def test_missing_file_is_empty(self, tmp_path):
        assert len(ReplayFixture.load(tmp_path / "none.json")) == 0

    def test_bad_fixture(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"a": 1}')
        with pytest.raises(ConfigError):
            ReplayFixture.load(path)

    def test_record_grows_by_one_then_replays(self, tmp_path):
        path = tmp_path / "fx.json"
        ReplayFixture({"0" * 64: "old"}).save(path)
        inner = Canned("Feature: Recorded\n")
        response = record(inner, PAYLOAD, PARAMS, path)
        assert len(ReplayFixture.load(path)) == 2
        record(inner, PAYLOAD, PARAMS, path)
        assert len(ReplayFixture.load(path)) == 2
        replayed = ReplayProvider.from_path(path).generate(PAYLOAD, PARAMS)
        assert replayed.text == response.text

    def test_recording_provider(self, tmp_path):
        path = tmp_path / "fx.json"
        RecordingProvider(Canned(), path).generate(PAYLOAD, PARAMS)
        assert ReplayFixture.load(path).entries == {request_digest(PAYLOAD, PARAMS): "Feature: X\n"}
        assert path.read_text().endswith("\n")


def make_provider(handler, environ=None, **kwargs):
    config = ProviderConfig("live", "https://llm.example/v1", api_key_env="TEST_KEY")
    client = httpx.Client(transport=httpx.MockTransport(handler))
    sleeps = []
    provider = ChatCompletionsProvider(
        config, client=client, sleep=sleeps.append,
        environ={"TEST_KEY": SECRET} if environ is None else environ, **kwargs,
    )
    return provider, sleeps


def completion(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


class TestChatCompletions:
    def test_success_request_shape(self):
        seen = {}

        def handler(request):
            seen["url"] = str(request.url)
            seen["auth"] = request.headers["Authorization"]
            seen["body"] = json.loads(request.content)
            return completion("Feature: Calc\n")

        provider, _ = make_provider(handler)
        response = provider.generate(PAYLOAD, GenerationParams("m", extra={"seed": "7"}))
        assert response.text == "Feature: Calc\n"
        assert seen["url"] == "https://llm.example/v1/chat/completions"
        assert seen["auth"] == f"Bearer {SECRET}"
        body = seen["body"]
        assert body["model"] == "m" and body["seed"] == "7"
        assert body["messages"] == PAYLOAD.to_wire()
        assert response.request_digest == request_digest(PAYLOAD, GenerationParams("m", extra={"seed": "7"}))

    def test_retries_then_succeeds(self):
        statuses = iter([429, 503, 200])

        def handler(request):
            status = next(statuses)
            return completion("ok") if status == 200 else httpx.Response(status)

        provider, sleeps = make_provider(handler)
        assert provider.generate(PAYLOAD, PARAMS).text == "ok"
        assert sleeps == [1.0, 2.0]

    def test_rate_limited_after_retries(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(429, text="slow down")

        provider, sleeps = make_provider(handler, max_attempts=3)
        with pytest.raises(RateLimited) as info:
            provider.generate(PAYLOAD, PARAMS)
        assert len(calls) == 3 and len(sleeps) == 2
        assert info.value.status == 429

    def test_server_error_surfaces(self):
        provider, _ = make_provider(lambda r: httpx.Response(500, text="boom"), max_attempts=2)
        with pytest.raises(ProviderError) as info:
            provider.generate(PAYLOAD, PARAMS)
        assert info.value.status == 500

    def test_client_error_not_retried(self):
        calls = []

        def handler(request):
            calls.append(1)
            return httpx.Response(400, text="bad request")

        provider, sleeps = make_provider(handler)
        with pytest.raises(ProviderError):
            provider.generate(PAYLOAD, PARAMS)
        assert calls == [1] and sleeps == []

    def test_auth_error_redacts_key(self):
        provider, _ = make_provider(lambda r: httpx.Response(401, text=f"invalid key {SECRET}"))
        with pytest.raises(AuthError) as info:
            provider.generate(PAYLOAD, PARAMS)
        assert SECRET not in str(info.value)
        assert SECRET not in info.value.body
        assert SECRET not in repr(info.value.args)

    def test_missing_key(self):
        provider, _ = make_provider(lambda r: completion("x"), environ={})
        with pytest.raises(AuthError) as info:
            provider.generate(PAYLOAD, PARAMS)
        assert "TEST_KEY" in str(info.value)

    def test_timeout(self):
        def handler(request):
            raise httpx.ReadTimeout("slow", request=request)

        provider, _ = make_provider(handler)
        with pytest.raises(Timeout):
            provider.generate(PAYLOAD, PARAMS)

    def test_malformed_body(self):
        provider, _ = make_provider(lambda r: httpx.Response(200, json={"nothing": []}))
        with pytest.raises(ProviderError):
            provider.generate(PAYLOAD, PARAMS)


def test_load_provider_configs(tmp_path):
    path = tmp_path / "providers.json"
    path.write_text(json.dumps({"providers": [
        {"name": "a", "base_url": "http://a", "api_key_env": "A_KEY", "model_id": "gpt"},
        {"name": "b", "base_url": "http://b", "params": {"temperature": 0.5}},
    ]}))
    configs = load_provider_configs(path)
    assert sorted(configs) == ["a", "b"]
    assert configs["a"].model_id == "gpt"
    assert configs["b"].params == {"temperature": 0.5}
    path.write_text(json.dumps({"base_url": "http://x"}))
    with pytest.raises(ConfigError):
        load_provider_configs(path)


class TestStripFences:
    @pytest.mark.parametrize("text, expected", [
        ("```gherkin\nFeature: X\n```\n", "Feature: X"),
        ("\n  ```\nFeature: X\n  Given a\n```\ntrailing prose\n", "Feature: X\n  Given a"),
        ("Feature: X\n", "Feature: X\n"),
        ("Here you go:\n```gherkin\nFeature: X\n```\n", "Here you go:\n```gherkin\nFeature: X\n```\n"),
        ("```gherkin\nFeature: X\n", "```gherkin\nFeature: X\n"),
        ("", ""),
    ])
    def test_examples(self, text, expected):
        assert strip_fences(text) == expected

    @given(st.lists(st.sampled_from(["```", "```gherkin", "  ```", "Feature: X", "Given a", "", "text ```"]),
                    max_size=10))
    def test_idempotent(self, lines):
        text = "\n".join(lines)
        once = strip_fences(text)
        assert strip_fences(once) == once

    @given(st.text())
    def test_idempotent_arbitrary(self, text):
        once = strip_fences(text)
        assert strip_fences(once) == once

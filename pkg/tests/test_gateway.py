"""LM gateway: templates, extraction, retries, stub, HTTP provider."""

import json
import time

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xpress.gateway import (
    AuthConfigError,
    CompletionParams,
    HttpProviderError,
    LmTimeout,
    PromptTemplate,
    SchemaExtractionError,
    ScriptedStub,
    StubExhaustedError,
    TemplateLibrary,
    UnboundPlaceholderError,
    complete_structured,
    extract_json_object,
    http_chat_provider,
    truncate_history,
)

LIB = TemplateLibrary()


class TestTemplates:
    def test_all_shipped_templates_load(self):
        for template_id in (
            "program_synthesis",
            "program_synthesis_js",
            "story_generation",
            "story_segmentation",
            "face_description",
            "bank_expression",
            "reactor",
            "responder",
        ):
            template = LIB.get(template_id)
            assert template.body.strip()

    def test_unbound_placeholder(self):
        template = LIB.get("reactor")
        with pytest.raises(UnboundPlaceholderError):
            template.render({"previous_chunks": "x"})

    def test_render_is_pure(self):
        template = PromptTemplate("t", "hello ${name}", None)
        assert template.render({"name": "a"}) == template.render({"name": "a"}) == "hello a"

    def test_placeholder_discovery(self):
        assert LIB.get("reactor").placeholders() == {
            "previous_chunks",
            "current_chunk",
            "current_expression",
            "seconds_since_change",
        }

    def test_question_script_has_nine_entries(self):
        questions = LIB.question_script()
        assert len(questions) == 9
        assert questions[0].startswith("How are you feeling today?")
        assert questions[-1] == "What are you grateful for right now?"


class TestExtraction:
    def test_bare_object(self):
        assert extract_json_object('{"a": 1}') == {"a": 1}

    def test_prose_and_fences_around_object(self):
        text = 'Sure! Here you go:\n```json\n{"emotion": "tired", "intensity": "low"}\n```\nHope that helps.'
        assert extract_json_object(text) == {"emotion": "tired", "intensity": "low"}

    def test_single_quoted_payload_repaired(self):
        assert extract_json_object("{'emotion': 'tired', 'intensity': 'low'}") == {
            "emotion": "tired",
            "intensity": "low",
        }

    def test_no_object_raises(self):
        with pytest.raises(SchemaExtractionError):
            extract_json_object("there is no payload here")

    @settings(max_examples=50, deadline=None)
    @given(
        prefix=st.text(alphabet=st.characters(blacklist_characters="{}"), max_size=40),
        suffix=st.text(max_size=40),
        payload=st.dictionaries(
            st.text(min_size=1, max_size=8), st.integers() | st.text(max_size=8), max_size=4
        ),
    )
    def test_payload_at_any_position_is_recovered(self, prefix, suffix, payload):
        text = prefix + json.dumps(payload) + suffix
        assert extract_json_object(text) == payload


class TestCompleteStructured:
    def test_reactor_roundtrip(self):
        stub = ScriptedStub.sequence(['{"emotion": "tired", "intensity": "low"}'])
        payload = complete_structured(
            LIB.get("reactor"),
            {
                "previous_chunks": "",
                "current_chunk": "little tired I need to go",
                "current_expression": "neutral",
                "seconds_since_change": 5.0,
            },
            stub,
        )
        assert payload == {"emotion": "tired", "intensity": "low"}
        assert len(stub.calls) == 1
        assert "little tired I need to go" in stub.calls[0]

    def test_retry_until_schema_valid(self):
        stub = ScriptedStub.sequence(["not json at all", '{"emotion": "calm", "intensity": "low"}'])
        payload = complete_structured(LIB.get("reactor"), _reactor_bindings(), stub)
        assert payload["emotion"] == "calm"
        assert len(stub.calls) == 2

    def test_schema_error_after_retries(self):
        stub = ScriptedStub.sequence(["nope", "still nope", "never"])
        with pytest.raises(SchemaExtractionError):
            complete_structured(LIB.get("reactor"), _reactor_bindings(), stub, retries=3)

    def test_timeout_surfaces(self):
        class SlowProvider:
            identity = "slow"

            def complete(self, prompt, params):
                time.sleep(0.2)
                return "{}"

        template = PromptTemplate("t", "hi", None, CompletionParams(timeout_s=0.01))
        with pytest.raises(LmTimeout):
            complete_structured(template, {}, SlowProvider())


def _reactor_bindings():
    return {
        "previous_chunks": "",
        "current_chunk": "x",
        "current_expression": "neutral",
        "seconds_since_change": 1.0,
    }


class TestScriptedStub:
    def test_matcher_selects_response(self):
        stub = ScriptedStub()
        stub.add("alpha", "A")
        stub.add("beta", "B")
        params = CompletionParams()
        assert stub.complete("say beta please", params) == "B"
        assert stub.complete("now alpha", params) == "A"
        assert stub.calls == ["say beta please", "now alpha"]

    def test_exhaustion_raises(self):
        stub = ScriptedStub()
        stub.add("x", "once", times=1)
        stub.complete("x", CompletionParams())
        with pytest.raises(StubExhaustedError):
            stub.complete("x", CompletionParams())

    def test_replay_is_deterministic(self):
        def build():
            stub = ScriptedStub()
            stub.add("a", "1", times=None)
            stub.add("", "2", times=None)
            return [stub.complete(p, CompletionParams()) for p in ("a", "b", "a")]

        assert build() == build() == ["1", "2", "1"]


def _chat_response(content):
    return {"choices": [{"message": {"content": content}}]}


class TestHttpProvider:
    def test_identity_echoes_model(self, monkeypatch):
        monkeypatch.setenv("XPRESS_API_KEY", "k")
        transport = httpx.MockTransport(lambda req: httpx.Response(200, json=_chat_response("ok")))
        provider = http_chat_provider("http://lm.local/v1/chat", "gpt-test", transport=transport)
        assert provider.identity == "http:gpt-test"
        assert provider.complete("hi", CompletionParams()) == "ok"

    def test_missing_credential_fails_at_construction(self, monkeypatch):
        monkeypatch.delenv("XPRESS_API_KEY", raising=False)
        with pytest.raises(AuthConfigError):
            http_chat_provider("http://lm.local/v1/chat", "gpt-test")

    def test_429_then_200_records_one_backoff(self, monkeypatch):
        monkeypatch.setenv("XPRESS_API_KEY", "k")
        statuses = iter([429, 200])

        def handler(request):
            status = next(statuses)
            if status == 200:
                return httpx.Response(200, json=_chat_response("recovered"))
            return httpx.Response(status)

        provider = http_chat_provider(
            "http://lm.local/v1/chat", "m", transport=transport_of(handler), sleep=lambda s: None
        )
        assert provider.complete("hi", CompletionParams()) == "recovered"
        assert provider.backoffs == 1

    def test_persistent_failure_raises_http_error(self, monkeypatch):
        monkeypatch.setenv("XPRESS_API_KEY", "k")
        provider = http_chat_provider(
            "http://lm.local/v1/chat",
            "m",
            transport=transport_of(lambda r: httpx.Response(503)),
            sleep=lambda s: None,
        )
        with pytest.raises(HttpProviderError) as exc:
            provider.complete("hi", CompletionParams())
        assert exc.value.status == 503

    def test_malformed_endpoint_rejected(self, monkeypatch):
        monkeypatch.setenv("XPRESS_API_KEY", "k")
        with pytest.raises(ValueError):
            http_chat_provider("lm.local/no-scheme", "m")


def transport_of(handler):
    return httpx.MockTransport(handler)


def test_truncate_history_keeps_first_and_recent():
    items = list(range(20))
    kept = truncate_history(items, keep_first=1, keep_last=8)
    assert kept == [0] + list(range(12, 20))
    assert truncate_history([1, 2, 3]) == [1, 2, 3]


def test_custom_template_dir_overrides_shipped(tmp_path):
    (tmp_path / "reactor.txt").write_text("custom reactor ${previous_chunks} ${current_chunk} "
                                          "${current_expression} ${seconds_since_change}")
    lib = TemplateLibrary(tmp_path)
    stub = ScriptedStub.sequence(['{"emotion": "happy", "intensity": "low"}'])
    complete_structured(lib.get("reactor"), _reactor_bindings(), stub)
    assert stub.calls[0].startswith("custom reactor")


def test_call_log_dump_flag(tmp_path, monkeypatch):
    log_path = tmp_path / "calls.jsonl"
    monkeypatch.setenv("XPRESS_CALL_LOG", str(log_path))
    stub = ScriptedStub.sequence(['{"emotion": "calm", "intensity": "low"}'])
    complete_structured(LIB.get("reactor"), _reactor_bindings(), stub)
    lines = [json.loads(line) for line in log_path.read_text().splitlines()]
    assert len(lines) == 1
    assert lines[0]["provider"] == "stub:scripted"
    assert "current_chunk" in lines[0]["prompt"]

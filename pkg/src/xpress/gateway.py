"""Single boundary to language-model providers.

Everything that talks to an LM goes through here: prompt templates with
named placeholders, structured-output extraction with light repair,
per-call timeouts, retries, and a deterministic scripted stub so the rest
of the system is testable without any network access.
"""

from __future__ import annotations

import ast
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Callable, Protocol, runtime_checkable

import httpx
import jsonschema

from .errors import XpressError


class LmFailure(XpressError):
    """The provider could not produce a usable completion."""


class LmTimeout(LmFailure):
    pass


class SchemaExtractionError(LmFailure):
    """No payload matching the expected schema, even after retries."""


class UnboundPlaceholderError(XpressError):
    def __init__(self, name: str, template_id: str):
        self.placeholder = name
        super().__init__(f"template {template_id!r} has unbound placeholder ${{{name}}}")


class AuthConfigError(XpressError):
    pass


class HttpProviderError(LmFailure):
    def __init__(self, status: int, detail: str = ""):
        self.status = status
        super().__init__(f"provider returned HTTP {status}{': ' + detail if detail else ''}")


class StubExhaustedError(XpressError):
    pass


@dataclass(frozen=True)
class CompletionParams:
    temperature: float = 0.2
    max_tokens: int = 2000
    timeout_s: float = 20.0


@runtime_checkable
class LmProvider(Protocol):
    identity: str

    def complete(self, prompt: str, params: CompletionParams) -> str: ...


@dataclass(frozen=True)
class PromptTemplate:
    """A prompt body with ${named} placeholders and an expected output schema."""

    template_id: str
    body: str
    schema_id: str | None = None
    params: CompletionParams = field(default_factory=CompletionParams)

    def placeholders(self) -> set[str]:
        return {
            m.group("named") or m.group("braced")
            for m in Template.pattern.finditer(self.body)
            if m.group("named") or m.group("braced")
        }

    def render(self, bindings: dict[str, Any]) -> str:
        try:
            return Template(self.body).substitute({k: str(v) for k, v in bindings.items()})
        except KeyError as exc:
            raise UnboundPlaceholderError(exc.args[0], self.template_id) from None


# Expected-output schemas, one per structured prompt. These gate only the
# payload shape; deep face-program validation stays in the validator.
_DESCRIPTION_FIELDS = {
    "eyes": {"type": "string"},
    "upperEyelids": {"type": "string"},
    "lowerEyelids": {"type": "string"},
    "mouth": {"type": "string"},
    "misc": {"type": "string"},
}

SCHEMAS: dict[str, dict[str, Any]] = {
    "story": {
        "type": "object",
        "required": ["storyTitle", "storyContent"],
        "properties": {"storyTitle": {"type": "string"}, "storyContent": {"type": "string"}},
    },
    "segmentation": {
        "type": "object",
        "required": ["set", "explanation", "chunks"],
        "properties": {
            "set": {"type": "string"},
            "explanation": {"type": "string"},
            "chunks": {"type": "array", "items": {"type": "string"}, "minItems": 1},
        },
    },
    "face_description": {
        "type": "object",
        "required": ["start_time", "eyes", "upperEyelids", "lowerEyelids", "mouth", "misc"],
        "properties": {"start_time": {}, **_DESCRIPTION_FIELDS},
    },
    "bank_descriptions": {
        "type": "object",
        "required": ["high_intensity", "low_intensity"],
        "properties": {
            "high_intensity": {"type": "object", "required": sorted(_DESCRIPTION_FIELDS)},
            "low_intensity": {"type": "object", "required": sorted(_DESCRIPTION_FIELDS)},
        },
    },
    "reaction": {
        "type": "object",
        "required": ["emotion"],
        "properties": {"emotion": {"type": "string"}, "intensity": {"type": "string"}},
    },
    "responder": {
        "type": "object",
        "required": ["emotion", "intensity", "response", "end_of_conversation"],
        "properties": {
            "emotion": {"type": "string"},
            "intensity": {"type": "string"},
            "response": {"type": "string"},
            "end_of_conversation": {},
        },
    },
    "face_program": {
        "type": "object",
        "required": ["tracks"],
        "properties": {"tracks": {"type": "array"}},
    },
}

_VALIDATORS: dict[str, jsonschema.protocols.Validator] = {}


def _schema_validator(schema_id: str) -> jsonschema.protocols.Validator:
    if schema_id not in _VALIDATORS:
        _VALIDATORS[schema_id] = jsonschema.Draft202012Validator(SCHEMAS[schema_id])
    return _VALIDATORS[schema_id]


# Which schema each shipped template expects, plus sampling defaults.
# Synthesis-style prompts run near-deterministic; creative ones run hot.
TEMPLATE_CONFIG: dict[str, tuple[str | None, CompletionParams]] = {
    "story_generation": ("story", CompletionParams(temperature=0.9, max_tokens=1500)),
    "story_segmentation": ("segmentation", CompletionParams(temperature=0.4, max_tokens=3000)),
    "face_description": ("face_description", CompletionParams(temperature=0.6)),
    "bank_expression": ("bank_descriptions", CompletionParams(temperature=0.6)),
    "program_synthesis": ("face_program", CompletionParams(temperature=0.1, max_tokens=3000)),
    "program_synthesis_js": (None, CompletionParams(temperature=0.1, max_tokens=3000)),
    "reactor": ("reaction", CompletionParams(temperature=0.3, max_tokens=200)),
    "responder": ("responder", CompletionParams(temperature=0.7, max_tokens=600)),
}


class TemplateLibrary:
    """Loads prompt templates from a directory (defaults to the shipped set)."""

    def __init__(self, directory: Path | None = None):
        self._directory = directory
        self._cache: dict[str, PromptTemplate] = {}

    def _read(self, template_id: str) -> str:
        if self._directory is not None:
            path = self._directory / f"{template_id}.txt"
            if not path.exists():
                raise FileNotFoundError(f"no template {template_id!r} in {self._directory}")
            return path.read_text(encoding="utf-8")
        return (
            resources.files("xpress").joinpath(f"templates/{template_id}.txt").read_text("utf-8")
        )

    def get(self, template_id: str) -> PromptTemplate:
        if template_id not in self._cache:
            schema_id, params = TEMPLATE_CONFIG.get(template_id, (None, CompletionParams()))
            self._cache[template_id] = PromptTemplate(
                template_id=template_id,
                body=self._read(template_id),
                schema_id=schema_id,
                params=params,
            )
        return self._cache[template_id]

    def question_script(self) -> list[str]:
        if self._directory is not None:
            path = self._directory / "questions.json"
            if path.exists():
                return json.loads(path.read_text(encoding="utf-8"))
        text = resources.files("xpress").joinpath("templates/questions.json").read_text("utf-8")
        return json.loads(text)


def extract_json_object(text: str) -> dict[str, Any]:
    """Pull the first JSON object out of a completion.

    Tolerates code fences, prose around the payload, and single-quoted
    pseudo-JSON (repaired via a literal-eval pass).
    """
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch != "{":
            continue
        try:
            obj, _end = decoder.raw_decode(text[i:])
        except ValueError:
            continue
        if isinstance(obj, dict):
            return obj
    # repair pass: balanced-brace candidates evaluated as python literals
    for start in (i for i, ch in enumerate(text) if ch == "{"):
        depth = 0
        for j in range(start, len(text)):
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
                if depth == 0:
                    try:
                        obj = ast.literal_eval(text[start : j + 1])
                    except (ValueError, SyntaxError):
                        break
                    if isinstance(obj, dict):
                        return {str(k): v for k, v in obj.items()}
                    break
        else:
            continue
    raise SchemaExtractionError("no JSON object found in completion")


_EXECUTOR: ThreadPoolExecutor | None = None


def _executor() -> ThreadPoolExecutor:
    global _EXECUTOR
    if _EXECUTOR is None:
        _EXECUTOR = ThreadPoolExecutor(max_workers=16, thread_name_prefix="lm-call")
    return _EXECUTOR


def _audit_call(provider: LmProvider, prompt: str) -> None:
    """Append the rendered prompt to the audit log when XPRESS_CALL_LOG is set."""
    path = os.environ.get("XPRESS_CALL_LOG")
    if not path:
        return
    record = json.dumps({"provider": provider.identity, "prompt": prompt})
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(record + "\n")


def complete_text(provider: LmProvider, prompt: str, params: CompletionParams) -> str:
    """One provider call under the mandatory per-call timeout.

    Providers that enforce params.timeout_s themselves (or cannot block,
    like the scripted stub) set `inline = True` and are called directly;
    anything else runs under a watchdog thread. Either way, whatever the
    provider throws surfaces as an LmFailure so callers have a single
    failure channel to handle (or fail quiet on).
    """
    _audit_call(provider, prompt)
    if getattr(provider, "inline", False):
        try:
            return provider.complete(prompt, params)
        except LmFailure:
            raise
        except Exception as exc:
            raise LmFailure(f"provider {provider.identity} failed: {exc}") from exc
    future = _executor().submit(provider.complete, prompt, params)
    try:
        return future.result(timeout=params.timeout_s)
    except FutureTimeout:
        future.cancel()
        raise LmTimeout(
            f"provider {provider.identity} exceeded {params.timeout_s}s"
        ) from None
    except LmFailure:
        raise
    except Exception as exc:
        raise LmFailure(f"provider {provider.identity} failed: {exc}") from exc


def complete_structured(
    template: PromptTemplate,
    bindings: dict[str, Any],
    provider: LmProvider,
    *,
    retries: int = 3,
    params: CompletionParams | None = None,
) -> dict[str, Any]:
    """Render, call, extract, and schema-check; retry on malformed output.

    Raises UnboundPlaceholderError before any call if bindings are short,
    LmTimeout when the provider stalls, and SchemaExtractionError once the
    retry budget is spent on unusable completions.
    """
    prompt = template.render(bindings)
    params = params or template.params
    validator = _schema_validator(template.schema_id) if template.schema_id else None

    last_error: Exception | None = None
    for _attempt in range(max(retries, 1)):
        text = complete_text(provider, prompt, params)
        try:
            payload = extract_json_object(text)
            if validator is not None:
                validator.validate(payload)
            return payload
        except (SchemaExtractionError, jsonschema.ValidationError) as exc:
            last_error = exc
    raise SchemaExtractionError(
        f"template {template.template_id!r}: no schema-valid payload after "
        f"{retries} attempts: {last_error}"
    )


@dataclass
class _StubEntry:
    matcher: Callable[[str], bool]
    response: str
    remaining: int | None  # None = unlimited


class ScriptedStub:
    """Deterministic scripted provider for tests and offline simulation.

    Entries are consumed in order: each call returns the first entry whose
    matcher accepts the rendered prompt and whose use budget is not spent.
    Every rendered prompt is recorded verbatim in `calls`.
    """

    identity = "stub:scripted"
    inline = True  # replies instantly; no watchdog thread needed

    def __init__(self) -> None:
        self._entries: list[_StubEntry] = []
        self.calls: list[str] = []
        self._lock = threading.Lock()

    @classmethod
    def from_script(cls, script: list[dict[str, Any]]) -> "ScriptedStub":
        """Build from [{"match": substring, "response": text, "times": n}, ...]."""
        stub = cls()
        for item in script:
            stub.add(item.get("match", ""), item["response"], times=item.get("times", 1))
        return stub

    @classmethod
    def sequence(cls, responses: list[str]) -> "ScriptedStub":
        stub = cls()
        for response in responses:
            stub.add("", response)
        return stub

    def add(
        self,
        match: str | Callable[[str], bool],
        response: Any,
        *,
        times: int | None = 1,
    ) -> "ScriptedStub":
        matcher = match if callable(match) else (lambda p, needle=match: needle in p)
        if not isinstance(response, str):
            response = json.dumps(response)
        self._entries.append(_StubEntry(matcher, response, times))
        return self

    def complete(self, prompt: str, params: CompletionParams) -> str:
        with self._lock:
            self.calls.append(prompt)
            for entry in self._entries:
                if entry.remaining == 0:
                    continue
                if entry.matcher(prompt):
                    if entry.remaining is not None:
                        entry.remaining -= 1
                    return entry.response
            raise StubExhaustedError(
                f"no scripted response matches call #{len(self.calls)}: {prompt[:120]!r}..."
            )


class HttpChatProvider:
    """Chat-completion provider over HTTP with exponential backoff.

    Credentials come from the environment at construction time; a missing
    variable is a configuration error, not a runtime surprise. The request
    timeout enforces params.timeout_s, so no watchdog thread is needed.
    """

    inline = True

    def __init__(
        self,
        endpoint: str,
        model: str,
        *,
        api_key_env: str = "XPRESS_API_KEY",
        attempts: int = 3,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not endpoint.startswith(("http://", "https://")):
            raise ValueError(f"malformed endpoint url: {endpoint!r}")
        api_key = os.environ.get(api_key_env)
        if not api_key:
            raise AuthConfigError(f"credential env var {api_key_env} is not set")
        self.endpoint = endpoint
        self.model = model
        self.identity = f"http:{model}"
        self.attempts = attempts
        self.backoffs = 0
        self._sleep = sleep
        self._client = httpx.Client(
            transport=transport,
            headers={"Authorization": f"Bearer {api_key}"},
        )

    def complete(self, prompt: str, params: CompletionParams) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        last_status = 0
        for attempt in range(self.attempts):
            if attempt:
                self.backoffs += 1
                self._sleep(0.5 * 2 ** (attempt - 1))
            try:
                response = self._client.post(self.endpoint, json=body, timeout=params.timeout_s)
            except httpx.TimeoutException as exc:
                raise LmTimeout(str(exc)) from exc
            except httpx.HTTPError:
                last_status = 0
                continue
            if response.status_code == 200:
                data = response.json()
                return data["choices"][0]["message"]["content"]
            last_status = response.status_code
            if response.status_code in (429,) or response.status_code >= 500:
                continue
            raise HttpProviderError(response.status_code, response.text[:200])
        raise HttpProviderError(last_status, f"after {self.attempts} attempts")


def http_chat_provider(
    endpoint: str, model: str, *, api_key_env: str = "XPRESS_API_KEY", **kwargs: Any
) -> HttpChatProvider:
    return HttpChatProvider(endpoint, model, api_key_env=api_key_env, **kwargs)


def truncate_history(items: list[Any], keep_first: int = 1, keep_last: int = 8) -> list[Any]:
    """Bound prompt history: keep the opening item(s) plus the recent tail."""
    if len(items) <= keep_first + keep_last:
        return list(items)
    return list(items[:keep_first]) + list(items[-keep_last:])

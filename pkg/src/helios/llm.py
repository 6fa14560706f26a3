"""Provider-agnostic LLM layer: instrument selection, structured RGB
extraction, the tool-call loop and code extraction, with guardrails.

Every completion goes through a :class:`ProviderSession`, which owns the
budget counters (max requests, max tokens), throttles to the configured
rate limit, and retries rate-limited responses with exponential backoff.
The wire format is chat-completions-compatible HTTP; credentials are read
from an environment variable only at request time.

For tests and offline use a scripted provider replays a fixed sequence of
responses from a ``helios-llm-script/1`` file, so every CI run is
deterministic.  Live providers sit behind the same session interface.

Extracted code is returned with a provenance record and is NEVER executed;
this module deliberately provides no execution facility.  Authority lives
in the tool registry: only whitelisted callables can run.
"""

from __future__ import annotations

import json
import os
import time
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone

import requests
import yaml

from helios.sim import RgbSetting

SCRIPT_SCHEMA = "helios-llm-script/1"

_ROLES = ("system", "user", "assistant", "tool")
_SCHEMA_TYPES = ("number", "string", "boolean", "object")


class BridgeError(Exception):
    """Base class for bridge failures."""


class BudgetError(BridgeError):
    """The session's request or token budget is exhausted."""


class ProviderError(BridgeError):
    """Transport failure or non-retryable provider status."""


class BridgeProtocolError(BridgeError):
    """The provider body did not have the expected shape."""


class ExtractionError(BridgeError):
    """Structured extraction failed after the single re-ask."""

    def __init__(self, message: str, raw_content: str | None = None):
        super().__init__(message)
        self.raw_content = raw_content


class ToolLoopError(BridgeError):
    """The tool-call loop failed; carries the transcript for audit."""

    def __init__(self, message: str, transcript: list):
        super().__init__(message)
        self.transcript = transcript


@dataclass(frozen=True)
class ToolCall:
    id: str
    name: str
    arguments: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("tool call id must be non-empty")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str | None = None
    tool_calls: tuple = ()
    tool_call_id: str | None = None

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "tool" and not self.tool_call_id:
            raise ValueError("tool messages need a tool_call_id")
        object.__setattr__(self, "tool_calls", tuple(self.tool_calls))

    def to_wire(self) -> dict:
        msg = {"role": self.role, "content": self.content}
        if self.tool_calls:
            msg["tool_calls"] = [
                {"id": c.id, "type": "function",
                 "function": {"name": c.name, "arguments": c.arguments}}
                for c in self.tool_calls]
        if self.tool_call_id:
            msg["tool_call_id"] = self.tool_call_id
        return msg


def system(text: str) -> ChatMessage:
    return ChatMessage("system", text)


def user(text: str) -> ChatMessage:
    return ChatMessage("user", text)


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    parameters: dict           # property name -> {"type", "description"}
    required: tuple = ()

    def __post_init__(self):
        for prop, schema in self.parameters.items():
            if schema.get("type") not in _SCHEMA_TYPES:
                raise ValueError(
                    f"property {prop} has unsupported type {schema.get('type')!r}")

    def to_wire(self) -> dict:
        return {
            "type": "function",
            "function": {
                "name": self.name,
                "description": self.description,
                "parameters": {
                    "type": "object",
                    "properties": self.parameters,
                    "required": list(self.required),
                },
            },
        }


@dataclass
class ProviderConfig:
    endpoint: str = ""
    model: str = "scripted"
    credential_env: str = "HELIOS_LLM_API_KEY"
    temperature: float = 0.0
    timeout: float = 30.0
    max_requests: int = 100
    max_tokens: int = 200_000
    max_retries: int = 3
    backoff_base: float = 0.5
    rate_limit_requests: int = 0        # 0 disables throttling
    rate_limit_interval_s: float = 1.0
    script: str | None = None           # path to a scripted-provider file


class _HttpTransport:
    def send(self, config: ProviderConfig, payload: dict) -> tuple:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(config.credential_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = requests.post(config.endpoint, json=payload,
                                 headers=headers, timeout=config.timeout)
        except requests.RequestException as e:
            raise ProviderError(f"provider unreachable: {e}") from e
        try:
            body = resp.json()
        except ValueError:
            body = {}
        return resp.status_code, body


class ScriptedTransport:
    """Replays a fixed list of responses; the offline stand-in for a provider.

    Script files are YAML with ``schema: helios-llm-script/1`` and an
    ``entries`` list.  Each entry is either ``{status: <code>}`` (an error
    response such as a 429) or an assistant turn with ``content`` and/or
    ``tool_calls: [{name, arguments}]``.
    """

    def __init__(self, entries: list):
        self.entries = list(entries)
        self._cursor = 0
        self._call_counter = 0

    @classmethod
    def from_file(cls, path) -> "ScriptedTransport":
        with open(path) as f:
            doc = yaml.safe_load(f)
        if not isinstance(doc, dict) or doc.get("schema") != SCRIPT_SCHEMA:
            raise ValueError(f"{path} is not a {SCRIPT_SCHEMA} document")
        return cls(doc.get("entries") or [])

    def send(self, config: ProviderConfig, payload: dict) -> tuple:
        if self._cursor >= len(self.entries):
            raise ProviderError("provider script exhausted")
        entry = self.entries[self._cursor]
        self._cursor += 1

        status = int(entry.get("status", 200))
        if status != 200:
            return status, {"error": entry.get("error", f"scripted {status}")}

        message = {"role": "assistant", "content": entry.get("content")}
        if entry.get("tool_calls"):
            calls = []
            for call in entry["tool_calls"]:
                arguments = call.get("arguments", "{}")
                if not isinstance(arguments, str):
                    arguments = json.dumps(arguments)
                calls.append({
                    "id": call.get("id", f"call_{self._call_counter}"),
                    "type": "function",
                    "function": {"name": call["name"], "arguments": arguments},
                })
                self._call_counter += 1
            message["tool_calls"] = calls

        content = message.get("content") or ""
        usage = {"total_tokens": len(content) // 4 + 1}
        return 200, {"choices": [{"message": message}], "usage": usage}


@dataclass
class ProviderSession:
    """One conversation-scope provider handle with its own budget."""

    config: ProviderConfig
    transport: object = None
    requests_used: int = 0
    tokens_used: int = 0
    _recent: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.transport is None:
            if self.config.script:
                self.transport = ScriptedTransport.from_file(self.config.script)
            else:
                self.transport = _HttpTransport()

    def _check_budget(self):
        if self.requests_used >= self.config.max_requests:
            raise BudgetError(
                f"request budget exhausted ({self.config.max_requests})")
        if self.tokens_used >= self.config.max_tokens:
            raise BudgetError(
                f"token budget exhausted ({self.config.max_tokens})")

    def _throttle(self):
        limit = self.config.rate_limit_requests
        if limit <= 0:
            return
        interval = self.config.rate_limit_interval_s
        now = time.monotonic()
        while self._recent and now - self._recent[0] > interval:
            self._recent.popleft()
        if len(self._recent) >= limit:
            time.sleep(self._recent[0] + interval - now)
        self._recent.append(time.monotonic())


def session_from_script(path, **config_kwargs) -> ProviderSession:
    return ProviderSession(ProviderConfig(script=str(path), **config_kwargs))


def _parse_assistant(body: dict) -> ChatMessage:
    try:
        message = body["choices"][0]["message"]
    except (KeyError, IndexError, TypeError) as e:
        raise BridgeProtocolError(f"malformed provider body: {body!r}") from e
    calls = []
    for c in message.get("tool_calls") or ():
        try:
            calls.append(ToolCall(c["id"], c["function"]["name"],
                                  c["function"]["arguments"]))
        except (KeyError, TypeError) as e:
            raise BridgeProtocolError(f"malformed tool call: {c!r}") from e
    return ChatMessage("assistant", message.get("content"), tuple(calls))


def complete(session: ProviderSession, messages, tools=None,
             response_format=None) -> ChatMessage:
    """One chat completion through the session's transport.

    Checks the budget before any request goes out, counts every attempt
    against it, and backs off exponentially on provider rate limits.
    """
    messages = list(messages)
    if not messages:
        raise ValueError("messages must be non-empty")

    payload = {
        "model": session.config.model,
        "messages": [m.to_wire() for m in messages],
        "temperature": session.config.temperature,
    }
    if tools:
        payload["tools"] = [t.to_wire() for t in tools]
        payload["tool_choice"] = "auto"
    if response_format:
        payload["response_format"] = response_format

    for attempt in range(session.config.max_retries + 1):
        session._check_budget()
        session._throttle()
        status, body = session.transport.send(session.config, payload)
        session.requests_used += 1
        usage = body.get("usage") if isinstance(body, dict) else None
        if isinstance(usage, dict):
            session.tokens_used += int(usage.get("total_tokens", 0))

        if status == 429 and attempt < session.config.max_retries:
            time.sleep(session.config.backoff_base * (2 ** attempt))
            continue
        if status != 200:
            raise ProviderError(f"provider returned status {status}: {body}")
        return _parse_assistant(body)

    raise ProviderError("provider kept rate-limiting after all retries")


_SELECT_SYSTEM_TEMPLATE = (
    "You are an expert lab assistant. Select the single best instrument for "
    "the user's need and briefly say why it fits.\n\n"
    "The following instruments are available:\n{catalog}")


def build_selection_prompt(catalog) -> str:
    if not catalog:
        raise ValueError("instrument catalog is empty")
    listing = "\n".join(f"{name}: {description}" for name, description in catalog)
    return _SELECT_SYSTEM_TEMPLATE.format(catalog=listing)


def select_instrument(catalog, need: str, session: ProviderSession) -> str:
    """Recommend an instrument for a plain-language need."""
    if not need or not need.strip():
        raise ValueError("need text must be non-empty")
    messages = [system(build_selection_prompt(catalog)), user(need)]
    return complete(session, messages).content


_EXTRACT_SYSTEM = (
    "Extract the R, G and B channel settings from the user's message and "
    'answer in JSON with exactly this structure: {"R": <number>, '
    '"G": <number>, "B": <number>}. Use 0.0 for any channel the message '
    "does not mention. Answer with the JSON object only, no other text.")


def _parse_rgb(content: str) -> RgbSetting:
    try:
        obj = json.loads(content or "")
    except json.JSONDecodeError as e:
        raise ValueError(f"not valid JSON: {e}") from e
    if not isinstance(obj, dict):
        raise ValueError("expected a JSON object")
    values = {}
    for key in ("R", "G", "B"):
        v = obj.get(key, 0.0)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError(f"field {key} is not a number: {v!r}")
        values[key] = float(v)
    return RgbSetting(values["R"], values["G"], values["B"])


def extract_rgb(prompt: str, session: ProviderSession) -> RgbSetting:
    """Pull R/G/B settings out of free text; missing channels become 0.0
    and values clamp into [0, 1].  One validation re-ask, then fail."""
    messages = [system(_EXTRACT_SYSTEM), user(prompt)]
    reply = complete(session, messages,
                     response_format={"type": "json_object"})
    try:
        return _parse_rgb(reply.content)
    except ValueError as first_error:
        messages.extend([
            reply,
            user(f"That was not valid ({first_error}). "
                 "Answer again with only the JSON object."),
        ])
        retry = complete(session, messages,
                         response_format={"type": "json_object"})
        try:
            return _parse_rgb(retry.content)
        except ValueError as e:
            raise ExtractionError(
                f"extraction failed after re-ask: {e}",
                raw_content=retry.content) from e


def build_tool_spec(kind) -> ToolSpec:
    """Function-calling spec for an instrument; every input is optional and
    defaults to 0.0."""
    colors = {"R": "red", "G": "green", "B": "blue"}
    properties = {
        name: {"type": "number",
               "description": f"The {colors[name]} channel setting (0 to 1)"}
        for name in kind.inputs}
    return ToolSpec(kind.name, kind.description, properties, required=())


def _parse_tool_arguments(raw: str, spec: ToolSpec | None) -> dict:
    obj = json.loads(raw or "{}")
    if not isinstance(obj, dict):
        raise ValueError("tool arguments must be a JSON object")
    if spec is not None:
        for name, schema in spec.parameters.items():
            if schema.get("type") == "number":
                obj.setdefault(name, 0.0)
    return obj


def tool_call_loop(messages, registry: dict, specs, session: ProviderSession,
                   max_rounds: int = 4) -> tuple:
    """Run the function-calling protocol to completion.

    Each round sends the transcript; if the assistant names tools they are
    executed through the whitelisted registry and their stringified results
    appended as tool messages.  Ends when the assistant answers in plain
    text.  Returns (final message, full transcript).
    """
    specs = list(specs)
    spec_by_name = {s.name: s for s in specs}
    for name in spec_by_name:
        if name not in registry:
            raise ValueError(f"tool spec {name} has no registry entry")

    transcript = list(messages)
    for _ in range(max_rounds):
        reply = complete(session, transcript, tools=specs)
        transcript.append(reply)
        if not reply.tool_calls:
            return reply, transcript
        for call in reply.tool_calls:
            if call.name not in registry:
                raise ToolLoopError(
                    f"assistant called unknown tool {call.name!r}", transcript)
            try:
                kwargs = _parse_tool_arguments(
                    call.arguments, spec_by_name.get(call.name))
            except (ValueError, json.JSONDecodeError) as e:
                result_text = f"error: could not parse arguments: {e}"
            else:
                result_text = str(registry[call.name](**kwargs))
            transcript.append(
                ChatMessage("tool", result_text, tool_call_id=call.id))
    raise ToolLoopError(f"no final answer after {max_rounds} rounds", transcript)


@dataclass(frozen=True)
class CodeExtraction:
    """Generated code plus its provenance.  The bridge never executes it."""

    code: str
    prompt: str
    model: str
    timestamp: str


def extract_code(prompt: str, session: ProviderSession) -> CodeExtraction:
    """Request code as a structured response and return it UNEXECUTED.

    The assistant must answer with ``{"code": <text>}``; anything else is
    an extraction error.  No process is spawned and nothing is written to
    disk here; callers decide what to do with the text.
    """
    reply = complete(session, [user(prompt)],
                     response_format={"type": "json_object"})
    try:
        obj = json.loads(reply.content or "")
    except json.JSONDecodeError as e:
        raise ExtractionError(f"assistant did not return JSON: {e}",
                              raw_content=reply.content) from e
    if not isinstance(obj, dict) or not isinstance(obj.get("code"), str):
        raise ExtractionError('response is missing a string "code" field',
                              raw_content=reply.content)
    return CodeExtraction(obj["code"], prompt, session.config.model,
                          datetime.now(timezone.utc).isoformat())


def export_transcript(messages, path) -> None:
    """Write a transcript as newline-delimited JSON messages."""
    with open(path, "w") as f:
        for m in messages:
            f.write(json.dumps(m.to_wire()) + "\n")

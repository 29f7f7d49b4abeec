"""Prompt templates, chat-completion transports and response parsers."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Protocol

from .errors import (
    CommentParseError, MockMissError, RenameParseError, TemplateError, TransportError,
    VerdictParseError,
)
from .transcriber import sanitize_identifier

log = logging.getLogger(__name__)

TEMPLATE_NAMES = ("orchestration", "evaluator", "comment", "plan", "query",
                  "expansion", "refine", "rename")
_PLACEHOLDER = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


# -- templates ---------------------------------------------------------------


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def placeholders(self) -> list[str]:
        return list(dict.fromkeys(_PLACEHOLDER.findall(self.body)))

    def render(self, **bindings: Any) -> str:
        return render(self, bindings)


@lru_cache(maxsize=None)
def load_template(name: str) -> PromptTemplate:
    if name not in TEMPLATE_NAMES:
        raise KeyError(f"no template named {name!r}")
    body = resources.files("flowforge").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")
    return PromptTemplate(name, body)


def render(t: PromptTemplate | str, bindings: Mapping[str, Any]) -> str:
    """Substitute ``{placeholder}`` spans; values are inserted verbatim."""
    if isinstance(t, str):
        t = load_template(t)
    for ph in t.placeholders:
        if ph not in bindings:
            raise TemplateError(ph)
    return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), t.body)


# -- chat types --------------------------------------------------------------

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model: str = "gpt-4o-mini"
    temperature: float = 0.0
    max_tokens: int | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for m in self.messages:
            if m.role not in ROLES:
                raise ValueError(f"unknown role {m.role!r}")

    @classmethod
    def user(cls, content: str, **kw) -> "ChatRequest":
        return cls((Message("user", content),), **kw)

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.content for m in self.messages)

    def payload(self) -> dict:
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "temperature": self.temperature,
        }
        if self.max_tokens is not None:
            body["max_tokens"] = self.max_tokens
        return body


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str | None = None
    usage: dict = field(default_factory=dict)


class Transport(Protocol):
    def send(self, request: ChatRequest) -> ChatResponse: ...


class RetryableError(TransportError):
    """A failure worth retrying (rate limit, server error, dropped connection)."""

    def __init__(self, message: str, status: int | None = None, retry_after: float | None = None):
        super().__init__(message, status)
        self.retry_after = retry_after


def _is_retryable_status(status: int) -> bool:
    return status in (408, 409, 425, 429) or status >= 500


class HttpTransport:
    """POSTs to an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(self, base_url: str, api_key: str | None = None, timeout: float = 60.0,
                 client=None):
        import httpx

        self.url = base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._httpx = httpx
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def send(self, request: ChatRequest) -> ChatResponse:
        httpx = self._httpx
        try:
            resp = self._client.post(self.url, json=request.payload())
        except httpx.TransportError as exc:
            raise RetryableError(f"connection failed: {exc}") from exc
        if resp.status_code >= 400:
            message = f"HTTP {resp.status_code} from {self.url}: {resp.text[:200]}"
            if _is_retryable_status(resp.status_code):
                retry_after = resp.headers.get("retry-after")
                try:
                    delay = float(retry_after) if retry_after is not None else None
                except ValueError:
                    delay = None
                raise RetryableError(message, resp.status_code, delay)
            raise TransportError(message, resp.status_code)
        try:
            data = resp.json()
            choice = data["choices"][0]
            content = choice["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion body: {exc}", resp.status_code) from exc
        return ChatResponse(content, choice.get("finish_reason"), data.get("usage") or {})

    def close(self) -> None:
        self._client.close()


class MockTransport:
    """Canned responses keyed by a prompt substring or the prompt's SHA-256.

    Entries are tried in order; the first whose ``prompt_contains`` occurs in
    the prompt (or whose ``prompt_sha256`` equals its hash) wins.
    """

    def __init__(self, entries: Iterable[Mapping[str, str]]):
        self.entries = [dict(e) for e in entries]
        for e in self.entries:
            if "response" not in e or not ({"prompt_contains", "prompt_sha256"} & e.keys()):
                raise ValueError("mock entries need 'response' and 'prompt_contains' or 'prompt_sha256'")
        self.calls: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockTransport":
        entries = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(entries, list):
            raise ValueError("mock file must hold a JSON array")
        return cls(entries)

    def send(self, request: ChatRequest) -> ChatResponse:
        prompt = request.prompt_text
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        with self._lock:
            self.calls.append(request)
        for e in self.entries:
            if e.get("prompt_sha256") == digest or \
                    ("prompt_contains" in e and e["prompt_contains"] in prompt):
                return ChatResponse(e["response"], "stop", {})
        raise MockMissError(f"no canned response for prompt starting {prompt[:60]!r}")


# -- gateway -----------------------------------------------------------------


@dataclass
class GatewayConfig:
    base_url: str = "https://api.openai.com/v1"
    model: str = "gpt-4o-mini"
    api_key_env: str = "OPENAI_API_KEY"
    max_in_flight: int = 4
    max_retries: int = 5
    backoff_base: float = 0.5
    backoff_cap: float = 20.0
    min_interval: float = 0.0
    temperature: float = 0.0
    max_tokens: int | None = None
    timeout: float = 60.0

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "GatewayConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


class Gateway:
    """Bounded, rate-limited, retrying front end over a transport."""

    def __init__(self, transport: Transport, config: GatewayConfig | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.transport = transport
        self.config = config or GatewayConfig()
        self._slots = threading.BoundedSemaphore(max(1, self.config.max_in_flight))
        self._rate_lock = threading.Lock()
        self._last_start = float("-inf")
        self._sleep = sleep

    @classmethod
    def from_config(cls, config: GatewayConfig, mock: str | Path | None = None) -> "Gateway":
        if mock is not None:
            return cls(MockTransport.from_file(mock), config)
        key = os.environ.get(config.api_key_env)
        return cls(HttpTransport(config.base_url, key, config.timeout), config)

    def _pace(self) -> None:
        if self.config.min_interval <= 0:
            return
        with self._rate_lock:
            wait = self._last_start + self.config.min_interval - time.monotonic()
            if wait > 0:
                self._sleep(wait)
            self._last_start = time.monotonic()

    def chat(self, request: ChatRequest) -> ChatResponse:
        cfg = self.config
        attempt = 0
        with self._slots:
            while True:
                self._pace()
                try:
                    return self.transport.send(request)
                except RetryableError as exc:
                    attempt += 1
                    if attempt > cfg.max_retries:
                        raise TransportError(f"giving up after {attempt} attempts: {exc}",
                                             exc.status) from exc
                    delay = min(cfg.backoff_cap, cfg.backoff_base * 2 ** (attempt - 1))
                    if exc.retry_after is not None:
                        delay = min(cfg.backoff_cap, max(delay, exc.retry_after))
                    log.warning("retrying after %s (attempt %d, waiting %.2fs)", exc, attempt, delay)
                    self._sleep(delay)

    def ask(self, prompt: str, temperature: float | None = None) -> str:
        req = ChatRequest.user(prompt, model=self.config.model,
                               temperature=self.config.temperature if temperature is None else temperature,
                               max_tokens=self.config.max_tokens)
        return self.chat(req).content


def chat(request: ChatRequest, transport: Transport, config: GatewayConfig | None = None,
         sleep: Callable[[float], None] = time.sleep) -> ChatResponse:
    return Gateway(transport, config, sleep).chat(request)


# -- response parsing ----------------------------------------------------------

_TRUTH = re.compile(r"(?<![A-Za-z0-9_])(true|false)(?![A-Za-z0-9_])", re.I)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    rationale: str


def parse_verdict(response: str) -> Verdict:
    """First standalone ``true``/``false`` token decides, case-insensitively."""
    m = _TRUTH.search(response)
    if m is None:
        raise VerdictParseError(f"no True/False in evaluator response {response[:80]!r}")
    return Verdict(m.group(1).lower() == "true", response)


_JSON_FENCE = re.compile(r"```[ \t]*(json)?[ \t]*\n?(.*?)```", re.S | re.I)


def extract_json(text: str) -> Any:
    """Pull a JSON value out of a response: fenced block first, then raw text.

    Raises ``ValueError`` when nothing parses.
    """
    fenced = list(_JSON_FENCE.finditer(text))
    for m in sorted(fenced, key=lambda m: m.group(1) is None):
        try:
            return json.loads(m.group(2))
        except json.JSONDecodeError:
            continue
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "{[":
            try:
                value, _ = decoder.raw_decode(text, i)
                return value
            except json.JSONDecodeError:
                continue
    raise ValueError("no JSON found in response")


def number_lines(code: str) -> dict[str, str]:
    """Non-blank lines keyed ``"line N"`` (1-based over non-blank lines)."""
    lines = [l for l in code.splitlines() if l.strip()]
    return {f"line {i}": l for i, l in enumerate(lines, 1)}


def parse_comment_map(response: str, expected: Iterable[str] | None = None
                      ) -> tuple[dict[str, str], list[str]]:
    """Parse a ``{"line N": description}`` object.

    Returns the map and the expected keys it does not cover.
    """
    try:
        data = extract_json(response)
    except ValueError:
        raise CommentParseError("no JSON object in comment response") from None
    if not isinstance(data, dict):
        raise CommentParseError("comment response is not a JSON object")
    comments = {str(k): str(v) for k, v in data.items() if re.fullmatch(r"line \d+", str(k))}
    missing = [k for k in (expected or []) if k not in comments]
    if missing:
        log.warning("comment response misses %d line(s): %s", len(missing), ", ".join(missing))
    return comments, missing


def parse_rename_map(response: str) -> dict[str, str]:
    try:
        data = extract_json(response)
    except ValueError:
        raise RenameParseError("no JSON object in rename response") from None
    if not isinstance(data, dict):
        raise RenameParseError("rename response is not a JSON object")
    return {str(k): sanitize_identifier(str(v)) for k, v in data.items()}


def interleave_comments(code: str, comments: Mapping[str, str]) -> str:
    """Put each ``"line N"`` description as a ``#`` comment above that line."""
    out = []
    n = 0
    for line in code.splitlines():
        if line.strip():
            n += 1
            text = comments.get(f"line {n}")
            if text:
                indent = line[: len(line) - len(line.lstrip())]
                for piece in str(text).splitlines() or [""]:
                    out.append(f"{indent}# {piece}".rstrip())
        out.append(line)
    return "".join(l + "\n" for l in out)


def parse_refinement(response: str) -> tuple[str, str]:
    """(plan, code) from a refinement response; raises ``ValueError`` if absent."""
    data = extract_json(response)
    if not isinstance(data, dict):
        raise ValueError("refinement response is not a JSON object")
    plan = next((data[k] for k in ("plan", "thought", "task_plan") if isinstance(data.get(k), str)), None)
    code = data.get("code")
    if not isinstance(code, str) or plan is None:
        raise ValueError("refinement response needs string 'plan' and 'code' fields")
    return plan, code

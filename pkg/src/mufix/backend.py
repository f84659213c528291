"""Chat backends: live HTTP, scripted oracles, and trace replay.

All model traffic flows through one interface so a run can be recorded once
and replayed byte-for-byte later. Calls are scoped (one scope per problem
sample) and ordered within their scope; the (scope, ordinal, digest) triple
is what replay matches on. Digests cover role/content pairs only, so
sampling parameters may differ between record and replay.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from collections import Counter
from dataclasses import dataclass, field

import requests

from .errors import BackendError, FormatError, IoError, ReplayMismatch, ScriptExhausted

API_KEY_ENV = "MUFIX_API_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


def request_digest(messages: list[dict]) -> str:
    """Stable hash of the conversation text; parameters are excluded."""
    canonical = json.dumps(
        [[m.get("role", ""), m.get("content", "")] for m in messages],
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ChatBackend:
    """Interface: chat() plus scoped() views used by the pipeline."""

    def chat(
        self,
        messages: list[dict],
        *,
        scope: str = "",
        kind: str = "generic",
        params: dict | None = None,
    ) -> ChatResponse:
        raise NotImplementedError

    def scoped(self, scope: str, tracker: "CallTracker | None" = None) -> "ScopedChat":
        return ScopedChat(self, scope, tracker)


class ScopedChat:
    """A backend view bound to one scope, optionally counting calls."""

    def __init__(self, backend: ChatBackend, scope: str, tracker: "CallTracker | None" = None):
        self.backend = backend
        self.scope = scope
        self.tracker = tracker
        self.calls = 0

    def chat(self, messages: list[dict], *, kind: str = "generic", params: dict | None = None) -> ChatResponse:
        response = self.backend.chat(messages, scope=self.scope, kind=kind, params=params)
        self.calls += 1
        if self.tracker is not None:
            self.tracker.note(kind, response)
        return response

    @property
    def last_trace_id(self) -> str:
        """Identifier of the most recent call: scope plus its ordinal."""
        return f"{self.scope}:{self.calls - 1}"


class CallTracker:
    """Counts chat calls by kind and accumulates token usage."""

    def __init__(self):
        self.by_kind: Counter[str] = Counter()
        self.prompt_tokens = 0
        self.completion_tokens = 0

    def note(self, kind: str, response: ChatResponse) -> None:
        self.by_kind[kind] += 1
        self.prompt_tokens += response.prompt_tokens
        self.completion_tokens += response.completion_tokens

    @property
    def total_calls(self) -> int:
        return sum(self.by_kind.values())


class HttpBackend(ChatBackend):
    """OpenAI-compatible chat-completions client with bounded retries."""

    def __init__(
        self,
        base_url: str = DEFAULT_BASE_URL,
        model: str = "gpt-3.5-turbo",
        api_key: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        session: requests.Session | None = None,
    ):
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        if not key:
            raise BackendError(f"no API key: set {API_KEY_ENV} or pass api_key")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._session = session or requests.Session()
        self._headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def chat(self, messages, *, scope="", kind="generic", params=None) -> ChatResponse:
        payload = {"model": self.model, "messages": messages}
        payload.update(params or {})
        url = f"{self.base_url}/chat/completions"
        last_error = ""
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(url, json=payload, headers=self._headers, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = f"network error: {exc}"
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {resp.status_code}: {resp.text[:200]}"
                continue
            if resp.status_code != 200:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:500]}")
            return self._parse(resp)
        raise BackendError(f"gave up after {self.max_retries + 1} attempts; last: {last_error}")

    @staticmethod
    def _parse(resp: requests.Response) -> ChatResponse:
        try:
            body = resp.json()
            content = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}")
        usage = body.get("usage") or {}
        return ChatResponse(
            content=content or "",
            prompt_tokens=int(usage.get("prompt_tokens", 0) or 0),
            completion_tokens=int(usage.get("completion_tokens", 0) or 0),
        )


ScriptEntry = "str | callable"


class ScriptedBackend(ChatBackend):
    """Deterministic backend fed from a prepared response script.

    The script is either a flat list consumed in global call order, or a
    dict mapping scope to its own list. Entries are strings or callables
    taking (messages, params) and returning the response text.
    """

    def __init__(self, script):
        self._lock = threading.Lock()
        if isinstance(script, dict):
            self._scoped = {k: list(v) for k, v in script.items()}
            self._flat = None
        else:
            self._scoped = None
            self._flat = list(script)
        self._cursors: Counter[str] = Counter()
        self._flat_cursor = 0

    def chat(self, messages, *, scope="", kind="generic", params=None) -> ChatResponse:
        with self._lock:
            if self._scoped is not None:
                queue = self._scoped.get(scope)
                ordinal = self._cursors[scope]
                if queue is None or ordinal >= len(queue):
                    raise ScriptExhausted(f"scope {scope!r}: no scripted response for call #{ordinal}")
                self._cursors[scope] += 1
                entry = queue[ordinal]
            else:
                if self._flat_cursor >= len(self._flat):
                    raise ScriptExhausted(f"global script exhausted at call #{self._flat_cursor}")
                entry = self._flat[self._flat_cursor]
                self._flat_cursor += 1
        content = entry(messages, params) if callable(entry) else entry
        return ChatResponse(content=str(content))


@dataclass(frozen=True)
class TraceEntry:
    """One recorded chat call; JSONL row in trace.jsonl."""

    scope: str
    ordinal: int
    kind: str
    digest: str
    messages: tuple
    content: str
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def to_json(self) -> str:
        return json.dumps(
            {
                "scope": self.scope,
                "ordinal": self.ordinal,
                "kind": self.kind,
                "digest": self.digest,
                "messages": list(self.messages),
                "content": self.content,
                "prompt_tokens": self.prompt_tokens,
                "completion_tokens": self.completion_tokens,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "TraceEntry":
        try:
            raw = json.loads(line)
            return cls(
                scope=raw["scope"],
                ordinal=int(raw["ordinal"]),
                kind=raw.get("kind", "generic"),
                digest=raw["digest"],
                messages=tuple(raw["messages"]),
                content=raw["content"],
                prompt_tokens=int(raw.get("prompt_tokens", 0)),
                completion_tokens=int(raw.get("completion_tokens", 0)),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"bad trace entry: {exc}")


class TraceWriter:
    """Serialized JSONL appender; safe to share across worker threads."""

    def __init__(self, path: str):
        self.path = path
        self._lock = threading.Lock()
        self._fh = open(path, "a", encoding="utf-8")

    def write(self, entry: TraceEntry) -> None:
        with self._lock:
            self._fh.write(entry.to_json() + "\n")
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class RecordingBackend(ChatBackend):
    """Wraps another backend, appending each exchange to a trace file.

    Request headers and keys are never written; a trace holds only message
    text, responses, and usage counts.
    """

    def __init__(self, inner: ChatBackend, writer: TraceWriter):
        self.inner = inner
        self.writer = writer
        self._lock = threading.Lock()
        self._ordinals: Counter[str] = Counter()

    def chat(self, messages, *, scope="", kind="generic", params=None) -> ChatResponse:
        response = self.inner.chat(messages, scope=scope, kind=kind, params=params)
        with self._lock:
            ordinal = self._ordinals[scope]
            self._ordinals[scope] += 1
        self.writer.write(
            TraceEntry(
                scope=scope,
                ordinal=ordinal,
                kind=kind,
                digest=request_digest(messages),
                messages=tuple(dict(m) for m in messages),
                content=response.content,
                prompt_tokens=response.prompt_tokens,
                completion_tokens=response.completion_tokens,
            )
        )
        return response


def load_trace(path: str) -> list[TraceEntry]:
    if not os.path.isfile(path):
        raise IoError(f"trace file not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(TraceEntry.from_json(line))
    return entries


class ReplayBackend(ChatBackend):
    """Serves recorded responses back, in per-scope ordinal order.

    Each call must match the recorded digest for its (scope, ordinal) slot;
    a text divergence or an extra call raises ReplayMismatch naming both.
    """

    def __init__(self, entries: list[TraceEntry]):
        groups: dict[str, dict[int, TraceEntry]] = {}
        for entry in entries:
            groups.setdefault(entry.scope, {})[entry.ordinal] = entry
        self._groups = groups
        self._lock = threading.Lock()
        self._cursors: Counter[str] = Counter()

    @classmethod
    def from_file(cls, path: str) -> "ReplayBackend":
        return cls(load_trace(path))

    def chat(self, messages, *, scope="", kind="generic", params=None) -> ChatResponse:
        with self._lock:
            ordinal = self._cursors[scope]
            self._cursors[scope] += 1
        entry = self._groups.get(scope, {}).get(ordinal)
        if entry is None:
            raise ReplayMismatch(f"scope {scope!r}: no recorded call at ordinal {ordinal}")
        digest = request_digest(messages)
        if digest != entry.digest:
            raise ReplayMismatch(
                f"scope {scope!r} ordinal {ordinal}: request digest {digest[:12]} "
                f"does not match recorded {entry.digest[:12]}"
            )
        return ChatResponse(
            content=entry.content,
            prompt_tokens=entry.prompt_tokens,
            completion_tokens=entry.completion_tokens,
        )


def load_script(path: str):
    """Read a scripted-backend JSON file: a list or a scope-to-list dict."""
    if not os.path.isfile(path):
        raise IoError(f"script file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})")
    if isinstance(data, list) and all(isinstance(x, str) for x in data):
        return data
    if isinstance(data, dict) and all(
        isinstance(v, list) and all(isinstance(x, str) for x in v) for v in data.values()
    ):
        return data
    raise FormatError(f"{path}: script must be a list of strings or a scope-to-list object")

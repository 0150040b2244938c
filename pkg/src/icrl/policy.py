"""Text-generation backends: an OpenAI-compatible HTTP client and scripted policies."""

from __future__ import annotations

import difflib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import requests

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_MAX_RETRIES = 5
RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})

_CONTEXT_OVERFLOW_MARKERS = ("context_length", "maximum context", "context window", "too many tokens")


class BackendError(RuntimeError):
    """The backend could not produce a response (retries exhausted or fatal)."""


class ContextOverflowError(BackendError):
    """The prompt exceeds the backend's context limit; caller may evict and retry."""


class ScriptError(RuntimeError):
    """A scripted policy had no entry for a request, or an expectation failed."""


@dataclass
class GenRequest:
    user_text: str
    system_text: str | None = None
    temperature: float = 1.0
    max_output_tokens: int = 2048
    stop_sequences: tuple[str, ...] = ()
    backend_id: str = "policy"
    tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be nonempty")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass
class GenResponse:
    text: str
    tokens_in: int = 0
    tokens_out: int = 0
    finish_reason: str = "stop"  # stop | length | error


class RateLimiter:
    """Process-wide minimum spacing between calls (requests per minute)."""

    def __init__(self, requests_per_minute: int) -> None:
        if requests_per_minute < 1:
            raise ValueError("requests_per_minute must be >= 1")
        self._interval = 60.0 / requests_per_minute
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self, now: Callable[[], float] = time.monotonic,
                sleep: Callable[[float], None] = time.sleep) -> None:
        with self._lock:
            wait = self._next_at - now()
            self._next_at = max(self._next_at, now()) + self._interval
        if wait > 0:
            sleep(wait)


class HttpChatBackend:
    """Chat-completions client: single system + single user message per call.

    Transient failures (HTTP 429/5xx, timeouts, connection errors) are
    retried with exponential backoff up to ``max_retries``. Context-length
    rejections raise ContextOverflowError so the episode loop can evict old
    attempts and retry.
    """

    deterministic = False

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "ICRL_API_KEY",
        timeout_s: float = DEFAULT_TIMEOUT_S,
        max_retries: int = DEFAULT_MAX_RETRIES,
        rate_limiter: RateLimiter | None = None,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
        backoff_base_s: float = 0.5,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.model = model
        api_key = os.environ.get(api_key_env) or os.environ.get("OPENAI_API_KEY")
        if not api_key:
            raise BackendError(
                f"no API key: set {api_key_env} (or OPENAI_API_KEY) in the environment"
            )
        self._api_key = api_key
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.rate_limiter = rate_limiter
        self._session = session or requests.Session()
        self._sleep = sleep
        self._backoff_base_s = backoff_base_s

    def generate(self, request: GenRequest) -> GenResponse:
        url = f"{self.base_url}/chat/completions"
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload: dict = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.stop_sequences:
            payload["stop"] = list(request.stop_sequences)
        headers = {"Authorization": f"Bearer {self._api_key}"}

        last_error = "unknown"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self._backoff_base_s * (2 ** (attempt - 1)))
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            try:
                response = self._session.post(url, json=payload, headers=headers,
                                              timeout=self.timeout_s)
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if response.status_code == 200:
                return self._parse_success(response)
            body = response.text[:300]
            if response.status_code in RETRYABLE_STATUS:
                last_error = f"HTTP {response.status_code}: {body}"
                continue
            if response.status_code == 400 and any(
                marker in body.lower() for marker in _CONTEXT_OVERFLOW_MARKERS
            ):
                raise ContextOverflowError(f"context length rejected: {body}")
            raise BackendError(f"HTTP {response.status_code}: {body}")
        raise BackendError(f"retries exhausted after {self.max_retries + 1} attempts: {last_error}")

    @staticmethod
    def _parse_success(response: requests.Response) -> GenResponse:
        try:
            data = response.json()
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
            usage = data.get("usage", {})
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion payload: {exc}") from exc
        finish = choice.get("finish_reason", "stop")
        if finish not in ("stop", "length"):
            finish = "error"
        return GenResponse(
            text=text,
            tokens_in=int(usage.get("prompt_tokens", 0)),
            tokens_out=int(usage.get("completion_tokens", 0)),
            finish_reason=finish,
        )


def estimate_tokens(text: str) -> int:
    """Deterministic stand-in for backend token accounting (about 4 chars/token)."""
    return max(1, len(text) // 4)


@dataclass
class ScriptEntry:
    """One canned response, matched by tags and/or a prompt predicate.

    ``problem_id``/``episode``/``role`` of None match anything. Entries are
    consumed once unless ``sticky``. ``expect_contains`` and ``expect_exact``
    turn golden-prompt checks into end-to-end failures with a char-level diff.
    """

    text: str
    problem_id: str | None = None
    episode: int | None = None
    role: str | None = None
    when: Callable[[str], bool] | None = None
    expect_contains: tuple[str, ...] = ()
    expect_exact: str | None = None
    sticky: bool = False


def _char_diff(expected: str, actual: str) -> str:
    limit = min(len(expected), len(actual))
    index = next((i for i in range(limit) if expected[i] != actual[i]), limit)
    window = 60
    context = (
        f"first difference at char {index}\n"
        f"expected[{max(0, index - window)}:{index + window}]: "
        f"{expected[max(0, index - window):index + window]!r}\n"
        f"actual[{max(0, index - window)}:{index + window}]:   "
        f"{actual[max(0, index - window):index + window]!r}"
    )
    unified = "\n".join(
        difflib.unified_diff(expected.splitlines(), actual.splitlines(),
                             fromfile="expected", tofile="actual", lineterm="")
    )
    return f"{context}\n{unified}"


class ScriptedPolicy:
    """Deterministic offline backend driven by a fixed script.

    Lookup is total over the configured run: a request with no matching
    entry raises ScriptError instead of falling back silently.
    """

    deterministic = True

    def __init__(self, entries: Sequence[ScriptEntry]) -> None:
        self._entries = list(entries)
        self._consumed: set[int] = set()

    @classmethod
    def from_file(cls, path: str) -> "ScriptedPolicy":
        """Load canned responses keyed by problem and episode from JSON.

        Format: ``{"entries": [{"problem_id": ..., "episode": ..., "text": ...,
        "role": ..., "expect_contains": [...], "sticky": ...}, ...]}``.
        """
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
        entries = []
        for raw in data["entries"]:
            entries.append(ScriptEntry(
                text=raw["text"],
                problem_id=raw.get("problem_id"),
                episode=raw.get("episode"),
                role=raw.get("role"),
                expect_contains=tuple(raw.get("expect_contains", ())),
                expect_exact=raw.get("expect_exact"),
                sticky=bool(raw.get("sticky", False)),
            ))
        return cls(entries)

    def generate(self, request: GenRequest) -> GenResponse:
        tags = request.tags
        episode = int(tags["episode"]) if "episode" in tags else None
        for index, entry in enumerate(self._entries):
            if index in self._consumed:
                continue
            if entry.problem_id is not None and entry.problem_id != tags.get("problem_id"):
                continue
            if entry.episode is not None and episode is not None and entry.episode != episode:
                continue
            if entry.role is not None and entry.role != tags.get("role", "policy"):
                continue
            if entry.when is not None and not entry.when(request.user_text):
                continue
            if not entry.sticky:
                self._consumed.add(index)
            self._check_expectations(entry, request.user_text)
            return GenResponse(
                text=entry.text,
                tokens_in=estimate_tokens(request.user_text),
                tokens_out=estimate_tokens(entry.text),
                finish_reason="stop",
            )
        raise ScriptError(
            f"no script entry for tags={tags!r}; prompt starts {request.user_text[:80]!r}"
        )

    @staticmethod
    def _check_expectations(entry: ScriptEntry, prompt: str) -> None:
        if entry.expect_exact is not None and prompt != entry.expect_exact:
            raise ScriptError(f"prompt mismatch:\n{_char_diff(entry.expect_exact, prompt)}")
        for needle in entry.expect_contains:
            if needle not in prompt:
                raise ScriptError(
                    f"prompt missing expected text {needle!r}; "
                    f"prompt starts {prompt[:120]!r}"
                )


def script_policy_step(policy: ScriptedPolicy, prompt: str,
                       tags: dict[str, str] | None = None) -> GenResponse:
    """Advance a scripted policy by one prompt (asserting its expectations)."""
    return policy.generate(GenRequest(user_text=prompt, tags=tags or {}))

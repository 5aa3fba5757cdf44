"""Chat-completions client with an injectable transport."""
from __future__ import annotations

import json
import os
import re
import socket
import time
import urllib.error
import urllib.request
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Protocol

from .prompts import PromptBundle, Stage


class LlmError(RuntimeError):
    pass


class AuthMissing(LlmError):
    pass


class HttpError(LlmError):
    def __init__(self, status: int, body: str = ""):
        super().__init__(f"HTTP {status}: {body[:200]}")
        self.status = status


class Timeout(LlmError):
    pass


class NoArtifact(LlmError):
    """The response holds no fenced code block."""


RETRYABLE = frozenset({429, 500, 502, 503, 504})


@dataclass
class LlmEndpointConfig:
    base_url: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o"
    auth_env: str | None = "EARTHBT_API_KEY"
    max_tokens: int = 8192
    timeout: float = 120.0
    retries: int = 0

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")

    @classmethod
    def load(cls, path: str | Path) -> "LlmEndpointConfig":
        return cls(**json.loads(Path(path).read_text()))


@dataclass
class UsageRecord:
    stage: Stage
    prompt_tokens: int
    completion_tokens: int
    wall_seconds: float
    attempt: int = 1
    estimated: bool = False

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be >= 0")
        if self.attempt not in (1, 2):
            raise ValueError("attempt is 1 (initial) or 2 (after feedback)")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stage"] = Stage(self.stage).value
        return d


def totals(records) -> tuple[int, float]:
    """(TU, GT) over any number of usage records."""
    records = list(records)
    return sum(r.total_tokens for r in records), sum(r.wall_seconds for r in records)


class Transport(Protocol):
    def __call__(self, url: str, headers: dict, body: bytes, timeout: float) -> tuple[int, bytes]: ...


def urllib_transport(url: str, headers: dict, body: bytes, timeout: float) -> tuple[int, bytes]:
    req = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, resp.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except (socket.timeout, TimeoutError) as exc:
        raise Timeout(str(exc)) from None
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, (socket.timeout, TimeoutError)):
            raise Timeout(str(exc.reason)) from None
        raise LlmError(f"cannot reach {url}: {exc.reason}") from None


class FixtureTransport:
    """Replays canned responses in order; the last one repeats once the list runs out.

    Each response is either plain model text or a dict with ``content`` and
    optional ``usage`` / ``status``.
    """

    def __init__(self, responses: list):
        if not responses:
            raise ValueError("fixture needs at least one response")
        self.responses = list(responses)
        self.requests: list[dict] = []

    @classmethod
    def load(cls, path: str | Path) -> "FixtureTransport":
        data = json.loads(Path(path).read_text())
        return cls(data["responses"] if isinstance(data, dict) else data)

    def __call__(self, url, headers, body, timeout):
        self.requests.append(json.loads(body))
        item = self.responses[min(len(self.requests), len(self.responses)) - 1]
        if isinstance(item, str):
            item = {"content": item}
        status = int(item.get("status", 200))
        if status >= 400:
            return status, json.dumps({"error": item.get("content", "")}).encode()
        doc = {"choices": [{"message": {"role": "assistant", "content": item["content"]}}]}
        if "usage" in item:
            doc["usage"] = item["usage"]
        return 200, json.dumps(doc).encode()


def estimate_tokens(text: str) -> int:
    return len(text.split())


def request(config: LlmEndpointConfig, bundle: PromptBundle, transport: Transport | None = None,
            env: Mapping[str, str] | None = None) -> tuple[str, UsageRecord]:
    env = os.environ if env is None else env
    headers = {"Content-Type": "application/json"}
    if config.auth_env:
        token = env.get(config.auth_env)
        if not token:
            raise AuthMissing(f"set {config.auth_env} to the API token")
        headers["Authorization"] = f"Bearer {token}"
    transport = transport or urllib_transport
    messages = bundle.messages()
    body = json.dumps({"model": config.model, "max_tokens": config.max_tokens,
                       "messages": messages}).encode()

    started = time.perf_counter()
    for attempt in range(config.retries + 1):
        status, raw = transport(config.base_url, headers, body, config.timeout)
        if status < 400:
            break
        if status not in RETRYABLE or attempt == config.retries:
            raise HttpError(status, raw.decode("utf-8", "replace"))
    wall = max(time.perf_counter() - started, 1e-9)

    try:
        doc = json.loads(raw)
        text = doc["choices"][0]["message"]["content"] or ""
    except (ValueError, KeyError, IndexError, TypeError):
        raise LlmError("response is not a chat completion") from None
    usage = doc.get("usage") or {}
    if "prompt_tokens" in usage and "completion_tokens" in usage:
        record = UsageRecord(bundle.stage, int(usage["prompt_tokens"]), int(usage["completion_tokens"]),
                             wall, bundle.attempt)
    else:
        prompt = sum(estimate_tokens(m["content"]) for m in messages)
        record = UsageRecord(bundle.stage, prompt, estimate_tokens(text), wall, bundle.attempt,
                             estimated=True)
    return text, record


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.S)


def extract_artifact(text: str) -> str:
    m = _FENCE.search(text)
    if not m:
        raise NoArtifact("no fenced code block in the response")
    return m.group(1).strip("\n") + "\n"


def save_transcript(path: str | Path, entries: list[dict]) -> None:
    Path(path).write_text(json.dumps(entries, indent=2) + "\n")


def load_transcript(path: str | Path) -> list[dict]:
    return json.loads(Path(path).read_text())

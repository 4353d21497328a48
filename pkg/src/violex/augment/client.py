"""Chat-completion clients: a real HTTP client and a deterministic mock.

The wire contract is a single-turn completion: POST a JSON body
``{"model": ..., "prompt": ..., "temperature": ..., "max_output_tokens": ...}``
and read the generated text from the ``"text"`` field of the JSON response.
Transient failures are retried with exponential backoff.

The mock is fully deterministic given (prompt, seed) and is what every test
and demo runs against; it understands the ``<<< ... >>>`` delimiters our
prompt templates wrap source texts in.
"""
from __future__ import annotations

import hashlib
import re
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence, runtime_checkable

from ..errors import ClientError, EmptyGeneration

_PAYLOAD = re.compile(r"<<<(.*?)>>>", re.DOTALL)


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_seconds: float = 1.0
    backoff_factor: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


@runtime_checkable
class ChatClient(Protocol):
    """Anything that can turn a prompt into a completion."""

    model_name: str

    def complete(self, prompt: str, *, seed: int = 0) -> str: ...


class HttpChatClient:
    """JSON-over-HTTP completion client with retries.

    ``transport`` is injectable for tests; the default posts with
    ``requests``. A blank completion counts as a failure and is retried.
    """

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        api_key: str | None = None,
        temperature: float = 0.7,
        max_output_tokens: int = 512,
        timeout: float = 60.0,
        retry: RetryPolicy = RetryPolicy(),
        transport: Callable[..., dict] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if temperature < 0:
            raise ValueError("temperature must be non-negative")
        if max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        self.endpoint = endpoint
        self.model_name = model_name
        self.api_key = api_key
        self.temperature = temperature
        self.max_output_tokens = max_output_tokens
        self.timeout = timeout
        self.retry = retry
        self._transport = transport or self._post
        self._sleep = sleep

    def _post(self, endpoint: str, payload: dict, timeout: float) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        response = requests.post(endpoint, json=payload, headers=headers,
                                 timeout=timeout)
        response.raise_for_status()
        return response.json()

    def complete(self, prompt: str, *, seed: int = 0) -> str:
        payload = {
            "model": self.model_name,
            "prompt": prompt,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "seed": seed,
        }
        delay = self.retry.backoff_seconds
        failure: Exception | None = None
        for attempt in range(self.retry.max_attempts):
            if attempt:
                self._sleep(delay)
                delay *= self.retry.backoff_factor
            try:
                text = str(self._transport(self.endpoint, payload, self.timeout)
                           .get("text", ""))
            except Exception as exc:  # transport errors are retryable
                failure = exc
                continue
            if text.strip():
                return text
            failure = EmptyGeneration("client returned a blank completion")
        if isinstance(failure, EmptyGeneration):
            raise failure
        raise ClientError(
            f"completion failed after {self.retry.max_attempts} attempts: {failure}"
        )


def _digest(prompt: str, seed: int) -> int:
    raw = hashlib.blake2b(f"{seed}:{prompt}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(raw, "big")


class MockChatClient:
    """Deterministic stand-in for a hosted model.

    Modes:

    * ``identity`` — return the last ``<<< ... >>>`` payload verbatim.
    * ``restate`` — rotate the payload's words by a (prompt, seed)-derived
      offset, a cheap stand-in for a paraphrase.
    * ``script=[...]`` — return the scripted completions in order (cycling),
      ignoring the prompt; handy for unit tests.

    ``fail_times`` makes the first N calls raise, to exercise error paths.
    Safe for concurrent use.
    """

    def __init__(
        self,
        mode: str = "identity",
        script: Sequence[str] | None = None,
        fail_times: int = 0,
        model_name: str = "mock-chat",
        seed: int = 0,
    ):
        if mode not in ("identity", "restate"):
            raise ValueError(f"unknown mock mode: {mode!r}")
        self.mode = mode
        self.script = list(script) if script is not None else None
        self.model_name = model_name
        self.seed = seed
        self._fail_times = fail_times
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def calls(self) -> int:
        return self._calls

    def complete(self, prompt: str, *, seed: int | None = None) -> str:
        with self._lock:
            call_index = self._calls
            self._calls += 1
            if call_index < self._fail_times:
                raise ClientError(f"mock failure {call_index + 1}/{self._fail_times}")
            if self.script is not None:
                return self.script[call_index % len(self.script)]
        payloads = _PAYLOAD.findall(prompt)
        if not payloads:
            raise ClientError("mock client found no <<< ... >>> payload in the prompt")
        text = payloads[-1].strip()
        if self.mode == "identity":
            return text
        words = text.split()
        if len(words) < 2:
            return text
        offset = _digest(prompt, self.seed if seed is None else seed) % len(words)
        return " ".join(words[offset:] + words[:offset])

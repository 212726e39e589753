"""Clients for chat-completion and embedding endpoints, plus an offline mock.

The HTTP provider speaks the common JSON wire format: POST
``{base_url}/chat/completions`` with model, messages, temperature, and
max_tokens, and POST ``{base_url}/embeddings`` with model and input list.
Transport failures and 5xx responses are retried with exponential backoff;
4xx responses fail immediately since retrying cannot fix the request.
In-flight requests per endpoint are capped with a semaphore.

The mock provider answers without a network.  It reads the verdict line and
group lines out of the prompt, rebuilds the reference explanation from them,
and degrades it by dropping tokens at a per-model rate, seeded per sample so
runs are reproducible.
"""

from __future__ import annotations

import hashlib
import os
import random
import re
import threading
import time
from dataclasses import dataclass

import numpy as np
import requests

from .metrics import fallback_embed
from .narrative import ChatMessage, compose_reference

DEFAULT_TIMEOUT = 30.0
DEFAULT_RETRIES = 3
DEFAULT_BACKOFF = 0.5
DEFAULT_CONCURRENCY = 4


class GatewayError(Exception):
    """Base class for provider failures."""


class TransportError(GatewayError):
    """Network-level failure that persisted through all retries."""


class ServiceError(GatewayError):
    """5xx response that persisted through all retries."""

    def __init__(self, status: int, body: str):
        super().__init__(f"service error {status}: {body[:200]}")
        self.status = status


class RequestError(GatewayError):
    """4xx response; the request itself is wrong, so it is not retried."""

    def __init__(self, status: int, body: str):
        super().__init__(f"request rejected {status}: {body[:200]}")
        self.status = status


class ResponseFormatError(GatewayError):
    """2xx response whose payload does not have the expected shape."""


@dataclass(frozen=True)
class ModelEndpoint:
    """Where and how to reach one model."""

    model_id: str
    base_url: str
    api_key_env: str = ""
    temperature: float = 0.0
    max_tokens: int = 512


class Provider:
    """Interface the evaluation harness talks to."""

    def complete(
        self,
        model_id: str,
        messages: list[ChatMessage],
        temperature: float = 0.0,
        max_tokens: int = 512,
    ) -> str:
        raise NotImplementedError

    def embed(self, model_id: str, texts: list[str]) -> list[np.ndarray]:
        raise NotImplementedError


class HttpProvider(Provider):
    def __init__(
        self,
        base_url: str,
        api_key_env: str = "",
        timeout: float = DEFAULT_TIMEOUT,
        retries: int = DEFAULT_RETRIES,
        backoff: float = DEFAULT_BACKOFF,
        concurrency: int = DEFAULT_CONCURRENCY,
        session: requests.Session | None = None,
    ):
        if concurrency < 1:
            raise ValueError("concurrency must be at least 1")
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._session = session or requests.Session()
        self._chat_slots = threading.BoundedSemaphore(concurrency)
        self._embed_slots = threading.BoundedSemaphore(concurrency)
        self._sleep = time.sleep

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, path: str, payload: dict, slots: threading.BoundedSemaphore) -> dict:
        url = f"{self.base_url}{path}"
        last_error: GatewayError | None = None
        for attempt in range(self.retries + 1):
            if attempt > 0:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                with slots:
                    response = self._session.post(
                        url, json=payload, headers=self._headers(), timeout=self.timeout
                    )
            except requests.RequestException as exc:
                last_error = TransportError(f"POST {url} failed: {exc}")
                continue
            if 400 <= response.status_code < 500:
                raise RequestError(response.status_code, response.text)
            if response.status_code >= 500:
                last_error = ServiceError(response.status_code, response.text)
                continue
            try:
                body = response.json()
            except ValueError as exc:
                raise ResponseFormatError(f"non-JSON response from {url}: {exc}") from exc
            if not isinstance(body, dict):
                raise ResponseFormatError(f"expected a JSON object from {url}")
            return body
        assert last_error is not None
        raise last_error

    def complete(
        self,
        model_id: str,
        messages: list[ChatMessage],
        temperature: float = 0.0,
        max_tokens: int = 512,
    ) -> str:
        payload = {
            "model": model_id,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        body = self._post("/chat/completions", payload, self._chat_slots)
        try:
            content = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ResponseFormatError(f"chat response missing choices[0].message.content: {exc}") from exc
        if not isinstance(content, str):
            raise ResponseFormatError("chat content is not a string")
        return content

    def embed(self, model_id: str, texts: list[str]) -> list[np.ndarray]:
        payload = {"model": model_id, "input": list(texts)}
        body = self._post("/embeddings", payload, self._embed_slots)
        items = body.get("data")
        if not isinstance(items, list) or len(items) != len(texts):
            raise ResponseFormatError(
                f"embedding response has {len(items) if isinstance(items, list) else 'no'} "
                f"items for {len(texts)} inputs"
            )
        vectors = []
        for item in items:
            try:
                vectors.append(np.asarray(item["embedding"], dtype=np.float64))
            except (KeyError, TypeError, ValueError) as exc:
                raise ResponseFormatError(f"bad embedding entry: {exc}") from exc
        return vectors


_SAMPLE_LINE = re.compile(r"^Sample: (.+)$", re.MULTILINE)
_VERDICT_LINE = re.compile(r"^Verdict: (malicious|benign) \((\w+ confidence)\)$", re.MULTILINE)
_GROUP_LINE = re.compile(
    r"^- (.+): pushes toward (malicious|benign|neither), (high|moderate|low) impact$",
    re.MULTILINE,
)


def _dropout_seed(seed: int, sample_id: str, model_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{sample_id}:{model_id}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def degrade_text(text: str, rate: float, rng: random.Random) -> str:
    """Drop whitespace-delimited tokens (with their trailing whitespace)
    independently at the given rate.  Rate 0 returns the text unchanged."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"degradation rate {rate} outside [0, 1]")
    if rate == 0.0:
        return text
    kept = []
    for piece in re.finditer(r"\S+\s*", text):
        if rng.random() >= rate:
            kept.append(piece.group(0))
    return "".join(kept).rstrip()


class MockProvider(Provider):
    """Offline provider that reconstructs the reference and degrades it.

    ``degradation`` maps model ids to token-drop rates; unlisted models get
    rate 0 and reproduce the reference byte for byte.
    """

    def __init__(self, seed: int = 0, degradation: dict[str, float] | None = None):
        self.seed = seed
        self.degradation = dict(degradation or {})
        for model_id, rate in self.degradation.items():
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"degradation rate for {model_id} outside [0, 1]: {rate}")

    def complete(
        self,
        model_id: str,
        messages: list[ChatMessage],
        temperature: float = 0.0,
        max_tokens: int = 512,
    ) -> str:
        prompt = next((m.content for m in reversed(messages) if m.role == "user"), None)
        if prompt is None:
            raise GatewayError("mock provider needs a user message")
        sample = _SAMPLE_LINE.search(prompt)
        verdict_match = _VERDICT_LINE.search(prompt)
        if sample is None or verdict_match is None:
            raise GatewayError("mock provider could not find sample and verdict lines")
        groups = [(m.group(1), m.group(2), m.group(3)) for m in _GROUP_LINE.finditer(prompt)]
        reference = compose_reference(verdict_match.group(1), verdict_match.group(2), groups)

        rate = self.degradation.get(model_id, 0.0)
        if rate == 0.0:
            return reference
        rng = random.Random(_dropout_seed(self.seed, sample.group(1), model_id))
        return degrade_text(reference, rate, rng)

    def embed(self, model_id: str, texts: list[str]) -> list[np.ndarray]:
        return [fallback_embed(text) for text in texts]

"""Chat-completions client with retry/backoff, plus an inference adapter for TTS."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence
from urllib.parse import urlparse

import httpx

from ..core import McqaSample, SamplingParams, SyntheticVideo
from ..tts import InferenceError
from .prompt import build_prompt, expand_frames

log = logging.getLogger(__name__)


class ConfigurationError(ValueError):
    """The endpoint rejected the request (4xx) or the config is invalid."""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class TransportError(InferenceError):
    """Retries exhausted on timeouts, connection failures, or 5xx responses."""

    def __init__(self, message: str, attempts: int, status: Optional[int] = None):
        super().__init__(f"{message} (after {attempts} attempts)")
        self.attempts = attempts
        self.status = status


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key: Optional[str] = field(default=None, repr=False)
    timeout: float = 60.0
    max_retries: int = 3
    backoff: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0)

    def __post_init__(self):
        url = urlparse(self.base_url)
        if url.scheme not in ("http", "https") or not url.netloc:
            raise ConfigurationError(f"base_url must be an http(s) URL, got {self.base_url!r}")
        if self.max_retries < 0:
            raise ConfigurationError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ConfigurationError("timeout must be positive")

    def with_env(self, environ=None) -> "EndpointConfig":
        """Applies VRTS_API_BASE / VRTS_API_KEY / VRTS_MODEL overrides."""
        env = os.environ if environ is None else environ
        changes = {}
        if env.get("VRTS_API_BASE"):
            changes["base_url"] = env["VRTS_API_BASE"]
        if env.get("VRTS_API_KEY"):
            changes["api_key"] = env["VRTS_API_KEY"]
        if env.get("VRTS_MODEL"):
            changes["model_name"] = env["VRTS_MODEL"]
        return replace(self, **changes) if changes else self

    def delay(self, retry: int) -> float:
        if not self.backoff:
            return 0.0
        return self.backoff[min(retry, len(self.backoff) - 1)]


@dataclass(frozen=True)
class Completion:
    text: str
    attempts: int
    finish_reason: Optional[str]


def _close_sentinel(text: str, sentinel: str, finish_reason: Optional[str]) -> str:
    """Cuts anything after the sentinel; restores it if the server stripped it."""
    cut = text.find(sentinel)
    if cut >= 0:
        return text[: cut + len(sentinel)]
    if finish_reason == "stop" and sentinel.startswith("</") and "<" + sentinel[2:] in text:
        return text + sentinel  # tag opened, server dropped the closing stop string
    return text


class ChatClient:
    """Thread-safe; one instance may serve concurrent requests."""

    def __init__(
        self,
        config: EndpointConfig,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._http = httpx.Client(
            base_url=config.base_url.rstrip("/"), headers=headers, timeout=config.timeout, transport=transport
        )

    def close(self) -> None:
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def build_request(
        self, messages: list[dict[str, Any]], frame_refs: Sequence[str], params: SamplingParams, seed: Optional[int] = None
    ) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.config.model_name,
            "messages": expand_frames(messages, list(frame_refs)),
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "stop": [params.stop_sentinel],
        }
        if seed is not None:
            body["seed"] = int(seed) % (2**31)
        return body

    def generate(
        self,
        messages: list[dict[str, Any]],
        frame_refs: Sequence[str],
        params: SamplingParams,
        seed: Optional[int] = None,
    ) -> str:
        return self.complete(messages, frame_refs, params, seed).text

    def complete(
        self,
        messages: list[dict[str, Any]],
        frame_refs: Sequence[str],
        params: SamplingParams,
        seed: Optional[int] = None,
    ) -> "Completion":
        body = self.build_request(messages, frame_refs, params, seed)
        attempts = 0
        last_status: Optional[int] = None
        last_error = ""
        while True:
            attempts += 1
            try:
                resp = self._http.post("/chat/completions", json=body)
            except httpx.TimeoutException as exc:
                last_error, last_status = f"timeout: {type(exc).__name__}", None
            except httpx.TransportError as exc:
                last_error, last_status = f"connection error: {type(exc).__name__}", None
            else:
                status = resp.status_code
                if status < 400:
                    return self._parse(resp, params, attempts)
                if status == 429 or status >= 500:
                    last_error, last_status = f"HTTP {status}", status
                else:
                    raise ConfigurationError(f"endpoint rejected request: HTTP {status}: {resp.text[:200]}", status)
            if attempts > self.config.max_retries:
                raise TransportError(last_error, attempts, last_status)
            wait = self.config.delay(attempts - 1)
            log.info("request failed (%s); retry %d in %.2fs", last_error, attempts, wait)
            self._sleep(wait)

    def _parse(self, resp: httpx.Response, params: SamplingParams, attempts: int) -> "Completion":
        try:
            choice = resp.json()["choices"][0]
            text = choice["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}", attempts) from exc
        reason = choice.get("finish_reason")
        return Completion(_close_sentinel(text, params.stop_sentinel, reason), attempts, reason)


def synthetic_frame_ref(video: SyntheticVideo, index: int) -> str:
    return f"synthetic://{video.video_id}/{index}"


class BackendInference:
    """Drives a chat endpoint through the generic inference interface."""

    def __init__(self, client: ChatClient):
        self.client = client

    def frame_refs(self, sample: McqaSample, indices: Sequence[int]) -> list[str]:
        video = sample.video
        if isinstance(video, SyntheticVideo):
            return [synthetic_frame_ref(video, i) for i in indices]
        return [video.frame_ref(i) for i in indices]

    def generate(self, sample: McqaSample, frame_indices: Sequence[int], params: SamplingParams, seed: int) -> str:
        return self.client.generate(build_prompt(sample), self.frame_refs(sample, frame_indices), params, seed)

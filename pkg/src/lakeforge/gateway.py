"""Text-completion gateway with deterministic record/replay caching.

Modes:
  live    - POST to the configured endpoint, no cache interaction.
  record  - serve from cache when present, otherwise call and store.
  replay  - cache only; a miss is an error carrying the request digest.

The cache key is a SHA-256 digest of the canonicalized request: the prompt is
hashed byte-exact, configuration fields are whitespace-normalized.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .common import CacheMiss, GatewayError, canonical_json, sha256_hex

DEFAULT_MODEL = "text-davinci-003"
# Diversity for value generation, fidelity for perturbation.
GEN_TEMPERATURE = 0.7
PERTURB_TEMPERATURE = 0.2

ENV_API_KEY = "LAKEFORGE_API_KEY"
ENV_ENDPOINT = "LAKEFORGE_ENDPOINT"


@dataclass
class CompletionRequest:
    prompt: str
    max_tokens: int = 512
    temperature: float = GEN_TEMPERATURE
    model: str = DEFAULT_MODEL

    def validate(self) -> None:
        if not self.prompt:
            raise GatewayError("prompt must be non-empty")
        if not (0.0 <= self.temperature <= 2.0):
            raise GatewayError(f"temperature {self.temperature} outside [0, 2]")


def request_digest(req: CompletionRequest) -> str:
    req.validate()
    core = {
        "model": " ".join(req.model.split()),
        "prompt": req.prompt,
        "max_tokens": int(req.max_tokens),
        "temperature": float(req.temperature),
    }
    return sha256_hex(canonical_json(core).encode("utf-8"))


@dataclass
class GatewayConfig:
    mode: str = "replay"  # live | record | replay
    cache_dir: str | Path | None = None
    endpoint: str | None = None
    api_key: str | None = None
    model: str = DEFAULT_MODEL
    max_inflight: int = 4
    timeout: float = 60.0
    retries: int = 3

    def resolved_endpoint(self) -> str | None:
        return self.endpoint or os.environ.get(ENV_ENDPOINT)

    def resolved_api_key(self) -> str | None:
        return self.api_key or os.environ.get(ENV_API_KEY)


class LlmGateway:
    """Shareable completion client; concurrent complete() calls are bounded by
    max_inflight and cache writes are atomic (write-temp-then-rename)."""

    def __init__(self, config: GatewayConfig | None = None, transport=None):
        self.config = config or GatewayConfig()
        self._transport = transport  # callable(CompletionRequest) -> str, for tests
        self._sem = threading.Semaphore(max(1, self.config.max_inflight))
        self._sleep = time.sleep

    def _cache_path(self, digest: str) -> Path:
        if self.config.cache_dir is None:
            raise GatewayError("cache_dir required for record/replay modes")
        return Path(self.config.cache_dir) / f"{digest}.json"

    def _cache_read(self, digest: str) -> str | None:
        path = self._cache_path(digest)
        if not path.exists():
            return None
        entry = json.loads(path.read_text(encoding="utf-8"))
        return entry["response"]

    def _cache_write(self, digest: str, req: CompletionRequest, response: str) -> None:
        path = self._cache_path(digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        entry = {
            "key": digest,
            "model": req.model,
            "prompt": req.prompt,
            "response": response,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(entry, f, ensure_ascii=False, indent=2)
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def _call_endpoint(self, req: CompletionRequest) -> str:
        if self._transport is not None:
            return self._transport(req)
        endpoint = self.config.resolved_endpoint()
        if not endpoint:
            raise GatewayError(f"no endpoint configured (flag or {ENV_ENDPOINT})")
        import requests

        headers = {"Content-Type": "application/json"}
        key = self.config.resolved_api_key()
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": req.model,
            "prompt": req.prompt,
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        resp = requests.post(endpoint, json=payload, headers=headers, timeout=self.config.timeout)
        if resp.status_code != 200:
            raise GatewayError(f"endpoint returned HTTP {resp.status_code}: {resp.text[:200]}")
        body = resp.json()
        if isinstance(body, dict):
            choices = body.get("choices")
            if isinstance(choices, list) and choices:
                return str(choices[0].get("text", ""))
            for field in ("text", "completion"):
                if field in body:
                    return str(body[field])
        raise GatewayError("endpoint response carries no completion text")

    def _call_with_retries(self, req: CompletionRequest) -> str:
        last: Exception | None = None
        for attempt in range(max(1, self.config.retries)):
            try:
                with self._sem:
                    return self._call_endpoint(req)
            except Exception as exc:  # noqa: BLE001 - network layer
                last = exc
                if attempt + 1 < self.config.retries:
                    self._sleep(0.5 * (2**attempt))
        raise GatewayError(f"completion failed after {self.config.retries} attempts: {last}")

    def complete(self, req: CompletionRequest, mode: str | None = None) -> str:
        req.validate()
        mode = mode or self.config.mode
        if mode == "live":
            return self._call_with_retries(req)
        digest = request_digest(req)
        if mode == "replay":
            cached = self._cache_read(digest)
            if cached is None:
                raise CacheMiss(digest)
            return cached
        if mode == "record":
            cached = self._cache_read(digest)
            if cached is not None:
                return cached
            response = self._call_with_retries(req)
            self._cache_write(digest, req, response)
            return response
        raise GatewayError(f"unknown gateway mode {mode!r}")

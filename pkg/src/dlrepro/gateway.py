"""Model provider access: HTTP client, deterministic mocks, record and replay.

Every request is digest-keyed over its canonical payload, which is what makes
exchange logs replayable: a strict replay answers from the log or raises, it
never falls through to a live call.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import requests

from .errors import ProviderFailure, ReplayMissError
from .tokenization import jaccard

DEFAULT_EMBED_DIM = 64


@dataclass
class ProviderConfig:
    endpoint: str = "http://127.0.0.1:8080"
    model: str = "local-default"
    role_models: dict[str, str] = field(default_factory=dict)
    temperature: float = 0.0
    top_p: float = 1.0
    top_k: int = 0
    timeout_s: float = 60.0
    max_retries: int = 2
    retry_backoff_s: float = 0.5
    requests_per_second: float = 0.0
    api_key_env: str = ""
    embed_dim: int = DEFAULT_EMBED_DIM

    def model_for(self, role: str) -> str:
        return self.role_models.get(role, self.model)


def _canonical(payload) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _digest(kind: str, payload) -> str:
    return hashlib.sha256(f"{kind}\x00{_canonical(payload)}".encode("utf-8")).hexdigest()


def complete_digest(messages, model: str, temperature: float, top_p: float, top_k: int) -> str:
    return _digest(
        "complete",
        {"messages": messages, "model": model, "temperature": temperature, "top_p": top_p, "top_k": top_k},
    )


def embed_digest(text: str, dim: int) -> str:
    return _digest("embed", {"text": text, "dim": dim})


def cross_digest(query: str, doc: str) -> str:
    return _digest("cross", {"query": query, "doc": doc})


def hash_to_unit_vector(text: str, dim: int) -> np.ndarray:
    """Seeded hash-to-vector embedding used by the mock provider."""
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class MockGateway:
    """Deterministic offline provider. Completions need an injected responder."""

    def __init__(self, config: ProviderConfig | None = None, completer=None):
        self.config = config or ProviderConfig()
        self.completer = completer

    def complete(self, messages, *, role: str = "text") -> str:
        if self.completer is None:
            raise ProviderFailure(
                "mock gateway has no completion responder configured",
                digest=self._complete_digest(messages, role),
            )
        return self.completer(messages, role)

    def embed(self, text: str) -> np.ndarray:
        return hash_to_unit_vector(text, self.config.embed_dim)

    def cross_score(self, query: str, doc: str) -> float:
        return jaccard(query, doc)

    def _complete_digest(self, messages, role: str) -> str:
        c = self.config
        return complete_digest(messages, c.model_for(role), c.temperature, c.top_p, c.top_k)


class HttpGateway:
    """Generic JSON-over-HTTP provider with retries, backoff and a rate ceiling.

    The wire shape is one POST per call kind; a mapper pair can adapt request
    and response bodies to a specific provider's API.
    """

    def __init__(self, config: ProviderConfig, session=None, build_request=None, parse_response=None):
        self.config = config
        self._session = session or requests.Session()
        self._build = build_request or self._default_build
        self._parse = parse_response or self._default_parse
        self._lock = threading.Lock()
        self._last_request = 0.0

    @staticmethod
    def _default_build(kind: str, body: dict) -> dict:
        return body

    @staticmethod
    def _default_parse(kind: str, payload: dict):
        key = {"complete": "text", "embed": "embedding", "cross": "score"}[kind]
        return payload[key]

    def _throttle(self) -> None:
        rps = self.config.requests_per_second
        if rps <= 0:
            return
        interval = 1.0 / rps
        with self._lock:
            wait = self._last_request + interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def _post(self, kind: str, body: dict, digest: str):
        url = self.config.endpoint.rstrip("/") + "/" + kind
        headers = {}
        if self.config.api_key_env:
            key = os.environ.get(self.config.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        last_error = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.retry_backoff_s * (2 ** (attempt - 1)))
            self._throttle()
            try:
                resp = self._session.post(
                    url, json=self._build(kind, body), headers=headers, timeout=self.config.timeout_s
                )
            except requests.RequestException as exc:
                last_error = str(exc)
                continue
            if resp.status_code == 200:
                try:
                    return self._parse(kind, resp.json())
                except (ValueError, KeyError) as exc:
                    last_error = f"unparseable response body: {exc}"
                    continue
            last_error = f"HTTP {resp.status_code}"
        raise ProviderFailure(f"{kind} request failed after retries: {last_error}", digest=digest)

    def complete(self, messages, *, role: str = "text") -> str:
        c = self.config
        model = c.model_for(role)
        digest = complete_digest(messages, model, c.temperature, c.top_p, c.top_k)
        body = {
            "model": model,
            "messages": messages,
            "temperature": c.temperature,
            "top_p": c.top_p,
            "top_k": c.top_k,
        }
        return str(self._post("complete", body, digest))

    def embed(self, text: str) -> np.ndarray:
        digest = embed_digest(text, self.config.embed_dim)
        value = self._post("embed", {"input": text, "dim": self.config.embed_dim}, digest)
        return np.asarray(value, dtype=np.float64)

    def cross_score(self, query: str, doc: str) -> float:
        digest = cross_digest(query, doc)
        return float(self._post("cross", {"query": query, "doc": doc}, digest))


class RecordingGateway:
    """Wraps another gateway and appends every exchange to a jsonl log."""

    def __init__(self, inner, log_path: Path):
        self.inner = inner
        self.config = inner.config
        self.log_path = Path(log_path)
        self.log_path.parent.mkdir(parents=True, exist_ok=True)

    def _append(self, digest: str, kind: str, response) -> None:
        row = {"digest": digest, "kind": kind, "response": response}
        with open(self.log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    def complete(self, messages, *, role: str = "text") -> str:
        c = self.config
        digest = complete_digest(messages, c.model_for(role), c.temperature, c.top_p, c.top_k)
        out = self.inner.complete(messages, role=role)
        self._append(digest, "complete", out)
        return out

    def embed(self, text: str) -> np.ndarray:
        digest = embed_digest(text, self.config.embed_dim)
        out = self.inner.embed(text)
        self._append(digest, "embed", [float(x) for x in out])
        return out

    def cross_score(self, query: str, doc: str) -> float:
        digest = cross_digest(query, doc)
        out = float(self.inner.cross_score(query, doc))
        self._append(digest, "cross", out)
        return out


class ReplayGateway:
    """Answers from a recorded exchange log keyed by request digest."""

    def __init__(self, log_path: Path | None = None, *, records=None, config: ProviderConfig | None = None):
        self.config = config or ProviderConfig()
        self._store: dict[str, tuple[str, object]] = {}
        rows = records or []
        if log_path is not None:
            rows = []
            text = Path(log_path).read_text(encoding="utf-8")
            for line in text.splitlines():
                if line.strip():
                    rows.append(json.loads(line))
        for row in rows:
            self._store[row["digest"]] = (row["kind"], row["response"])

    def _lookup(self, digest: str, kind: str):
        hit = self._store.get(digest)
        if hit is None:
            raise ReplayMissError(digest, kind)
        return hit[1]

    def complete(self, messages, *, role: str = "text") -> str:
        c = self.config
        digest = complete_digest(messages, c.model_for(role), c.temperature, c.top_p, c.top_k)
        return str(self._lookup(digest, "complete"))

    def embed(self, text: str) -> np.ndarray:
        digest = embed_digest(text, self.config.embed_dim)
        return np.asarray(self._lookup(digest, "embed"), dtype=np.float64)

    def cross_score(self, query: str, doc: str) -> float:
        digest = cross_digest(query, doc)
        return float(self._lookup(digest, "cross"))

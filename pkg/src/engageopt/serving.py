"""HTTP service wiring the selector, reward model, and generators.

Endpoints:
  POST /v1/select  {"post_id", "post_text", "n"?} -> selection decision
  GET  /healthz    -> 200 "ok"
  GET  /metrics    -> plain-text "name value" counter lines
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import generators, reward, selector
from .core import Post
from .errors import EmptyPost

METRIC_NAMES = [
    "remote_calls",
    "cache_hits_l1",
    "cache_hits_l2",
    "fallbacks",
    "rate_limit_errors",
    "selections_total",
]


@dataclass
class ServiceConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    model_path: str = "params.json"
    n: int = 2
    max_words: int = 10
    backoff: generators.BackoffConfig = field(default_factory=generators.BackoffConfig)
    cache_path: str | None = None
    cache_ttl: float = selector.DEFAULT_TTL
    base_url: str = ""
    api_key: str = ""
    remote_model: str = "default"
    generator_version: str = "v1"

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        backoff = generators.BackoffConfig(**raw.pop("backoff", {}))
        config = cls(backoff=backoff, **raw)
        # environment overrides file values
        config.api_key = os.environ.get("ENGAGE_API_KEY", config.api_key)
        config.base_url = os.environ.get("ENGAGE_BASE_URL", config.base_url)
        if config.n < 1:
            raise ValueError(f"n must be >= 1, got {config.n}")
        if not Path(config.model_path).exists():
            raise FileNotFoundError(f"model file not found: {config.model_path}")
        return config


class Metrics:
    def __init__(self):
        self._lock = threading.Lock()
        self._counters = {name: 0 for name in METRIC_NAMES}

    def inc(self, name: str, value: int = 1) -> None:
        with self._lock:
            self._counters[name] = self._counters.get(name, 0) + value

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counters)

    def render(self) -> str:
        return "".join(f"{k} {v}\n" for k, v in sorted(self.snapshot().items()))


class CountingEndpoint:
    """Wraps a chat endpoint to count remote calls and rate-limit errors."""

    def __init__(self, inner, metrics: Metrics):
        self.inner = inner
        self.metrics = metrics

    def complete(self, spec, post_text):
        self.metrics.inc("remote_calls")
        try:
            return self.inner.complete(spec, post_text)
        except generators.RetryableRemoteError as exc:
            if "429" in str(exc):
                self.metrics.inc("rate_limit_errors")
            raise


class ParamsHandle:
    """Atomically swappable reward params; readers get a complete snapshot."""

    def __init__(self, params: reward.RewardModelParams):
        self._lock = threading.Lock()
        self._params = params

    def get(self) -> reward.RewardModelParams:
        with self._lock:
            return self._params

    def set(self, params: reward.RewardModelParams) -> None:
        with self._lock:
            self._params = params


class EngagementService:
    def __init__(self, config: ServiceConfig, params: reward.RewardModelParams, endpoint=None):
        self.config = config
        self.params_handle = ParamsHandle(params)
        self.metrics = Metrics()
        self.cache = selector.SelectionCache(config.cache_path, ttl=config.cache_ttl)
        inner = endpoint or generators.HttpChatEndpoint(
            base_url=config.base_url, api_key=config.api_key, model=config.remote_model
        )
        self.endpoint = CountingEndpoint(inner, self.metrics)
        self.specs = [generators.GeneratorSpec()]
        self._server: ThreadingHTTPServer | None = None

    def select(self, post_id: str, post_text: str, n: int | None = None) -> selector.SelectionDecision:
        return selector.select_for_post(
            Post(post_id=post_id, text=post_text),
            n if n is not None else self.config.n,
            self.params_handle.get(),
            self.cache,
            self.endpoint,
            self.specs,
            backoff=self.config.backoff,
            max_words=self.config.max_words,
            generator_version=self.config.generator_version,
            metrics=self.metrics,
        )

    def make_server(self) -> ThreadingHTTPServer:
        service = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            # idle keep-alive connections would otherwise block server_close()
            timeout = 30.0

            def log_message(self, fmt, *args):  # keep tests quiet
                pass

            def _reply(self, status: int, body: bytes, content_type="application/json"):
                self.send_response(status)
                self.send_header("Content-Type", content_type)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/healthz":
                    self._reply(200, b"ok", "text/plain")
                elif self.path == "/metrics":
                    self._reply(200, service.metrics.render().encode(), "text/plain")
                else:
                    self._reply(404, b'{"error": "not_found"}')

            def do_POST(self):
                if self.path != "/v1/select":
                    self._reply(404, b'{"error": "not_found"}')
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    body = json.loads(self.rfile.read(length) or b"{}")
                except (ValueError, json.JSONDecodeError):
                    self._reply(400, b'{"error": "invalid_json"}')
                    return
                post_id = body.get("post_id")
                post_text = body.get("post_text")
                if not post_id or not isinstance(post_text, str) or not post_text.strip():
                    self._reply(400, b'{"error": "missing_post_text"}')
                    return
                try:
                    decision = service.select(post_id, post_text, body.get("n"))
                except EmptyPost:
                    self._reply(400, b'{"error": "missing_post_text"}')
                    return
                except Exception:
                    self._reply(500, b'{"error": "internal"}')
                    return
                payload = {
                    "post_id": decision.post_id,
                    "subject": decision.chosen.text,
                    "source": decision.source,
                    "score": decision.scores.get(decision.chosen.text),
                    "cached": decision.cached,
                    "generator_version": service.config.generator_version,
                }
                self._reply(200, json.dumps(payload, ensure_ascii=False).encode("utf-8"))

        server = ThreadingHTTPServer((self.config.listen_host, self.config.listen_port), Handler)
        server.daemon_threads = False  # drain in-flight requests on shutdown
        self._server = server
        return server

    def serve_forever(self):
        self.make_server().serve_forever()

    def shutdown(self):
        if self._server:
            self._server.shutdown()
            self._server.server_close()

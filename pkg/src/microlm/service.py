"""HTTP front end: server-sent events over a local socket.

POST /v1/respond streams one collaborative exchange as SSE frames with
event types opener_token, handoff, continuation_token, correction, done,
and error; GET /v1/health and GET /v1/config report liveness and the
active (secret-free) configuration. Generation runs in a worker thread per
request; sessions are isolated and interleave freely.
"""

from __future__ import annotations

import asyncio
import itertools
import json
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, AsyncIterator, Callable

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from .decoder import MAX_WORD_BUDGET, SamplingPolicy
from .errors import ConfigError
from .handoff import RECOVERY_MODES, CloudEndpointConfig, run_collaborative
from .model import Model, load_model
from .tokenizer import TokenizerModel, load_tokenizer

__all__ = ["ServiceConfig", "load_service_config", "create_app", "format_sse"]

DEFAULT_WORD_BUDGET = 8
DEFAULT_MODE = "explicit_correction"


@dataclass(frozen=True)
class ServiceConfig:
    """Everything the service needs, loadable from JSON with flag overrides.

    The cloud auth token itself never appears here — only the name of the
    environment variable that holds it.
    """

    weights_path: str
    tokenizer_path: str
    cloud_base_url: str = "http://127.0.0.1:8801/v1"
    cloud_model: str = "continuator"
    cloud_auth_env_var: str | None = None
    cloud_timeout_s: float = 30.0
    max_continuation_tokens: int = 512
    host: str = "127.0.0.1"
    port: int = 8800
    default_word_budget: int = DEFAULT_WORD_BUDGET
    default_mode: str = DEFAULT_MODE
    temperature: float = 0.0
    max_tokens: int = 64

    def __post_init__(self) -> None:
        if not 1 <= self.default_word_budget <= MAX_WORD_BUDGET:
            raise ConfigError(
                f"default_word_budget must be in 1..{MAX_WORD_BUDGET}, "
                f"got {self.default_word_budget}"
            )
        if self.default_mode not in RECOVERY_MODES:
            raise ConfigError(f"default_mode must be one of {RECOVERY_MODES}")
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")
        if not 0 < self.port < 65536:
            raise ConfigError(f"port {self.port} out of range")

    def endpoint(self) -> CloudEndpointConfig:
        return CloudEndpointConfig(
            base_url=self.cloud_base_url,
            model=self.cloud_model,
            auth_env_var=self.cloud_auth_env_var,
            timeout_s=self.cloud_timeout_s,
            max_continuation_tokens=self.max_continuation_tokens,
        )

    def public_dict(self) -> dict[str, Any]:
        return asdict(self)


def load_service_config(
    path: str | None = None, overrides: dict[str, Any] | None = None
) -> ServiceConfig:
    """Build config from an optional JSON file plus flag overrides.

    Referenced model and tokenizer files must exist — the service fails
    fast at startup rather than on the first request.
    """
    doc: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                doc = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    if overrides:
        doc.update({k: v for k, v in overrides.items() if v is not None})
    known = set(ServiceConfig.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"weights_path", "tokenizer_path"} - set(doc)
    if missing:
        raise ConfigError(f"config is missing required keys: {sorted(missing)}")
    config = ServiceConfig(**doc)
    for label, p in (("weights", config.weights_path), ("tokenizer", config.tokenizer_path)):
        if not Path(p).is_file():
            raise ConfigError(f"{label} file not found: {p}")
    return config


def format_sse(event_type: str, data: dict[str, Any]) -> str:
    return f"event: {event_type}\ndata: {json.dumps(data, sort_keys=True)}\n\n"


_END_OF_STREAM = object()


def create_app(
    config: ServiceConfig,
    *,
    model: Model | None = None,
    tokenizer: TokenizerModel | None = None,
    cloud_client: httpx.Client | None = None,
    clock: Callable[[], float] | None = None,
    session_counter: itertools.count | None = None,
) -> FastAPI:
    """Build the ASGI app. Tests may inject model, tokenizer, cloud client,
    and clock; production loads from the configured paths."""
    if model is None:
        model = load_model(config.weights_path)
    if tokenizer is None:
        tokenizer = load_tokenizer(config.tokenizer_path)
    if clock is None:
        clock = time.perf_counter
    counter = session_counter if session_counter is not None else itertools.count(1)

    app = FastAPI()

    @app.get("/v1/health")
    async def health() -> dict[str, str]:
        return {"status": "ok"}

    @app.get("/v1/config")
    async def get_config() -> dict[str, Any]:
        return config.public_dict()

    @app.post("/v1/respond")
    async def respond(request: Request):
        try:
            body = await request.json()
        except json.JSONDecodeError:
            return JSONResponse({"error": "body must be JSON"}, status_code=400)
        if not isinstance(body, dict):
            return JSONResponse({"error": "body must be a JSON object"}, status_code=400)
        query = body.get("query")
        if not isinstance(query, str) or not query.strip():
            return JSONResponse(
                {"error": "query must be a non-empty string"}, status_code=400
            )
        word_budget = body.get("word_budget", config.default_word_budget)
        if not isinstance(word_budget, int) or not 1 <= word_budget <= MAX_WORD_BUDGET:
            return JSONResponse(
                {"error": f"word_budget must be an integer in 1..{MAX_WORD_BUDGET}"},
                status_code=400,
            )
        mode = body.get("mode", config.default_mode)
        if mode not in RECOVERY_MODES:
            return JSONResponse(
                {"error": f"mode must be one of {list(RECOVERY_MODES)}"}, status_code=400
            )
        unknown = set(body) - {"query", "word_budget", "mode"}
        if unknown:
            return JSONResponse(
                {"error": f"unknown fields: {sorted(unknown)}"}, status_code=400
            )

        session_id = f"s{next(counter)}"
        return StreamingResponse(
            _session_stream(session_id, query, word_budget, mode),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-store", "X-Session-Id": session_id},
        )

    async def _session_stream(
        session_id: str, query: str, word_budget: int, mode: str
    ) -> AsyncIterator[str]:
        loop = asyncio.get_running_loop()
        queue: asyncio.Queue = asyncio.Queue()

        def sink(event: dict) -> None:
            loop.call_soon_threadsafe(queue.put_nowait, dict(event, session_id=session_id))

        def run() -> None:
            auth_token = (
                os.environ.get(config.cloud_auth_env_var)
                if config.cloud_auth_env_var
                else None
            )
            try:
                run_collaborative(
                    query,
                    word_budget,
                    mode,
                    model,
                    tokenizer,
                    config.endpoint(),
                    policy=SamplingPolicy(
                        temperature=config.temperature, max_tokens=config.max_tokens
                    ),
                    sink=sink,
                    cloud_client=cloud_client,
                    auth_token=auth_token,
                    clock=clock,
                )
            except Exception as e:  # surface as a terminal error event
                sink({"type": "error", "t_ms": None, "message": str(e), "kind": type(e).__name__})
            finally:
                loop.call_soon_threadsafe(queue.put_nowait, _END_OF_STREAM)

        task = loop.run_in_executor(None, run)
        try:
            while True:
                event = await queue.get()
                if event is _END_OF_STREAM:
                    break
                event_type = event.pop("type")
                yield format_sse(event_type, event)
        finally:
            await task

    return app

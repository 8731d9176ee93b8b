"""Commit-and-continue handoff from the device opener to a cloud continuator.

The device commits a short opener; this module asks a chat-completions
endpoint for the continuation, with the opener framed so the combined text
reads as one message. The opener is never edited: cloud output is appended
after a deterministic stitch rule, corrections are detected (or adjudicated)
rather than rewritten, and cloud failures degrade to the opener alone.
"""

from __future__ import annotations

import json
import time
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Iterable, Iterator

import httpx
import numpy as np

from .decoder import OpenerEvent, OpenerResult, SamplingPolicy, generate_opener
from .errors import (
    CloudProtocolError,
    CloudTimeoutError,
    CloudTransportError,
    ConfigError,
)
from .tokenizer import ChatTranscript, TokenizerModel, Turn

__all__ = [
    "RECOVERY_MODES",
    "RecoveryMode",
    "CloudEndpointConfig",
    "TextDelta",
    "ContinuationResult",
    "CollaborativeResult",
    "load_prompt",
    "build_continuation_prompt",
    "request_continuation",
    "stitch",
    "detect_correction",
    "run_collaborative",
]

RECOVERY_MODES = ("explicit_correction", "natural_recovery", "humor_aware")
RecoveryMode = str  # one of RECOVERY_MODES

CORRECTION_MARKER = "Correction:"

_MODE_FILES = {
    "explicit_correction": "mode_explicit.txt",
    "natural_recovery": "mode_natural.txt",
    "humor_aware": "mode_humor.txt",
}


def load_prompt(name: str) -> str:
    """Read one of the packaged prompt data files verbatim."""
    return (resources.files("microlm") / "prompts" / name).read_text(encoding="utf-8")


@dataclass(frozen=True)
class CloudEndpointConfig:
    """Where and how to reach the continuator."""

    base_url: str  # e.g. "https://host/v1"
    model: str
    auth_env_var: str | None = None  # env var holding the bearer token
    timeout_s: float = 30.0
    max_continuation_tokens: int = 512
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("base_url must be non-empty")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")
        if self.max_continuation_tokens < 1:
            raise ConfigError("max_continuation_tokens must be >= 1")


@dataclass(frozen=True)
class TextDelta:
    text: str
    t_ms: float  # since the continuation request was dispatched


@dataclass(frozen=True)
class ContinuationResult:
    text: str
    stitched_text: str
    corrected: bool
    correction_provenance: str  # "marker" | "adjudicated" | "unknown"
    ttfb_ms: float | None
    deltas_received: int


@dataclass(frozen=True)
class CollaborativeResult:
    opener: OpenerResult
    continuation: ContinuationResult | None
    metrics: dict


def build_continuation_prompt(
    query: str, opener_text: str, mode: RecoveryMode
) -> list[dict[str, str]]:
    """Chat messages instructing the continuator to pick up after the opener.

    The system message is the verbatim continuation instruction followed by
    the selected recovery mode's verbatim block; the user message carries the
    original query and the already-spoken opener in labelled sections.
    """
    if mode not in RECOVERY_MODES:
        raise ConfigError(f"unknown recovery mode {mode!r}; choose from {RECOVERY_MODES}")
    system = load_prompt("continuation.txt") + "\n" + load_prompt(_MODE_FILES[mode])
    user = (
        f"USER QUERY:\n{query}\n\n"
        f"ALREADY-SPOKEN OPENER:\n{opener_text}"
    )
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": user},
    ]


def _parse_sse_data_lines(lines: Iterable[str]) -> Iterator[str]:
    """Yield the payload of each `data:` line until the [DONE] sentinel."""
    for line in lines:
        line = line.strip("\r\n")
        if not line or not line.startswith("data:"):
            continue
        payload = line[len("data:"):].strip()
        if payload == "[DONE]":
            return
        yield payload


def request_continuation(
    messages: list[dict[str, str]],
    endpoint: CloudEndpointConfig,
    *,
    client: httpx.Client | None = None,
    auth_token: str | None = None,
    on_delta: Callable[[TextDelta], None] | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple[list[TextDelta], float | None]:
    """Stream a continuation from the chat-completions endpoint.

    Returns (deltas, time-to-first-byte ms). A transport failure before any
    delta arrives is retried once; after text has streamed it is surfaced as
    an error carrying the partial text, since a retry would duplicate what
    the user already saw. Timeouts behave the same way.
    """
    body = {
        "model": endpoint.model,
        "messages": messages,
        "stream": True,
        "temperature": endpoint.temperature,
        "max_tokens": endpoint.max_continuation_tokens,
    }
    headers = {"Accept": "text/event-stream"}
    if auth_token:
        headers["Authorization"] = f"Bearer {auth_token}"

    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=endpoint.timeout_s)

    def attempt() -> tuple[list[TextDelta], float | None]:
        deltas: list[TextDelta] = []
        ttfb: float | None = None
        t0 = clock()
        try:
            with client.stream(
                "POST",
                endpoint.base_url.rstrip("/") + "/chat/completions",
                json=body,
                headers=headers,
                timeout=endpoint.timeout_s,
            ) as response:
                if response.status_code != 200:
                    detail = response.read().decode("utf-8", errors="replace")
                    raise CloudProtocolError(
                        f"cloud endpoint returned {response.status_code}: {detail[:200]}",
                        status_code=response.status_code,
                    )
                for payload in _parse_sse_data_lines(response.iter_lines()):
                    try:
                        frame = json.loads(payload)
                        content = frame["choices"][0].get("delta", {}).get("content")
                    except (json.JSONDecodeError, LookupError, TypeError) as e:
                        raise CloudProtocolError(f"malformed stream frame: {e}") from e
                    if not content:
                        continue
                    t_ms = (clock() - t0) * 1000.0
                    if ttfb is None:
                        ttfb = t_ms
                    delta = TextDelta(text=content, t_ms=t_ms)
                    deltas.append(delta)
                    if on_delta is not None:
                        on_delta(delta)
        except httpx.TimeoutException as e:
            raise CloudTimeoutError(
                f"continuation timed out after {endpoint.timeout_s}s: {e}",
                partial_text="".join(d.text for d in deltas),
            ) from e
        except httpx.HTTPError as e:
            raise CloudTransportError(
                f"continuation transport failed: {e}",
                partial_text="".join(d.text for d in deltas),
            ) from e
        return deltas, ttfb

    try:
        try:
            return attempt()
        except CloudTransportError as e:
            if isinstance(e, CloudTimeoutError) or e.partial_text:
                raise
            return attempt()  # one retry, only when nothing streamed yet
    finally:
        if own_client:
            client.close()


def _punct_or_space(c: str) -> bool:
    return c.isspace() or unicodedata.category(c).startswith("P")


def stitch(opener_text: str, continuation_text: str) -> str:
    """Join opener and continuation with at most one separating space.

    No space is inserted when either side is empty or when the continuation
    begins with whitespace or punctuation.
    """
    if not opener_text or not continuation_text:
        return opener_text + continuation_text
    if _punct_or_space(continuation_text[0]):
        return opener_text + continuation_text
    return opener_text + " " + continuation_text


def detect_correction(
    continuation_text: str,
    mode: RecoveryMode,
    adjudicated: bool | None = None,
) -> bool | None:
    """Whether the continuation corrected the opener.

    Explicit mode is mechanical: some line starts with the correction
    marker. The other modes have no reliable textual signature, so the
    caller's adjudicated flag is passed through; None means unknown.
    """
    if mode not in RECOVERY_MODES:
        raise ConfigError(f"unknown recovery mode {mode!r}; choose from {RECOVERY_MODES}")
    if mode == "explicit_correction":
        return any(
            line.startswith(CORRECTION_MARKER)
            for line in continuation_text.splitlines()
        )
    return adjudicated


def _longest_common_prefix(a: str, b: str) -> int:
    n = min(len(a), len(b))
    i = 0
    while i < n and a[i] == b[i]:
        i += 1
    return i


def run_collaborative(
    query: str,
    word_budget: int,
    mode: RecoveryMode,
    model,
    tokenizer: TokenizerModel,
    endpoint: CloudEndpointConfig,
    *,
    policy: SamplingPolicy = SamplingPolicy(),
    sink: Callable[[dict], None] | None = None,
    cloud_client: httpx.Client | None = None,
    auth_token: str | None = None,
    rng: np.random.Generator | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> CollaborativeResult:
    """One full collaborative exchange for a single-turn query.

    Event stream (to `sink`): opener_token+ handoff
    (continuation_token | correction)* (done | error). The opener is
    committed before the cloud is contacted and survives any cloud failure.
    """
    t_request = clock()

    def emit(event_type: str, **fields) -> None:
        if sink is not None:
            sink({"type": event_type, "t_ms": (clock() - t_request) * 1000.0, **fields})

    transcript = ChatTranscript([Turn("user", query)])

    def opener_sink(ev: OpenerEvent) -> None:
        if sink is not None:
            sink(
                {
                    "type": "opener_token",
                    "text_delta": ev.text_delta,
                    "token_id": ev.token_id,
                    "t_ms": ev.t_ms,
                }
            )

    opener = generate_opener(
        model,
        tokenizer,
        transcript,
        word_budget,
        policy,
        sink=opener_sink,
        rng=rng,
        clock=clock,
    )
    t_finalized = clock()
    emit(
        "handoff",
        opener_text=opener.text,
        word_count=opener.word_count,
        stop_reason=opener.stop_reason,
        ttft_ms=opener.timing.prefill_ms + opener.timing.first_decode_ms,
    )
    t_dispatch = clock()

    messages = build_continuation_prompt(query, opener.text, mode)
    metrics: dict = {
        "ttft_ms": opener.timing.prefill_ms + opener.timing.first_decode_ms,
        "opener_total_ms": opener.timing.total_ms,
        "handoff_dispatch_delay_ms": (t_dispatch - t_finalized) * 1000.0,
    }

    correction_seen = False

    def on_delta(delta: TextDelta) -> None:
        nonlocal correction_seen
        emit("continuation_token", text_delta=delta.text)
        if (
            not correction_seen
            and mode == "explicit_correction"
            and detect_correction(_partial_text(), mode)
        ):
            correction_seen = True
            emit("correction", provenance="marker")

    received: list[TextDelta] = []

    def _partial_text() -> str:
        return "".join(d.text for d in received)

    def collecting(delta: TextDelta) -> None:
        received.append(delta)
        on_delta(delta)

    try:
        deltas, ttfb = request_continuation(
            messages,
            endpoint,
            client=cloud_client,
            auth_token=auth_token,
            on_delta=collecting,
            clock=clock,
        )
    except (CloudTransportError, CloudProtocolError) as e:
        partial = getattr(e, "partial_text", "")
        continuation = None
        if partial:
            corrected = detect_correction(partial, mode)
            continuation = ContinuationResult(
                text=partial,
                stitched_text=stitch(opener.text, partial),
                corrected=bool(corrected),
                correction_provenance=(
                    "marker" if mode == "explicit_correction" else "unknown"
                ),
                ttfb_ms=received[0].t_ms if received else None,
                deltas_received=len(received),
            )
        metrics["cloud_error"] = str(e)
        emit("error", message=str(e), kind=type(e).__name__)
        return CollaborativeResult(opener=opener, continuation=continuation, metrics=metrics)

    text = "".join(d.text for d in deltas)
    corrected = detect_correction(text, mode)
    provenance = "unknown"
    if mode == "explicit_correction":
        provenance = "marker"
    elif corrected is not None:
        provenance = "adjudicated"
    stitched = stitch(opener.text, text)

    lcp = _longest_common_prefix(opener.text, text)
    metrics["cloud_ttfb_ms"] = ttfb
    metrics["opener_continuation_lcp_chars"] = lcp
    metrics["duplication_warning"] = bool(opener.text) and lcp == len(opener.text)

    emit(
        "done",
        stitched_text=stitched,
        corrected=bool(corrected),
        correction_provenance=provenance,
        cloud_ttfb_ms=ttfb,
        duplication_warning=metrics["duplication_warning"],
    )
    return CollaborativeResult(
        opener=opener,
        continuation=ContinuationResult(
            text=text,
            stitched_text=stitched,
            corrected=bool(corrected),
            correction_provenance=provenance,
            ttfb_ms=ttfb,
            deltas_received=len(deltas),
        ),
        metrics=metrics,
    )

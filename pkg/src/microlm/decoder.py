"""Budgeted greedy/sampled decoding with an irrevocable streaming commit.

`generate_opener` produces the device-side opener: at most `word_budget`
whitespace-delimited words, streamed to a sink as tokens land and never
retracted. Committed text is always a character prefix of what unbounded
decoding with the same policy would produce, so a later continuation can be
appended without edits.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np

from .errors import ConfigError, ContextOverflowError, DomainError
from .kernels import softmax
from .tokenizer import ChatTranscript, StreamingDecoder, TokenizerModel, render_chat

__all__ = [
    "SamplingPolicy",
    "OpenerTiming",
    "OpenerEvent",
    "OpenerResult",
    "TokenSource",
    "MAX_WORD_BUDGET",
    "sample",
    "count_words",
    "generate_opener",
]

MAX_WORD_BUDGET = 32

_WORD_RE = re.compile(r"\S+")


class TokenSource(Protocol):
    """The model surface the decoder needs: prompt prefill + stepwise decode."""

    def prefill(self, tokens: list[int]) -> tuple[np.ndarray, object]: ...

    def decode_step(self, token: int, cache: object) -> np.ndarray: ...


@dataclass(frozen=True)
class SamplingPolicy:
    temperature: float = 0.0
    max_tokens: int = 64

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class OpenerTiming:
    prefill_ms: float
    first_decode_ms: float
    total_ms: float


@dataclass(frozen=True)
class OpenerEvent:
    """One streamed increment of committed opener text."""

    type: str  # always "opener_token"
    text_delta: str
    token_id: int
    t_ms: float  # since the request was received


@dataclass(frozen=True)
class OpenerResult:
    text: str
    token_ids: tuple[int, ...]
    word_count: int
    stop_reason: str  # "word_budget" | "end_token" | "max_tokens"
    timing: OpenerTiming


def sample(logits: np.ndarray, policy: SamplingPolicy, rng: np.random.Generator | None = None) -> int:
    """Pick a token id: argmax at temperature 0 (lowest index on ties),
    otherwise a categorical draw from softmax(logits / T)."""
    logits = np.asarray(logits, dtype=np.float32)
    if logits.ndim != 1 or logits.size == 0:
        raise DomainError(f"logits must be a non-empty vector, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise DomainError("logits contain non-finite values")
    if policy.temperature == 0.0:
        return int(np.argmax(logits))
    if rng is None:
        rng = np.random.default_rng()
    probs = softmax(logits / np.float32(policy.temperature))
    probs = probs.astype(np.float64)
    probs /= probs.sum()
    return int(rng.choice(logits.size, p=probs))


def count_words(text: str) -> int:
    """Number of maximal non-whitespace runs (Unicode whitespace)."""
    return len(text.split())


def _commit_boundary(text: str, budget: int | None) -> tuple[int, bool]:
    """How much of `text` is safely committable right now.

    Returns (offset, budget_hit). Everything up to the end of the last word
    is committable while the word count stays within budget; trailing
    whitespace is withheld until a following word proves it interior. Once
    the budget-th word is closed — by trailing whitespace or by a further
    word — the commit is frozen at that word's end.
    """
    spans = [m.span() for m in _WORD_RE.finditer(text)]
    if budget is not None and len(spans) > budget:
        return spans[budget - 1][1], True
    if not spans:
        return 0, False
    last_end = spans[-1][1]
    if budget is not None and len(spans) == budget and last_end < len(text):
        # budget-th word closed by trailing whitespace
        return last_end, True
    return last_end, False


def generate_opener(
    model: TokenSource,
    tokenizer: TokenizerModel,
    transcript: ChatTranscript,
    word_budget: int | None,
    policy: SamplingPolicy = SamplingPolicy(),
    *,
    sink: Callable[[OpenerEvent], None] | None = None,
    rng: np.random.Generator | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> OpenerResult:
    """Generate the opener for the final user turn of `transcript`.

    Decoding stops when a token completion would exceed `word_budget` words
    (pass None for unbounded), when the end-of-turn token appears, or at
    `policy.max_tokens`. Each committed increment goes to `sink` as it
    lands; the concatenated deltas equal the returned text exactly. Only
    whole UTF-8 characters are ever committed.
    """
    if word_budget is not None and not 1 <= word_budget <= MAX_WORD_BUDGET:
        raise ConfigError(
            f"word_budget must be in 1..{MAX_WORD_BUDGET} or None, got {word_budget}"
        )
    prompt_ids = render_chat(tokenizer, transcript, add_generation_prefix=True)
    end_id = tokenizer.end_id

    t_start = clock()
    logits, cache = model.prefill(prompt_ids)
    t_prefill = clock()

    sdec = StreamingDecoder(tokenizer)
    raw = ""  # decoded text so far, including withheld tail
    committed = 0  # chars of raw committed/emitted
    token_char_end: list[tuple[int, int]] = []  # (token_id, raw offset after it)
    stop_reason = "max_tokens"
    first_decode_ms: float | None = None

    def emit(upto: int, token_id: int) -> None:
        nonlocal committed
        delta = raw[committed:upto]
        committed = upto
        if sink is not None:
            sink(
                OpenerEvent(
                    type="opener_token",
                    text_delta=delta,
                    token_id=token_id,
                    t_ms=(clock() - t_start) * 1000.0,
                )
            )

    for step in range(policy.max_tokens):
        token_id = sample(logits, policy, rng)
        if first_decode_ms is None:
            first_decode_ms = (clock() - t_prefill) * 1000.0
        if token_id == end_id:
            stop_reason = "end_token"
            break
        raw += sdec.feed(token_id)
        token_char_end.append((token_id, len(raw)))
        boundary, budget_hit = _commit_boundary(raw, word_budget)
        if budget_hit:
            if boundary > committed:
                emit(boundary, token_id)
            stop_reason = "word_budget"
            break
        if boundary > committed:
            emit(boundary, token_id)
        if step + 1 < policy.max_tokens:
            try:
                logits = model.decode_step(token_id, cache)
            except ContextOverflowError:
                # context exhausted mid-generation: the committed opener is
                # complete, so stop as if the token ceiling had been reached
                break

    if stop_reason in ("end_token", "max_tokens"):
        # the trailing run is final: commit it (whole characters only; an
        # incomplete multi-byte tail stays uncommitted)
        boundary, _ = _commit_boundary(raw, None)
        if boundary > committed:
            emit(boundary, token_char_end[-1][0] if token_char_end else end_id)

    if sink is not None and committed == 0:
        # nothing committable was generated: one empty delta marks
        # finalization for consumers whose event grammar requires at least
        # one opener token
        emit(0, token_char_end[-1][0] if token_char_end else end_id)

    t_total = clock()
    text = raw[:committed]
    # a token contributed iff any of its characters landed within the commit
    contributing: list[int] = []
    prev_end = 0
    for tid, end in token_char_end:
        if prev_end < committed and end > prev_end:
            contributing.append(tid)
        prev_end = end
    return OpenerResult(
        text=text,
        token_ids=tuple(contributing),
        word_count=count_words(text),
        stop_reason=stop_reason,
        timing=OpenerTiming(
            prefill_ms=(t_prefill - t_start) * 1000.0,
            first_decode_ms=first_decode_ms if first_decode_ms is not None else 0.0,
            total_ms=(t_total - t_start) * 1000.0,
        ),
    )

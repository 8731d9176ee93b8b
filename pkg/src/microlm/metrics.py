"""Latency, throughput, energy, and correction-rate accounting.

All functions are pure: they read timelines and counters, never clocks.
Timestamps are milliseconds on one monotonic axis; spans are differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DomainError, IncompleteTimelineError, ProvenanceError

__all__ = [
    "SessionTimeline",
    "EnergyReading",
    "Throughputs",
    "compute_ttft",
    "compute_time_to_n_words",
    "word_completion_times",
    "compute_throughputs",
    "compute_dynamic_energy",
    "compute_correction_rate",
    "format_rate",
]


@dataclass(frozen=True)
class SessionTimeline:
    """Monotonic millisecond timestamps for one generation session.

    `token_times[i]` is when generated token i was committed;
    `word_times[i]` is when word i+1 received its final character.
    Optional cloud-side stamps stay None for standalone runs.
    """

    request_received: float
    prefill_done: float | None = None
    first_token: float | None = None
    token_times: tuple[float, ...] = ()
    word_times: tuple[float, ...] = ()
    handoff_dispatched: float | None = None
    cloud_first_byte: float | None = None
    done: float | None = None
    prompt_tokens: int = 0
    generated_tokens: int = 0

    def __post_init__(self) -> None:
        stamps = [self.request_received]
        for v in (self.prefill_done, self.first_token):
            if v is not None:
                stamps.append(v)
        stamps.extend(self.token_times)
        for v in (self.handoff_dispatched, self.cloud_first_byte, self.done):
            if v is not None:
                stamps.append(v)
        if any(b < a for a, b in zip(stamps, stamps[1:])):
            raise DomainError("timeline timestamps must be non-decreasing")
        if any(b < a for a, b in zip(self.word_times, self.word_times[1:])):
            raise DomainError("word completion times must be non-decreasing")


def compute_ttft(timeline: SessionTimeline) -> float:
    """Milliseconds from request arrival to the first committed token."""
    if timeline.first_token is None:
        raise IncompleteTimelineError("timeline has no first_token stamp")
    return timeline.first_token - timeline.request_received


def compute_time_to_n_words(timeline: SessionTimeline, n: int) -> float | None:
    """Milliseconds until the n-th word's final token committed.

    Returns None when fewer than n words were generated. n == 0 is 0 by
    convention.
    """
    if n < 0:
        raise DomainError(f"n must be non-negative, got {n}")
    if n == 0:
        return 0.0
    if len(timeline.word_times) < n:
        return None
    return timeline.word_times[n - 1] - timeline.request_received


def word_completion_times(
    deltas: list[tuple[str, float]], final_text: str
) -> list[float]:
    """Per-word completion stamps from streamed (text_delta, t_ms) pairs.

    Word k completes at the stamp of the delta that carried its final
    character of `final_text`. Deltas must concatenate to `final_text`.
    """
    joined = "".join(d for d, _ in deltas)
    if joined != final_text:
        raise DomainError("deltas do not concatenate to the final text")
    # end offset of each word in the final text
    ends: list[int] = []
    in_word = False
    for i, c in enumerate(final_text):
        if c.isspace():
            in_word = False
        else:
            if not in_word:
                ends.append(i + 1)
                in_word = True
            else:
                ends[-1] = i + 1
    times: list[float] = []
    pos = 0
    wi = 0
    for text, t in deltas:
        pos += len(text)
        while wi < len(ends) and ends[wi] <= pos:
            times.append(t)
            wi += 1
    return times


@dataclass(frozen=True)
class Throughputs:
    prompt_tps: float
    generation_tps: float
    end_to_end_tps: float


def compute_throughputs(timeline: SessionTimeline) -> Throughputs:
    """Prompt, generation, and end-to-end tokens per second.

    Prompt throughput covers the prefill span, generation throughput the
    decode span, end-to-end the whole request.
    """
    if timeline.prefill_done is None or timeline.done is None:
        raise IncompleteTimelineError("timeline needs prefill_done and done stamps")
    prefill_span_s = (timeline.prefill_done - timeline.request_received) / 1000.0
    decode_span_s = (timeline.done - timeline.prefill_done) / 1000.0
    total_span_s = (timeline.done - timeline.request_received) / 1000.0
    if prefill_span_s <= 0 or decode_span_s <= 0 or total_span_s <= 0:
        raise DomainError("throughput spans must be positive")
    if timeline.prompt_tokens <= 0 or timeline.generated_tokens <= 0:
        raise DomainError("token counts must be positive")
    return Throughputs(
        prompt_tps=timeline.prompt_tokens / prefill_span_s,
        generation_tps=timeline.generated_tokens / decode_span_s,
        end_to_end_tps=(timeline.prompt_tokens + timeline.generated_tokens) / total_span_s,
    )


@dataclass(frozen=True)
class EnergyReading:
    """Cumulative meter counters around a benchmark window."""

    before_mj: float
    after_mj: float
    duration_s: float
    idle_power_mw: float

    def __post_init__(self) -> None:
        if self.after_mj < self.before_mj:
            raise DomainError("energy counter must not decrease")
        if self.duration_s <= 0:
            raise DomainError("duration must be positive")
        if self.idle_power_mw < 0:
            raise DomainError("idle power must be non-negative")


def compute_dynamic_energy(reading: EnergyReading, generated_tokens: int) -> float:
    """Dynamic (above-idle) millijoules per generated token, floored at 0.

    Subtracts the idle baseline (idle mW x duration s = mJ) from the
    measured counter delta.
    """
    if generated_tokens <= 0:
        raise DomainError(f"generated_tokens must be positive, got {generated_tokens}")
    dynamic_mj = (reading.after_mj - reading.before_mj) - (
        reading.idle_power_mw * reading.duration_s
    )
    return max(0.0, dynamic_mj) / generated_tokens


def compute_correction_rate(corrected_flags: list[bool | None]) -> float:
    """Percentage of sessions whose continuation corrected the opener.

    Every flag must be definite (explicit-mode marker or adjudicated); an
    unknown flag cannot be silently counted either way.
    """
    if not corrected_flags:
        raise DomainError("no sessions to rate")
    if any(flag is None for flag in corrected_flags):
        raise ProvenanceError(
            "correction rate needs definite flags; adjudicate non-explicit modes first"
        )
    return 100.0 * sum(1 for f in corrected_flags if f) / len(corrected_flags)


def format_rate(rate_percent: float) -> str:
    """One-decimal percentage string, e.g. 8.4 -> '8.4%'."""
    return f"{rate_percent:.1f}%"

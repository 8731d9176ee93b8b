"""Latency, throughput, energy, and correction-rate computations."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microlm.errors import DomainError, IncompleteTimelineError, ProvenanceError
from microlm.metrics import (
    EnergyReading,
    SessionTimeline,
    compute_correction_rate,
    compute_dynamic_energy,
    compute_throughputs,
    compute_time_to_n_words,
    compute_ttft,
    format_rate,
    word_completion_times,
)


def timeline(**kw) -> SessionTimeline:
    defaults = dict(request_received=42.0)
    defaults.update(kw)
    return SessionTimeline(**defaults)


class TestTtft:
    def test_simple_difference(self):
        tl = timeline(request_received=42.0, prefill_done=44.0, first_token=45.0)
        assert compute_ttft(tl) == 3.0

    def test_requires_first_token(self):
        with pytest.raises(IncompleteTimelineError):
            compute_ttft(timeline())

    def test_zero_latency_allowed(self):
        tl = timeline(request_received=10.0, first_token=10.0)
        assert compute_ttft(tl) == 0.0


class TestTimeToNWords:
    def test_fourth_word(self):
        tl = timeline(
            request_received=100.0,
            word_times=(110.0, 120.0, 140.0, 155.0, 170.0),
        )
        assert compute_time_to_n_words(tl, 4) == 55.0

    def test_zero_words_is_zero(self):
        assert compute_time_to_n_words(timeline(), 0) == 0.0

    def test_not_enough_words_is_none(self):
        tl = timeline(request_received=0.0, word_times=(1.0, 2.0))
        assert compute_time_to_n_words(tl, 4) is None

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            compute_time_to_n_words(timeline(), -1)


class TestTimelineValidation:
    def test_monotonicity_enforced(self):
        with pytest.raises(DomainError):
            timeline(request_received=10.0, prefill_done=5.0)
        with pytest.raises(DomainError):
            timeline(request_received=0.0, word_times=(3.0, 2.0))
        with pytest.raises(DomainError):
            timeline(
                request_received=0.0,
                prefill_done=1.0,
                first_token=2.0,
                token_times=(2.0, 1.5),
            )

    def test_optional_stamps_may_be_none(self):
        tl = timeline(request_received=1.0, done=9.0)
        assert tl.cloud_first_byte is None


class TestWordCompletionTimes:
    def test_stamps_from_deltas(self):
        deltas = [("Vin", 10.0), ("cent ", 20.0), ("van ", 30.0), ("Gogh", 40.0)]
        times = word_completion_times(deltas, "Vincent van Gogh")
        assert times == [20.0, 30.0, 40.0]

    def test_one_delta_many_words(self):
        times = word_completion_times([("one two three", 7.0)], "one two three")
        assert times == [7.0, 7.0, 7.0]

    def test_word_completed_by_following_space(self):
        # the space after "hi" arrives in a later delta; "hi" was already
        # complete at its final character
        times = word_completion_times([("hi", 1.0), (" there", 2.0)], "hi there")
        assert times == [1.0, 2.0]

    def test_empty(self):
        assert word_completion_times([], "") == []

    def test_mismatch_rejected(self):
        with pytest.raises(DomainError):
            word_completion_times([("ab", 1.0)], "abc")

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.text(max_size=6), max_size=8))
    def test_property_count_matches_split(self, pieces):
        text = "".join(pieces)
        deltas = [(p, float(i)) for i, p in enumerate(pieces)]
        times = word_completion_times(deltas, text)
        assert len(times) == len(text.split())
        assert times == sorted(times)


class TestThroughputs:
    def test_published_style_numbers(self):
        # 1000 prompt tokens prefilled in 1 s; 351 generated in 1 s
        tl = timeline(
            request_received=0.0,
            prefill_done=1000.0,
            first_token=1000.0,
            done=2000.0,
            prompt_tokens=1000,
            generated_tokens=351,
        )
        tp = compute_throughputs(tl)
        assert tp.prompt_tps == pytest.approx(1000.0)
        assert tp.generation_tps == pytest.approx(351.0)
        assert tp.end_to_end_tps == pytest.approx(1351.0 / 2.0)

    def test_requires_stamps(self):
        with pytest.raises(IncompleteTimelineError):
            compute_throughputs(timeline(prompt_tokens=1, generated_tokens=1))

    def test_rejects_zero_span(self):
        tl = timeline(
            request_received=0.0,
            prefill_done=0.0,
            done=5.0,
            prompt_tokens=4,
            generated_tokens=2,
        )
        with pytest.raises(DomainError):
            compute_throughputs(tl)

    def test_rejects_zero_tokens(self):
        tl = timeline(
            request_received=0.0,
            prefill_done=1.0,
            done=5.0,
            prompt_tokens=0,
            generated_tokens=2,
        )
        with pytest.raises(DomainError):
            compute_throughputs(tl)


class TestDynamicEnergy:
    def test_idle_subtraction(self):
        # 10_000 mJ consumed over 10 s with a 500 mW idle floor leaves
        # 5_000 mJ dynamic across 161 tokens
        reading = EnergyReading(
            before_mj=20_000.0, after_mj=30_000.0, duration_s=10.0, idle_power_mw=500.0
        )
        assert compute_dynamic_energy(reading, 161) == pytest.approx(5000.0 / 161)

    def test_known_per_token_value(self):
        # 31 mJ/token: 6200 mJ dynamic over 200 tokens
        reading = EnergyReading(
            before_mj=0.0, after_mj=7200.0, duration_s=10.0, idle_power_mw=100.0
        )
        assert compute_dynamic_energy(reading, 200) == pytest.approx(31.0)

    def test_floors_at_zero(self):
        reading = EnergyReading(
            before_mj=0.0, after_mj=100.0, duration_s=10.0, idle_power_mw=500.0
        )
        assert compute_dynamic_energy(reading, 10) == 0.0

    def test_counter_must_not_decrease(self):
        with pytest.raises(DomainError):
            EnergyReading(before_mj=5.0, after_mj=4.0, duration_s=1.0, idle_power_mw=0.0)

    def test_tokens_positive(self):
        reading = EnergyReading(
            before_mj=0.0, after_mj=1.0, duration_s=1.0, idle_power_mw=0.0
        )
        with pytest.raises(DomainError):
            compute_dynamic_energy(reading, 0)


class TestCorrectionRate:
    def test_published_style_rates(self):
        assert format_rate(compute_correction_rate([True] * 37 + [False] * 963)) == "3.7%"
        assert format_rate(compute_correction_rate([True] * 84 + [False] * 916)) == "8.4%"
        assert format_rate(compute_correction_rate([True] * 164 + [False] * 836)) == "16.4%"

    def test_all_or_nothing(self):
        assert compute_correction_rate([True, True]) == 100.0
        assert compute_correction_rate([False, False]) == 0.0

    def test_unknown_flag_rejected(self):
        with pytest.raises(ProvenanceError):
            compute_correction_rate([True, None, False])

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            compute_correction_rate([])

    def test_format_rounding(self):
        assert format_rate(8.44) == "8.4%"
        assert format_rate(8.45) == "8.4%" or format_rate(8.45) == "8.5%"  # banker's
        assert format_rate(16.399) == "16.4%"
        assert format_rate(0.0) == "0.0%"
        assert format_rate(100.0) == "100.0%"

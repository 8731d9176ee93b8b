"""Cloud handoff: prompt assembly, streaming client, stitching, corrections."""

from __future__ import annotations

import httpx
import pytest

from microlm.errors import (
    CloudProtocolError,
    CloudTimeoutError,
    CloudTransportError,
    ConfigError,
)
from microlm.handoff import (
    CORRECTION_MARKER,
    RECOVERY_MODES,
    CloudEndpointConfig,
    build_continuation_prompt,
    detect_correction,
    load_prompt,
    request_continuation,
    run_collaborative,
    stitch,
)

from .conftest import (
    flaky_then_good_client,
    mid_stream_failing_client,
    mock_cloud_client,
    scripted_model_for_text,
)

ENDPOINT = CloudEndpointConfig(base_url="http://cloud.test/v1", model="continuator-1")


class TestPrompts:
    def test_continuation_instruction_contract(self):
        text = load_prompt("continuation.txt")
        assert "Continue the assistant's answer after an already-spoken opener." in text
        assert "concatenated immediately after the opener" in text
        assert "Do NOT restate the opener" in text

    def test_explicit_mode_names_the_marker(self):
        text = load_prompt("mode_explicit.txt")
        assert 'start a new line with "Correction: "' in text

    def test_natural_mode_contract(self):
        text = load_prompt("mode_natural.txt")
        assert "HUMAN SELF-REPAIR pivot" in text
        assert "Do NOT explain the mistake. Just pivot." in text

    def test_humor_mode_contract(self):
        text = load_prompt("mode_humor.txt")
        assert "deliberate creative detour" in text
        assert "Start a NEW LINE." in text

    def test_build_prompt_layout(self):
        msgs = build_continuation_prompt("why is the sky blue", "The sky is", "explicit_correction")
        assert [m["role"] for m in msgs] == ["system", "user"]
        system = msgs[0]["content"]
        assert system == load_prompt("continuation.txt") + "\n" + load_prompt("mode_explicit.txt")
        user = msgs[1]["content"]
        assert user == (
            "USER QUERY:\nwhy is the sky blue\n\n"
            "ALREADY-SPOKEN OPENER:\nThe sky is"
        )

    def test_build_prompt_mode_selection(self):
        for mode, needle in (
            ("explicit_correction", "Correction: "),
            ("natural_recovery", "SELF-REPAIR"),
            ("humor_aware", "creative detour"),
        ):
            msgs = build_continuation_prompt("q", "o", mode)
            assert needle in msgs[0]["content"]

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            build_continuation_prompt("q", "o", "sarcastic")


class TestStitch:
    def test_space_between_words(self):
        assert (
            stitch("Vincent van Gogh was a significant figure in", "the development of modern art")
            == "Vincent van Gogh was a significant figure in the development of modern art"
        )

    def test_no_space_before_leading_whitespace(self):
        assert stitch("Hello", " world") == "Hello world"
        assert stitch("Hello", "\nworld") == "Hello\nworld"

    def test_no_space_before_punctuation(self):
        assert stitch("It is", ", however, true") == "It is, however, true"
        assert stitch("Wait", "—no") == "Wait—no"
        # quotes are punctuation too: the rule never inserts a space there
        assert stitch("He said", '"go"') == 'He said"go"'

    def test_empty_sides(self):
        assert stitch("", "continuation") == "continuation"
        assert stitch("opener", "") == "opener"
        assert stitch("", "") == ""

    def test_fragment_completion_reads_as_one_text(self):
        opener = "The size of a space"
        continuation = (
            "needle is determined by its structural design—oh wait, we're "
            "talking age, not size! The Space Needle in Seattle opened in 1962."
        )
        stitched = stitch(opener, continuation)
        assert stitched.startswith("The size of a space needle is determined")
        assert opener == stitched[: len(opener)]


class TestDetectCorrection:
    def test_marker_on_first_line(self):
        assert detect_correction(
            "Correction: TFLite Micro is not a company, it is a framework.",
            "explicit_correction",
        ) is True

    def test_marker_on_later_line(self):
        text = "finishing the sentence.\nCorrection: the premise was wrong."
        assert detect_correction(text, "explicit_correction") is True

    def test_no_marker(self):
        assert detect_correction("All good, continuing.", "explicit_correction") is False

    def test_indented_marker_does_not_count(self):
        assert detect_correction("  Correction: nope", "explicit_correction") is False

    def test_mid_line_marker_does_not_count(self):
        assert (
            detect_correction("I note a Correction: here", "explicit_correction") is False
        )

    def test_marker_constant(self):
        assert CORRECTION_MARKER == "Correction:"

    def test_other_modes_pass_through_adjudication(self):
        for mode in ("natural_recovery", "humor_aware"):
            assert detect_correction("anything", mode) is None
            assert detect_correction("anything", mode, adjudicated=True) is True
            assert detect_correction("anything", mode, adjudicated=False) is False

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            detect_correction("x", "nope")


class TestRequestContinuation:
    def test_streams_deltas_in_order(self):
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        client = mock_cloud_client(["the ", "answer ", "is 42."])
        deltas, ttfb = request_continuation(msgs, ENDPOINT, client=client)
        assert [d.text for d in deltas] == ["the ", "answer ", "is 42."]
        assert ttfb is not None and ttfb >= 0
        assert [d.t_ms for d in deltas] == sorted(d.t_ms for d in deltas)

    def test_request_body_shape(self):
        recorder: list = []
        client = mock_cloud_client(["x"], recorder=recorder)
        msgs = build_continuation_prompt("q", "o", "humor_aware")
        endpoint = CloudEndpointConfig(
            base_url="http://cloud.test/v1",
            model="continuator-1",
            temperature=0.0,
            max_continuation_tokens=99,
        )
        request_continuation(msgs, endpoint, client=client)
        body = recorder[0]
        assert body["model"] == "continuator-1"
        assert body["stream"] is True
        assert body["temperature"] == 0.0
        assert body["max_tokens"] == 99
        assert body["messages"] == msgs

    def test_auth_header_sent_when_token_given(self):
        seen: dict = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["auth"] = request.headers.get("authorization")
            from .conftest import sse_payload

            return httpx.Response(200, content=sse_payload(["ok"]))

        client = httpx.Client(transport=httpx.MockTransport(handler))
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        request_continuation(msgs, ENDPOINT, client=client, auth_token="sekrit")
        assert seen["auth"] == "Bearer sekrit"

    def test_non_200_raises_protocol_error(self):
        client = mock_cloud_client([], status=401)
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        with pytest.raises(CloudProtocolError) as ei:
            request_continuation(msgs, ENDPOINT, client=client)
        assert ei.value.status_code == 401

    def test_malformed_frame_raises_protocol_error(self):
        def handler(request: httpx.Request) -> httpx.Response:
            return httpx.Response(200, content=b"data: {not json}\n\ndata: [DONE]\n\n")

        client = httpx.Client(transport=httpx.MockTransport(handler))
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        with pytest.raises(CloudProtocolError):
            request_continuation(msgs, ENDPOINT, client=client)

    def test_retry_once_when_nothing_streamed(self):
        client, attempts = flaky_then_good_client(["recovered"], failures=1)
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        deltas, _ = request_continuation(msgs, ENDPOINT, client=client)
        assert [d.text for d in deltas] == ["recovered"]
        assert len(attempts) == 2

    def test_no_second_retry(self):
        client, attempts = flaky_then_good_client(["never"], failures=2)
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        with pytest.raises(CloudTransportError):
            request_continuation(msgs, ENDPOINT, client=client)
        assert len(attempts) == 2

    def test_mid_stream_failure_not_retried_and_keeps_partial(self):
        exc = httpx.ReadError("connection reset")
        client = mid_stream_failing_client(["partial ", "text "], exc)
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        with pytest.raises(CloudTransportError) as ei:
            request_continuation(msgs, ENDPOINT, client=client)
        assert ei.value.partial_text == "partial text "

    def test_timeout_is_never_retried(self):
        calls: list = []

        def handler(request: httpx.Request) -> httpx.Response:
            calls.append(1)
            raise httpx.ReadTimeout("too slow", request=request)

        client = httpx.Client(transport=httpx.MockTransport(handler))
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        with pytest.raises(CloudTimeoutError):
            request_continuation(msgs, ENDPOINT, client=client)
        assert len(calls) == 1

    def test_mid_stream_timeout_keeps_partial(self):
        exc = httpx.ReadTimeout("stalled")
        client = mid_stream_failing_client(["got this far "], exc)
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        with pytest.raises(CloudTimeoutError) as ei:
            request_continuation(msgs, ENDPOINT, client=client)
        assert ei.value.partial_text == "got this far "

    def test_on_delta_callback_sees_stream(self):
        seen: list[str] = []
        client = mock_cloud_client(["a", "b"])
        msgs = build_continuation_prompt("q", "o", "explicit_correction")
        request_continuation(msgs, ENDPOINT, client=client, on_delta=lambda d: seen.append(d.text))
        assert seen == ["a", "b"]

    def test_endpoint_validation(self):
        with pytest.raises(ConfigError):
            CloudEndpointConfig(base_url="", model="m")
        with pytest.raises(ConfigError):
            CloudEndpointConfig(base_url="http://x", model="m", timeout_s=0)


def grammar_of(events: list[dict]) -> str:
    """Compress an event list to a symbol string for grammar checks."""
    symbols = {
        "opener_token": "o",
        "handoff": "h",
        "continuation_token": "c",
        "correction": "x",
        "done": "d",
        "error": "e",
    }
    return "".join(symbols[e["type"]] for e in events)


class TestRunCollaborative:
    def run(self, small_tokenizer, *, opener_text="The sky is blue because of",
            cloud=("Rayleigh ", "scattering."), mode="explicit_correction",
            budget=6, client=None, **kw):
        model = scripted_model_for_text(small_tokenizer, opener_text)
        events: list[dict] = []
        result = run_collaborative(
            "why is the sky blue",
            budget,
            mode,
            model,
            small_tokenizer,
            ENDPOINT,
            sink=events.append,
            cloud_client=client if client is not None else mock_cloud_client(list(cloud)),
            **kw,
        )
        return result, events

    def test_event_grammar_success(self, small_tokenizer):
        import re

        _, events = self.run(small_tokenizer)
        assert re.fullmatch(r"o+h[cx]*d", grammar_of(events))

    def test_event_grammar_failure(self, small_tokenizer):
        import re

        client, _ = flaky_then_good_client([], failures=5)
        result, events = self.run(small_tokenizer, client=client)
        assert re.fullmatch(r"o+he", grammar_of(events))
        assert result.continuation is None
        assert result.opener.text  # opener survives

    def test_opener_respects_budget(self, small_tokenizer):
        result, _ = self.run(small_tokenizer, budget=3)
        assert result.opener.word_count <= 3

    def test_handoff_event_fields(self, small_tokenizer):
        result, events = self.run(small_tokenizer)
        handoff = next(e for e in events if e["type"] == "handoff")
        assert handoff["opener_text"] == result.opener.text
        assert handoff["word_count"] == result.opener.word_count
        assert handoff["stop_reason"] == result.opener.stop_reason
        assert handoff["ttft_ms"] >= 0

    def test_stitched_output(self, small_tokenizer):
        result, events = self.run(small_tokenizer)
        done = events[-1]
        assert done["type"] == "done"
        expected = stitch(result.opener.text, result.continuation.text)
        assert result.continuation.stitched_text == expected
        assert done["stitched_text"] == expected

    def test_correction_event_mid_stream(self, small_tokenizer):
        result, events = self.run(
            small_tokenizer,
            cloud=("finishing the thought.\n", "Correction: ", "the opener was wrong."),
        )
        kinds = grammar_of(events)
        assert "x" in kinds
        # correction event fires after the delta that completed the marker
        xi = kinds.index("x")
        assert kinds[xi - 1] == "c"
        assert result.continuation.corrected is True
        assert result.continuation.correction_provenance == "marker"

    def test_no_correction_event_without_marker(self, small_tokenizer):
        result, events = self.run(small_tokenizer)
        assert "x" not in grammar_of(events)
        assert result.continuation.corrected is False

    def test_duplication_warning_fires_on_echo(self, small_tokenizer):
        result, events = self.run(
            small_tokenizer,
            cloud=("The sky is blue because of", " Rayleigh scattering."),
        )
        assert result.metrics["duplication_warning"] is True
        assert events[-1]["duplication_warning"] is True

    def test_no_duplication_warning_normally(self, small_tokenizer):
        result, _ = self.run(small_tokenizer)
        assert result.metrics["duplication_warning"] is False

    def test_metrics_keys(self, small_tokenizer):
        result, _ = self.run(small_tokenizer)
        for key in (
            "ttft_ms",
            "opener_total_ms",
            "handoff_dispatch_delay_ms",
            "cloud_ttfb_ms",
            "opener_continuation_lcp_chars",
            "duplication_warning",
        ):
            assert key in result.metrics
        assert result.metrics["handoff_dispatch_delay_ms"] >= 0

    def test_dispatch_delay_is_fast_in_wall_time(self, small_tokenizer):
        """The continuation request leaves promptly after opener finalization;
        with the default clock the gap is a few ms at most."""
        result, _ = self.run(small_tokenizer)
        assert result.metrics["handoff_dispatch_delay_ms"] < 5.0

    def test_partial_continuation_preserved_on_mid_stream_failure(self, small_tokenizer):
        client = mid_stream_failing_client(
            ["partial answer "], httpx.ReadError("reset")
        )
        result, events = self.run(small_tokenizer, client=client)
        assert events[-1]["type"] == "error"
        assert result.continuation is not None
        assert result.continuation.text == "partial answer "
        assert result.continuation.stitched_text.endswith("partial answer ")
        assert "cloud_error" in result.metrics

    def test_humor_mode_pivot_fixture(self, small_tokenizer):
        """A fragment opener plus a new-line pivot continuation stitches into
        one message whose opener prefix is untouched."""
        opener = "The size of a space"
        continuation = (
            "needle is determined by its structural design—oh wait, we're "
            "talking age, not size!\nThe Space Needle in Seattle opened in 1962."
        )
        result, events = self.run(
            small_tokenizer,
            opener_text=opener,
            cloud=(continuation,),
            mode="humor_aware",
            budget=5,
        )
        stitched = result.continuation.stitched_text
        assert stitched.startswith("The size of a space needle is determined")
        assert result.continuation.corrected is False  # no adjudication given
        assert result.continuation.correction_provenance == "unknown"
        assert "x" not in grammar_of(events)

    def test_opener_never_edited(self, small_tokenizer):
        """Whatever the cloud sends, the stitched text begins with the exact
        committed opener."""
        for cloud in (
            ("normal continuation",),
            (", punctuation start",),
            ("\nnewline start",),
            ("Correction: opener was wrong",),
        ):
            result, _ = self.run(small_tokenizer, cloud=cloud)
            opener = result.opener.text
            assert result.continuation.stitched_text[: len(opener)] == opener

    def test_opener_deltas_concatenate(self, small_tokenizer):
        result, events = self.run(small_tokenizer)
        opener_text = "".join(
            e["text_delta"] for e in events if e["type"] == "opener_token"
        )
        assert opener_text == result.opener.text

    def test_continuation_deltas_concatenate(self, small_tokenizer):
        result, events = self.run(small_tokenizer)
        cont = "".join(
            e["text_delta"] for e in events if e["type"] == "continuation_token"
        )
        assert cont == result.continuation.text

    def test_mode_list(self):
        assert RECOVERY_MODES == (
            "explicit_correction",
            "natural_recovery",
            "humor_aware",
        )

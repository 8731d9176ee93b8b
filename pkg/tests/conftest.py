"""Shared fixtures: tiny models, a small trained tokenizer, scripted stand-ins."""

from __future__ import annotations

import json

import httpx
import numpy as np
import pytest

from microlm.model import Model, ModelConfig, ffn_size, random_weights
from microlm.tokenizer import TokenizerModel, train_bpe

TRAIN_CORPUS = (
    "Vincent van Gogh was a significant figure in the development of modern art. "
    "The Space Needle was built for the 1962 World's Fair in Seattle. "
    "How old is the Space Needle? It opened in April 1962. "
    "the quick brown fox jumps over the lazy dog. "
    "a small model answers first and a large model continues the answer. "
) * 8


def make_config(
    hidden_size: int = 32,
    n_layers: int = 2,
    n_heads: int = 4,
    n_kv_heads: int = 2,
    vocab_size: int = 320,
    max_seq_len: int = 128,
    rope_theta: float = 1e6,
) -> ModelConfig:
    return ModelConfig(
        hidden_size=hidden_size,
        n_layers=n_layers,
        n_heads=n_heads,
        n_kv_heads=n_kv_heads,
        head_dim=hidden_size // n_heads,
        intermediate_size=ffn_size(hidden_size),
        vocab_size=vocab_size,
        max_seq_len=max_seq_len,
        rope_theta=rope_theta,
    )


def make_model(seed: int = 0, **kwargs) -> Model:
    config = make_config(**kwargs)
    return Model(config, random_weights(config, seed=seed))


@pytest.fixture(scope="session")
def small_tokenizer() -> TokenizerModel:
    return train_bpe(TRAIN_CORPUS, 320)


@pytest.fixture()
def tiny_model(small_tokenizer) -> Model:
    return make_model(seed=11, vocab_size=small_tokenizer.vocab_size)


class ScriptedModel:
    """A TokenSource that replays a fixed id sequence via one-hot logits."""

    def __init__(self, vocab_size: int, script: list[int], end_id: int):
        self.vocab_size = vocab_size
        self.script = list(script)
        self.end_id = end_id

    def _logits(self, idx: int) -> np.ndarray:
        logits = np.full(self.vocab_size, -10.0, dtype=np.float32)
        token = self.script[idx] if idx < len(self.script) else self.end_id
        logits[token] = 10.0
        return logits

    def prefill(self, tokens):
        return self._logits(0), {"pos": 0}

    def decode_step(self, token, cache):
        cache["pos"] += 1
        return self._logits(cache["pos"])


def scripted_model_for_text(tokenizer: TokenizerModel, text: str) -> ScriptedModel:
    """A scripted model whose greedy output decodes exactly to `text`."""
    return ScriptedModel(tokenizer.vocab_size, tokenizer.encode(text), tokenizer.end_id)


def sse_payload(deltas: list[str]) -> bytes:
    frames = []
    for d in deltas:
        body = json.dumps({"choices": [{"delta": {"content": d}}]})
        frames.append(f"data: {body}\n\n".encode())
    frames.append(b"data: [DONE]\n\n")
    return b"".join(frames)


def mock_cloud_client(
    deltas: list[str], status: int = 200, recorder: list | None = None
) -> httpx.Client:
    """An httpx client whose transport replays a scripted continuation."""

    def handler(request: httpx.Request) -> httpx.Response:
        if recorder is not None:
            recorder.append(json.loads(request.content))
        if status != 200:
            return httpx.Response(status, json={"error": "denied"})
        return httpx.Response(
            200, content=sse_payload(deltas), headers={"content-type": "text/event-stream"}
        )

    return httpx.Client(transport=httpx.MockTransport(handler))


class ExplodingStream(httpx.SyncByteStream):
    """Streams some chunks, then raises the given exception."""

    def __init__(self, chunks: list[bytes], exc: Exception):
        self.chunks = chunks
        self.exc = exc

    def __iter__(self):
        yield from self.chunks
        raise self.exc


def mid_stream_failing_client(deltas: list[str], exc: Exception) -> httpx.Client:
    """Streams `deltas`, then fails with `exc` instead of finishing."""

    def handler(request: httpx.Request) -> httpx.Response:
        good = sse_payload(deltas).rsplit(b"data: [DONE]", 1)[0]
        return httpx.Response(
            200,
            stream=ExplodingStream([good], exc),
            headers={"content-type": "text/event-stream"},
        )

    return httpx.Client(transport=httpx.MockTransport(handler))


def flaky_then_good_client(deltas: list[str], failures: int = 1) -> tuple[httpx.Client, list]:
    """Raises a connect error for the first `failures` attempts, then streams."""
    attempts: list[int] = []

    def handler(request: httpx.Request) -> httpx.Response:
        attempts.append(1)
        if len(attempts) <= failures:
            raise httpx.ConnectError("connection refused", request=request)
        return httpx.Response(
            200, content=sse_payload(deltas), headers={"content-type": "text/event-stream"}
        )

    return httpx.Client(transport=httpx.MockTransport(handler)), attempts

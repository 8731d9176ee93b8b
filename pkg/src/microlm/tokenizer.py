"""Byte-level BPE tokenizer with chat-turn markers and streaming decode.

Id space: ids 0..255 are the raw bytes, the three chat markers sit at
256..258, and learned merges fill the rest densely. Plain-text encoding can
never produce a marker id — markers are inserted only by `render_chat` — so
user text that spells a marker survives a round trip as ordinary bytes.

Pre-tokenization splits text into chunks at word boundaries with leading
whitespace attached to the following word; merges never cross chunks.
"""

from __future__ import annotations

import base64
import codecs
import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import ConfigError, DomainError, TranscriptError

__all__ = [
    "USER_MARKER",
    "ASSISTANT_MARKER",
    "END_MARKER",
    "SPECIAL_TOKENS",
    "TokenizerModel",
    "StreamingDecoder",
    "Turn",
    "ChatTranscript",
    "train_bpe",
    "render_chat",
    "save_tokenizer",
    "load_tokenizer",
]

USER_MARKER = "<|user|>"
ASSISTANT_MARKER = "<|assistant|>"
END_MARKER = "<|end|>"
SPECIAL_TOKENS = (USER_MARKER, ASSISTANT_MARKER, END_MARKER)

_N_BYTES = 256
_MIN_VOCAB = _N_BYTES + len(SPECIAL_TOKENS)

# one word with its leading whitespace, or trailing whitespace with no word
_CHUNK_RE = re.compile(r"\s*\S+|\s+$")


def _pretokenize(text: str) -> list[str]:
    return _CHUNK_RE.findall(text)


@dataclass
class TokenizerModel:
    """Learned vocabulary: id -> bytes, ordered merges, marker ids."""

    vocab: dict[int, bytes]
    merges: list[tuple[bytes, bytes]]
    special_tokens: dict[str, int]
    _ranks: dict[tuple[bytes, bytes], int] = field(init=False, repr=False)
    _pair_ids: dict[tuple[bytes, bytes], int] = field(init=False, repr=False)
    _byte_ids: dict[bytes, int] = field(init=False, repr=False)
    _chunk_cache: dict[str, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = len(self.vocab)
        if sorted(self.vocab) != list(range(n)):
            raise ConfigError("vocab ids must be dense in [0, vocab_size)")
        for i in range(_N_BYTES):
            if self.vocab.get(i) != bytes([i]):
                raise ConfigError(f"id {i} must map to raw byte {i}")
        for name in SPECIAL_TOKENS:
            if name not in self.special_tokens:
                raise ConfigError(f"missing special token {name}")
        token_ids = {tok: i for i, tok in self.vocab.items()}
        self._ranks = {pair: r for r, pair in enumerate(self.merges)}
        self._pair_ids = {}
        for left, right in self.merges:
            merged = left + right
            if merged not in token_ids:
                raise ConfigError(f"merge {left!r}+{right!r} has no vocab entry")
            self._pair_ids[(left, right)] = token_ids[merged]
        self._byte_ids = token_ids
        self._chunk_cache = {}

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def end_id(self) -> int:
        return self.special_tokens[END_MARKER]

    def _encode_chunk(self, chunk: str) -> tuple[int, ...]:
        cached = self._chunk_cache.get(chunk)
        if cached is not None:
            return cached
        parts = [bytes([b]) for b in chunk.encode("utf-8")]
        while len(parts) > 1:
            best_rank = None
            best_pair = None
            for pair in zip(parts, parts[1:]):
                r = self._ranks.get(pair)
                if r is not None and (best_rank is None or r < best_rank):
                    best_rank = r
                    best_pair = pair
            if best_pair is None:
                break
            merged: list[bytes] = []
            i = 0
            while i < len(parts):
                if (
                    i + 1 < len(parts)
                    and parts[i] == best_pair[0]
                    and parts[i + 1] == best_pair[1]
                ):
                    merged.append(parts[i] + parts[i + 1])
                    i += 2
                else:
                    merged.append(parts[i])
                    i += 1
            parts = merged
        ids = tuple(self._byte_ids[p] for p in parts)
        if len(self._chunk_cache) < 65536:
            self._chunk_cache[chunk] = ids
        return ids

    def encode(self, text: str) -> list[int]:
        """Encode plain text. Marker spellings are treated as ordinary bytes."""
        ids: list[int] = []
        for chunk in _pretokenize(text):
            ids.extend(self._encode_chunk(chunk))
        return ids

    def decode(self, ids: Iterable[int]) -> str:
        """Decode ids to text; invalid UTF-8 becomes U+FFFD."""
        buf = bytearray()
        for i in ids:
            piece = self.vocab.get(i)
            if piece is None:
                raise DomainError(f"unknown token id {i}")
            buf.extend(piece)
        return buf.decode("utf-8", errors="replace")


class StreamingDecoder:
    """Incremental id-to-text decoder that never emits a torn character.

    Bytes of an incomplete multi-byte sequence are withheld until the
    sequence completes; `flush` replaces a dangling remainder with U+FFFD at
    end of stream.
    """

    def __init__(self, tokenizer: TokenizerModel):
        self._tok = tokenizer
        self._decoder = codecs.getincrementaldecoder("utf-8")(errors="replace")

    def feed(self, token_id: int) -> str:
        piece = self._tok.vocab.get(token_id)
        if piece is None:
            raise DomainError(f"unknown token id {token_id}")
        return self._decoder.decode(piece, False)

    def flush(self) -> str:
        return self._decoder.decode(b"", True)


def train_bpe(corpus: str | Iterable[str], vocab_size: int) -> TokenizerModel:
    """Learn a BPE vocabulary by greedy highest-count pair merging.

    Ties break lexicographically on the byte pair; training stops early when
    no pair occurs at least twice. Marker tokens are reserved, not learned.
    """
    if vocab_size < _MIN_VOCAB:
        raise ConfigError(
            f"vocab_size must be at least {_MIN_VOCAB} "
            f"(256 bytes + {len(SPECIAL_TOKENS)} markers), got {vocab_size}"
        )
    text = corpus if isinstance(corpus, str) else "".join(corpus)
    if not text:
        raise DomainError("training corpus is empty")

    # unique chunks with counts; each chunk is a list of byte-string symbols
    chunk_counts: dict[str, int] = {}
    for chunk in _pretokenize(text):
        chunk_counts[chunk] = chunk_counts.get(chunk, 0) + 1
    words: list[list[bytes]] = []
    counts: list[int] = []
    for chunk, c in chunk_counts.items():
        words.append([bytes([b]) for b in chunk.encode("utf-8")])
        counts.append(c)

    def pair_stats() -> tuple[dict[tuple[bytes, bytes], int], dict[tuple[bytes, bytes], set[int]]]:
        stats: dict[tuple[bytes, bytes], int] = {}
        where: dict[tuple[bytes, bytes], set[int]] = {}
        for wi, word in enumerate(words):
            c = counts[wi]
            for pair in zip(word, word[1:]):
                stats[pair] = stats.get(pair, 0) + c
                where.setdefault(pair, set()).add(wi)
        return stats, where

    stats, where = pair_stats()
    merges: list[tuple[bytes, bytes]] = []
    vocab: dict[int, bytes] = {i: bytes([i]) for i in range(_N_BYTES)}
    special = {name: _N_BYTES + i for i, name in enumerate(SPECIAL_TOKENS)}
    for name, sid in special.items():
        vocab[sid] = name.encode("utf-8")
    next_id = _MIN_VOCAB

    while next_id < vocab_size:
        best_pair = None
        best_count = 1  # require at least two occurrences
        for pair, c in stats.items():
            if c > best_count or (c == best_count and best_pair is not None and pair < best_pair):
                best_pair = pair
                best_count = c
        if best_pair is None:
            break
        merges.append(best_pair)
        vocab[next_id] = best_pair[0] + best_pair[1]
        next_id += 1

        # rewrite only the chunks containing the merged pair
        touched = where.pop(best_pair, set())
        stats.pop(best_pair, None)
        for wi in touched:
            word = words[wi]
            c = counts[wi]
            # remove this word's contribution to neighbouring pair stats
            for pair in zip(word, word[1:]):
                if pair in stats:
                    stats[pair] -= c
                    if stats[pair] <= 0:
                        del stats[pair]
                    w = where.get(pair)
                    if w is not None:
                        w.discard(wi)
                        if not w:
                            del where[pair]
            new_word: list[bytes] = []
            i = 0
            while i < len(word):
                if (
                    i + 1 < len(word)
                    and word[i] == best_pair[0]
                    and word[i + 1] == best_pair[1]
                ):
                    new_word.append(word[i] + word[i + 1])
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            words[wi] = new_word
            for pair in zip(new_word, new_word[1:]):
                stats[pair] = stats.get(pair, 0) + c
                where.setdefault(pair, set()).add(wi)

    return TokenizerModel(vocab=vocab, merges=merges, special_tokens=special)


@dataclass(frozen=True)
class Turn:
    role: str  # "user" or "assistant"
    text: str


@dataclass(frozen=True)
class ChatTranscript:
    turns: tuple[Turn, ...]

    def __init__(self, turns: Iterable[Turn]):
        object.__setattr__(self, "turns", tuple(turns))
        if not self.turns:
            raise TranscriptError("transcript must contain at least one turn")
        for i, turn in enumerate(self.turns):
            expected = "user" if i % 2 == 0 else "assistant"
            if turn.role != expected:
                raise TranscriptError(
                    f"turn {i} has role {turn.role!r}; transcripts alternate "
                    f"starting with 'user'"
                )
            if not turn.text:
                raise TranscriptError(f"turn {i} has empty text")


def render_chat(
    tokenizer: TokenizerModel,
    transcript: ChatTranscript,
    add_generation_prefix: bool = True,
) -> list[int]:
    """Render a transcript to ids: marker, text, end-marker per turn.

    With `add_generation_prefix` the assistant marker is appended so the
    model's next token begins its reply. Marker ids come only from this
    function, never from text encoding.
    """
    role_ids = {
        "user": tokenizer.special_tokens[USER_MARKER],
        "assistant": tokenizer.special_tokens[ASSISTANT_MARKER],
    }
    end_id = tokenizer.special_tokens[END_MARKER]
    ids: list[int] = []
    for turn in transcript.turns:
        ids.append(role_ids[turn.role])
        ids.extend(tokenizer.encode(turn.text))
        ids.append(end_id)
    if add_generation_prefix:
        ids.append(role_ids["assistant"])
    return ids


def save_tokenizer(tokenizer: TokenizerModel, path) -> None:
    """Write the tokenizer as JSON to a path or text file object."""
    doc = {
        "version": 1,
        "vocab": {
            str(i): base64.b64encode(b).decode("ascii")
            for i, b in sorted(tokenizer.vocab.items())
        },
        "merges": [
            [
                base64.b64encode(left).decode("ascii"),
                base64.b64encode(right).decode("ascii"),
            ]
            for left, right in tokenizer.merges
        ],
        "special_tokens": dict(tokenizer.special_tokens),
    }
    if hasattr(path, "write"):
        json.dump(doc, path, indent=0, sort_keys=True)
    else:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=0, sort_keys=True)


def load_tokenizer(path) -> TokenizerModel:
    """Read a tokenizer from a path or text file object."""
    if hasattr(path, "read"):
        doc = json.load(path)
    else:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported tokenizer file version {doc.get('version')!r}")
    try:
        vocab = {int(i): base64.b64decode(b) for i, b in doc["vocab"].items()}
        merges = [
            (base64.b64decode(left), base64.b64decode(right))
            for left, right in doc["merges"]
        ]
        special = {str(k): int(v) for k, v in doc["special_tokens"].items()}
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"malformed tokenizer file: {e}") from e
    return TokenizerModel(vocab=vocab, merges=merges, special_tokens=special)

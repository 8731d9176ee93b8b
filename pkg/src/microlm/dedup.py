"""Evaluation-contamination detection via shingle containment.

A document is reduced to a set of k-token shingles after normalization
(lowercase, punctuation stripped, whitespace collapsed). The decision
statistic is containment — the fraction of the query's shingles present in
a candidate — computed exactly; MinHash signatures and LSH banding only
gate which pairs get the exact check.

Hashing is a 64-bit multiply-add family with constants drawn from a seeded
generator, so signatures are reproducible across platforms and languages.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

__all__ = [
    "DEFAULT_K",
    "DEFAULT_NUM_HASHES",
    "DEFAULT_BANDS",
    "DEFAULT_THRESHOLD",
    "HASH_SEED",
    "ShingleSet",
    "FlaggedPair",
    "normalize",
    "shingle",
    "containment",
    "minhash_signature",
    "lsh_candidates",
    "flag_contaminated",
]

DEFAULT_K = 5
DEFAULT_NUM_HASHES = 256
DEFAULT_BANDS = 16
DEFAULT_THRESHOLD = 0.8

# Base string hash: FNV-1a 64-bit over the shingle's UTF-8 bytes.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# Seed for the multiply-add hash family constants (documented so
# signatures can be reproduced independently).
HASH_SEED = 0x5EED0FDED


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _hash_family(num_hashes: int) -> tuple[np.ndarray, np.ndarray]:
    """(a, b) constants for h_i(x) = (a_i * x + b_i) mod 2^64, a_i odd."""
    rng = np.random.default_rng(HASH_SEED)
    a = rng.integers(0, 1 << 63, size=num_hashes, dtype=np.uint64) * 2 + 1
    b = rng.integers(0, 1 << 63, size=num_hashes, dtype=np.uint64)
    return a, b


_PUNCT_RE = re.compile(r"[^\w\s]|_", re.UNICODE)
_WS_RE = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace runs to one space."""
    text = text.lower()
    text = _PUNCT_RE.sub(" ", text)
    return _WS_RE.sub(" ", text).strip()


@dataclass(frozen=True)
class ShingleSet:
    """Hashed k-token shingles of one document."""

    doc_id: str
    k: int
    hashes: frozenset[int]


def shingle(text: str, k: int = DEFAULT_K, doc_id: str = "") -> ShingleSet:
    """Hashed k-token shingles of `text` after normalization.

    A document with fewer than k tokens yields its whole token run as a
    single shingle (empty text yields the empty set).
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    tokens = normalize(text).split()
    if not tokens:
        return ShingleSet(doc_id=doc_id, k=k, hashes=frozenset())
    if len(tokens) < k:
        grams = [" ".join(tokens)]
    else:
        grams = [" ".join(tokens[i : i + k]) for i in range(len(tokens) - k + 1)]
    return ShingleSet(
        doc_id=doc_id,
        k=k,
        hashes=frozenset(_fnv1a64(g.encode("utf-8")) for g in grams),
    )


def containment(query: ShingleSet, candidate: ShingleSet) -> float:
    """|S(q) intersect S(x)| / |S(q)| — the fraction of the query covered."""
    if not query.hashes:
        raise DomainError("query has no shingles")
    return len(query.hashes & candidate.hashes) / len(query.hashes)


def minhash_signature(
    shingles: ShingleSet, num_hashes: int = DEFAULT_NUM_HASHES
) -> np.ndarray:
    """MinHash signature: per hash function, the minimum over the set."""
    if num_hashes < 1:
        raise ConfigError(f"num_hashes must be >= 1, got {num_hashes}")
    if not shingles.hashes:
        raise DomainError(f"document {shingles.doc_id!r} has no shingles")
    a, b = _hash_family(num_hashes)
    x = np.fromiter(shingles.hashes, dtype=np.uint64, count=len(shingles.hashes))
    # wrap-around uint64 arithmetic == mod 2^64
    table = a[:, None] * x[None, :] + b[:, None]
    return table.min(axis=1)


def lsh_candidates(
    signatures: dict[str, np.ndarray],
    bands: int = DEFAULT_BANDS,
    rows: int | None = None,
) -> set[tuple[str, str]]:
    """Pairs of doc ids sharing at least one identical signature band.

    Pairs are returned with ids in sorted order. `rows` defaults to
    signature_length / bands; bands must tile the signature exactly.
    """
    if not signatures:
        return set()
    lengths = {len(sig) for sig in signatures.values()}
    if len(lengths) != 1:
        raise ConfigError("all signatures must have the same length")
    (length,) = lengths
    if rows is None:
        if length % bands != 0:
            raise ConfigError(f"bands {bands} must divide signature length {length}")
        rows = length // bands
    if bands * rows != length:
        raise ConfigError(f"bands*rows {bands}*{rows} != signature length {length}")
    candidates: set[tuple[str, str]] = set()
    for band in range(bands):
        buckets: dict[tuple[int, ...], list[str]] = {}
        lo, hi = band * rows, (band + 1) * rows
        for doc_id, sig in signatures.items():
            buckets.setdefault(tuple(int(v) for v in sig[lo:hi]), []).append(doc_id)
        for bucket in buckets.values():
            if len(bucket) < 2:
                continue
            bucket.sort()
            for i in range(len(bucket)):
                for j in range(i + 1, len(bucket)):
                    candidates.add((bucket[i], bucket[j]))
    return candidates


@dataclass(frozen=True)
class FlaggedPair:
    eval_id: str
    train_id: str
    containment: float


def flag_contaminated(
    eval_prompts: dict[str, str],
    train_views: dict[str, str],
    *,
    k: int = DEFAULT_K,
    num_hashes: int = DEFAULT_NUM_HASHES,
    bands: int = DEFAULT_BANDS,
    threshold: float = DEFAULT_THRESHOLD,
) -> list[FlaggedPair]:
    """Evaluation prompts whose shingles are largely contained in a train view.

    LSH proposes candidate (eval, train) pairs; exact containment of the
    eval prompt in the train view decides. Output is sorted by
    (eval_id, train_id) and contains no duplicates. Documents that
    normalize to nothing are skipped (they have no shingles to contain).

    Candidate recall tracks the Jaccard similarity of whole documents, so
    pass train text as local views of roughly prompt length (not whole
    corpora): a prompt buried in a much longer record has high containment
    but low Jaccard and can slip past the banding gate.
    """
    if not 0 < threshold <= 1:
        raise ConfigError(f"threshold must be in (0, 1], got {threshold}")
    overlap = set(eval_prompts) & set(train_views)
    if overlap:
        raise ConfigError(f"eval and train ids must be disjoint: {sorted(overlap)[:3]}")

    eval_sets = {
        doc_id: shingle(text, k, doc_id=doc_id) for doc_id, text in eval_prompts.items()
    }
    train_sets = {
        doc_id: shingle(text, k, doc_id=doc_id) for doc_id, text in train_views.items()
    }
    signatures: dict[str, np.ndarray] = {}
    for sets in (eval_sets, train_sets):
        for doc_id, ss in sets.items():
            if ss.hashes:
                signatures[doc_id] = minhash_signature(ss, num_hashes)

    flagged: list[FlaggedPair] = []
    for id_a, id_b in lsh_candidates(signatures, bands):
        if id_a in eval_sets and id_b in train_sets:
            eval_id, train_id = id_a, id_b
        elif id_b in eval_sets and id_a in train_sets:
            eval_id, train_id = id_b, id_a
        else:
            continue  # eval/eval or train/train pair
        c = containment(eval_sets[eval_id], train_sets[train_id])
        if c >= threshold:
            flagged.append(FlaggedPair(eval_id=eval_id, train_id=train_id, containment=c))
    flagged.sort(key=lambda p: (p.eval_id, p.train_id))
    return flagged

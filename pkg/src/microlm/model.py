"""Decoder-only transformer: configuration, weights container, forward pass.

Architecture: pre-norm residual blocks with RMSNorm, rotary position
encoding on queries and keys, grouped-query attention, SwiGLU feed-forward,
tied input/output embeddings, no biases anywhere. Inference runs in float32
with an incremental KV cache.

Weights container (binary, little-endian):

    magic "MULM" | format version u32 | header length u32 | header JSON
    | raw tensor payloads

The header JSON carries the full config, the declared parameter count, and
a tensor manifest of (name, shape, offset). Offsets are absolute file
offsets, 64-byte aligned; payloads are raw float32 little-endian, row-major.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import BinaryIO

import numpy as np

from .errors import (
    ConfigError,
    ContainerFormatError,
    ContainerIntegrityError,
    ContextOverflowError,
    DimensionError,
    DomainError,
    TruncatedPayloadError,
)
from .kernels import rmsnorm, rope_angles, softmax, swiglu_ffn

__all__ = [
    "ModelConfig",
    "LayerWeights",
    "Weights",
    "KVCache",
    "Model",
    "MAGIC",
    "FORMAT_VERSION",
    "PAPER_GEOMETRIES",
    "ffn_size",
    "paper_config",
    "param_count",
    "param_count_label",
    "compute_step_budget",
    "random_weights",
    "save_model",
    "load_model",
]

MAGIC = b"MULM"
FORMAT_VERSION = 1

# The five published model geometries as (hidden_size, n_layers).
PAPER_GEOMETRIES: tuple[tuple[int, int], ...] = (
    (256, 8),
    (256, 16),
    (384, 8),
    (384, 16),
    (512, 8),
)


def ffn_size(hidden_size: int) -> int:
    """Smallest multiple of 64 that is >= ceil(8*d/3)."""
    if hidden_size <= 0:
        raise ConfigError(f"hidden_size must be positive, got {hidden_size}")
    target = math.ceil(8 * hidden_size / 3)
    return ((target + 63) // 64) * 64


@dataclass(frozen=True)
class ModelConfig:
    hidden_size: int
    n_layers: int
    n_heads: int
    n_kv_heads: int
    head_dim: int
    intermediate_size: int
    vocab_size: int
    max_seq_len: int
    rope_theta: float = 1e6
    norm_eps: float = 1e-5

    def __post_init__(self) -> None:
        for name in (
            "hidden_size",
            "n_layers",
            "n_heads",
            "n_kv_heads",
            "head_dim",
            "intermediate_size",
            "vocab_size",
            "max_seq_len",
        ):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.rope_theta <= 0 or self.norm_eps <= 0:
            raise ConfigError("rope_theta and norm_eps must be positive")
        if self.hidden_size != self.n_heads * self.head_dim:
            raise ConfigError(
                f"hidden_size {self.hidden_size} != n_heads*head_dim "
                f"{self.n_heads}*{self.head_dim}"
            )
        if self.n_kv_heads > self.n_heads or self.n_heads % self.n_kv_heads != 0:
            raise ConfigError(
                f"n_kv_heads {self.n_kv_heads} must divide n_heads {self.n_heads}"
            )
        if self.head_dim % 2 != 0:
            raise ConfigError(f"head_dim must be even for rotary encoding, got {self.head_dim}")
        expected_m = ffn_size(self.hidden_size)
        if self.intermediate_size != expected_m:
            raise ConfigError(
                f"intermediate_size {self.intermediate_size} violates the "
                f"8/3 rule; expected {expected_m} for hidden_size {self.hidden_size}"
            )

    @property
    def kv_dim(self) -> int:
        return self.n_kv_heads * self.head_dim

    @property
    def group_size(self) -> int:
        return self.n_heads // self.n_kv_heads


def paper_config(hidden_size: int, n_layers: int) -> ModelConfig:
    """One of the five published geometries at full scale."""
    if (hidden_size, n_layers) not in PAPER_GEOMETRIES:
        raise ConfigError(
            f"({hidden_size}, {n_layers}) is not a published geometry; "
            f"choose from {PAPER_GEOMETRIES}"
        )
    return ModelConfig(
        hidden_size=hidden_size,
        n_layers=n_layers,
        n_heads=8,
        n_kv_heads=2,
        head_dim=hidden_size // 8,
        intermediate_size=ffn_size(hidden_size),
        vocab_size=12288,
        max_seq_len=1024,
        rope_theta=1e6,
        norm_eps=1e-5,
    )


def param_count(config: ModelConfig) -> int:
    """Closed-form trainable parameter count (embeddings tied, no biases)."""
    d = config.hidden_size
    per_layer = (
        2 * d  # two RMSNorm gains
        + d * config.n_heads * config.head_dim  # wq
        + 2 * d * config.n_kv_heads * config.head_dim  # wk, wv
        + config.n_heads * config.head_dim * d  # wo
        + 3 * d * config.intermediate_size  # w_gate, w_up, w_down
    )
    return config.vocab_size * d + config.n_layers * per_layer + d


def param_count_label(count: int) -> str:
    """Human-readable size in millions, matching the published table labels.

    Rounds half-up to the nearest thousand parameters first, then to two
    decimals of a million, in decimal arithmetic.
    """
    if count <= 0:
        raise DomainError(f"count must be positive, got {count}")
    thousands = (Decimal(count) / 1000).quantize(Decimal("1"), rounding=ROUND_HALF_UP)
    millions = (thousands / 1000).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"{millions}M"


def compute_step_budget(params: int, ref_params: int, ref_steps: int) -> int:
    """Optimizer steps at FLOPs parity with a reference model.

    Scales the reference step count by ref_params/params, rounding up so a
    variant never trains for less compute than parity.
    """
    if params <= 0 or ref_params <= 0 or ref_steps <= 0:
        raise DomainError("params, ref_params, and ref_steps must all be positive")
    return math.ceil(ref_steps * ref_params / params)


@dataclass
class LayerWeights:
    attn_norm: np.ndarray  # (d,)
    wq: np.ndarray  # (d, n_heads*head_dim)
    wk: np.ndarray  # (d, n_kv_heads*head_dim)
    wv: np.ndarray  # (d, n_kv_heads*head_dim)
    wo: np.ndarray  # (n_heads*head_dim, d)
    ffn_norm: np.ndarray  # (d,)
    w_gate: np.ndarray  # (d, m)
    w_up: np.ndarray  # (d, m)
    w_down: np.ndarray  # (m, d)


@dataclass
class Weights:
    tok_embedding: np.ndarray  # (V, d); also the tied output head
    layers: list[LayerWeights]
    final_norm: np.ndarray  # (d,)


def _expected_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d = config.hidden_size
    q = config.n_heads * config.head_dim
    kv = config.kv_dim
    m = config.intermediate_size
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("tok_embedding", (config.vocab_size, d))
    ]
    for i in range(config.n_layers):
        p = f"layers.{i}."
        shapes += [
            (p + "attn_norm", (d,)),
            (p + "wq", (d, q)),
            (p + "wk", (d, kv)),
            (p + "wv", (d, kv)),
            (p + "wo", (q, d)),
            (p + "ffn_norm", (d,)),
            (p + "w_gate", (d, m)),
            (p + "w_up", (d, m)),
            (p + "w_down", (m, d)),
        ]
    shapes.append(("final_norm", (d,)))
    return shapes


def _named_tensors(weights: Weights) -> list[tuple[str, np.ndarray]]:
    out: list[tuple[str, np.ndarray]] = [("tok_embedding", weights.tok_embedding)]
    for i, lw in enumerate(weights.layers):
        p = f"layers.{i}."
        out += [
            (p + "attn_norm", lw.attn_norm),
            (p + "wq", lw.wq),
            (p + "wk", lw.wk),
            (p + "wv", lw.wv),
            (p + "wo", lw.wo),
            (p + "ffn_norm", lw.ffn_norm),
            (p + "w_gate", lw.w_gate),
            (p + "w_up", lw.w_up),
            (p + "w_down", lw.w_down),
        ]
    out.append(("final_norm", weights.final_norm))
    return out


def random_weights(config: ModelConfig, seed: int = 0, scale: float = 0.02) -> Weights:
    """Gaussian-initialized weights (norm gains start at one)."""
    rng = np.random.default_rng(seed)

    def mat(rows: int, cols: int) -> np.ndarray:
        return (rng.standard_normal((rows, cols)) * scale).astype(np.float32)

    d = config.hidden_size
    q = config.n_heads * config.head_dim
    kv = config.kv_dim
    m = config.intermediate_size
    layers = [
        LayerWeights(
            attn_norm=np.ones(d, dtype=np.float32),
            wq=mat(d, q),
            wk=mat(d, kv),
            wv=mat(d, kv),
            wo=mat(q, d),
            ffn_norm=np.ones(d, dtype=np.float32),
            w_gate=mat(d, m),
            w_up=mat(d, m),
            w_down=mat(m, d),
        )
        for _ in range(config.n_layers)
    ]
    return Weights(
        tok_embedding=mat(config.vocab_size, d),
        layers=layers,
        final_norm=np.ones(d, dtype=np.float32),
    )


class KVCache:
    """Per-layer rotated key and value history for incremental decoding.

    All layers share one length counter; `append` writes a layer's rows for
    the position currently being processed and `advance` commits the position
    once every layer has written.
    """

    def __init__(self, config: ModelConfig):
        self.config = config
        shape = (config.n_layers, config.max_seq_len, config.kv_dim)
        self.k = np.zeros(shape, dtype=np.float32)
        self.v = np.zeros(shape, dtype=np.float32)
        self.current_len = 0

    def remaining(self) -> int:
        return self.config.max_seq_len - self.current_len

    def append(self, layer: int, k_rows: np.ndarray, v_rows: np.ndarray) -> None:
        n = k_rows.shape[0]
        if self.current_len + n > self.config.max_seq_len:
            raise ContextOverflowError(
                f"cache full: {self.current_len}+{n} > {self.config.max_seq_len}"
            )
        self.k[layer, self.current_len : self.current_len + n] = k_rows
        self.v[layer, self.current_len : self.current_len + n] = v_rows

    def advance(self, n: int) -> None:
        if self.current_len + n > self.config.max_seq_len:
            raise ContextOverflowError("advance past max_seq_len")
        self.current_len += n


def _rope_tables(config: ModelConfig, start: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (n, head_dim//2) for positions start..start+n-1."""
    angles = np.stack(
        [rope_angles(config.head_dim, p, config.rope_theta) for p in range(start, start + n)]
    )
    return np.cos(angles), np.sin(angles)


def _rotate(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    """Rotate adjacent pairs of the last axis. x: (n, heads, head_dim)."""
    even = x[..., 0::2].astype(np.float64)
    odd = x[..., 1::2].astype(np.float64)
    c = cos[:, None, :]
    s = sin[:, None, :]
    out = np.empty_like(x)
    out[..., 0::2] = (even * c - odd * s).astype(np.float32)
    out[..., 1::2] = (even * s + odd * c).astype(np.float32)
    return out


@dataclass
class Model:
    """Bundled config and weights with prefill / decode entry points."""

    config: ModelConfig
    weights: Weights

    def __post_init__(self) -> None:
        expected = _expected_shapes(self.config)
        actual = _named_tensors(self.weights)
        if len(expected) != len(actual):
            raise ContainerIntegrityError(
                f"expected {len(expected)} tensors, got {len(actual)}"
            )
        for (name, shape), (aname, arr) in zip(expected, actual):
            if name != aname or tuple(arr.shape) != shape:
                raise ContainerIntegrityError(
                    f"tensor {aname} has shape {tuple(arr.shape)}, "
                    f"expected {name} with shape {shape}"
                )

    def new_cache(self) -> KVCache:
        return KVCache(self.config)

    def _attend(
        self,
        q: np.ndarray,  # (n, n_heads, head_dim), already rotated
        keys: np.ndarray,  # (total, n_kv_heads, head_dim), already rotated
        values: np.ndarray,  # (total, n_kv_heads, head_dim)
        first_pos: int,
    ) -> np.ndarray:
        """Causal grouped-query attention. Query row i sits at absolute
        position first_pos + i and may attend to cache positions <= it."""
        cfg = self.config
        n = q.shape[0]
        scale = np.float32(1.0 / math.sqrt(cfg.head_dim))
        out = np.empty((n, cfg.n_heads, cfg.head_dim), dtype=np.float32)
        for h in range(cfg.n_heads):
            g = h // cfg.group_size
            scores = (q[:, h, :] @ keys[:, g, :].T) * scale  # (n, total)
            if n > 1:
                # mask entries where key position > query position
                kpos = np.arange(keys.shape[0])
                qpos = first_pos + np.arange(n)[:, None]
                scores = np.where(kpos[None, :] <= qpos, scores, np.float32(-np.inf))
            probs = softmax(scores)
            out[:, h, :] = probs @ values[:, g, :]
        return out

    def _forward(
        self,
        tokens: list[int],
        cache: KVCache,
        collect_all: bool,
    ) -> np.ndarray:
        """Run `tokens` through the stack starting at position cache.current_len.

        Returns logits for the last position, or for every position when
        `collect_all` is set. The cache is extended by len(tokens).
        """
        cfg = self.config
        w = self.weights
        n = len(tokens)
        start = cache.current_len
        if n == 0:
            raise DimensionError("empty token sequence")
        if start + n > cfg.max_seq_len:
            raise ContextOverflowError(
                f"sequence of {n} at position {start} exceeds max_seq_len {cfg.max_seq_len}"
            )
        for t in tokens:
            if not 0 <= t < cfg.vocab_size:
                raise DomainError(f"token id {t} outside vocab of {cfg.vocab_size}")

        cos, sin = _rope_tables(cfg, start, n)
        h = w.tok_embedding[tokens].astype(np.float32, copy=True)  # (n, d)
        for li, lw in enumerate(w.layers):
            x = rmsnorm(h, lw.attn_norm, cfg.norm_eps)
            q = (x @ lw.wq).reshape(n, cfg.n_heads, cfg.head_dim)
            k = (x @ lw.wk).reshape(n, cfg.n_kv_heads, cfg.head_dim)
            v = (x @ lw.wv).reshape(n, cfg.n_kv_heads, cfg.head_dim)
            q = _rotate(q, cos, sin)
            k = _rotate(k, cos, sin)
            cache.append(li, k.reshape(n, cfg.kv_dim), v.reshape(n, cfg.kv_dim))
            total = start + n
            keys = cache.k[li, :total].reshape(total, cfg.n_kv_heads, cfg.head_dim)
            vals = cache.v[li, :total].reshape(total, cfg.n_kv_heads, cfg.head_dim)
            attn = self._attend(q, keys, vals, start)
            h = h + attn.reshape(n, cfg.n_heads * cfg.head_dim) @ lw.wo
            x = rmsnorm(h, lw.ffn_norm, cfg.norm_eps)
            h = h + swiglu_ffn(x, lw.w_gate, lw.w_up, lw.w_down)
        cache.advance(n)

        final = rmsnorm(h if collect_all else h[-1:], w.final_norm, cfg.norm_eps)
        logits = final @ w.tok_embedding.T  # tied output head
        return logits if collect_all else logits[0]

    def prefill(
        self, tokens: list[int], *, return_all_logits: bool = False
    ) -> tuple[np.ndarray, KVCache]:
        """Process a prompt, returning next-token logits and a primed cache.

        Logits cover only the last position unless `return_all_logits` is
        set (debug mode), in which case one row per position is returned.
        """
        cache = self.new_cache()
        logits = self._forward(list(tokens), cache, collect_all=return_all_logits)
        return logits, cache

    def decode_step(self, token: int, cache: KVCache) -> np.ndarray:
        """Feed one token at the cache's current position; return next logits."""
        return self._forward([token], cache, collect_all=False)

    def param_count(self) -> int:
        return param_count(self.config)


def _canonical_header(config: ModelConfig, manifest: list[dict]) -> bytes:
    header = {
        "config": asdict(config),
        "param_count": param_count(config),
        "tensors": manifest,
    }
    return json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")


def save_model(model: Model, dest: str | BinaryIO) -> None:
    """Write the weights container (see module docstring for the format)."""
    named = _named_tensors(model.weights)
    # lay out payloads after the header, each aligned to 64 bytes
    manifest: list[dict] = []
    # compute header size iteratively: offsets depend on header length
    base_guess = 0
    for _ in range(8):
        manifest = []
        offset = None
        pos = 4 + 4 + 4 + base_guess  # magic, version, header length, header
        for name, arr in named:
            pos = (pos + 63) // 64 * 64
            manifest.append({"name": name, "shape": list(arr.shape), "offset": pos})
            pos += arr.size * 4
        header = _canonical_header(model.config, manifest)
        if len(header) == base_guess:
            break
        base_guess = len(header)
    else:
        raise ContainerIntegrityError("header layout did not converge")

    def write(f: BinaryIO) -> None:
        f.write(MAGIC)
        f.write(FORMAT_VERSION.to_bytes(4, "little"))
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        pos = 12 + len(header)
        for (name, arr), entry in zip(named, manifest):
            pad = entry["offset"] - pos
            f.write(b"\x00" * pad)
            data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
            f.write(data)
            pos = entry["offset"] + len(data)

    if isinstance(dest, (str, bytes)):
        with open(dest, "wb") as f:
            write(f)
    else:
        write(dest)


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise TruncatedPayloadError(
            f"container truncated while reading {what}: wanted {n} bytes, got {len(data)}"
        )
    return data


def load_model(src: str | BinaryIO) -> Model:
    """Read a weights container, verifying magic, shapes, and declared count."""
    if isinstance(src, (str, bytes)):
        with open(src, "rb") as f:
            return load_model(f)
    f = src
    magic = _read_exact(f, 4, "magic")
    if magic != MAGIC:
        raise ContainerFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = int.from_bytes(_read_exact(f, 4, "format version"), "little")
    if version != FORMAT_VERSION:
        raise ContainerFormatError(f"unsupported format version {version}")
    header_len = int.from_bytes(_read_exact(f, 4, "header length"), "little")
    try:
        header = json.loads(_read_exact(f, header_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerFormatError(f"header is not valid JSON: {e}") from e
    try:
        config = ModelConfig(**header["config"])
        declared_count = header["param_count"]
        manifest = header["tensors"]
    except (KeyError, TypeError) as e:
        raise ContainerFormatError(f"header missing required field: {e}") from e

    expected = _expected_shapes(config)
    if len(manifest) != len(expected):
        raise ContainerIntegrityError(
            f"manifest lists {len(manifest)} tensors, expected {len(expected)}"
        )
    arrays: dict[str, np.ndarray] = {}
    pos = 12 + header_len
    for entry, (name, shape) in zip(manifest, expected):
        if entry.get("name") != name:
            raise ContainerIntegrityError(
                f"unexpected tensor {entry.get('name')!r}, expected {name!r}"
            )
        if tuple(entry.get("shape", ())) != shape:
            raise ContainerIntegrityError(
                f"tensor {name} declares shape {entry.get('shape')}, expected {list(shape)}"
            )
        offset = entry.get("offset")
        if not isinstance(offset, int) or offset < pos or offset % 64 != 0:
            raise ContainerIntegrityError(
                f"tensor {name} has invalid offset {offset!r} (position {pos})"
            )
        _read_exact(f, offset - pos, f"padding before {name}")
        count = int(np.prod(shape))
        raw = _read_exact(f, count * 4, f"tensor {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
        pos = offset + count * 4

    actual_count = param_count(config)
    if declared_count != actual_count:
        raise ContainerIntegrityError(
            f"declared param_count {declared_count} != computed {actual_count}"
        )

    layers = [
        LayerWeights(
            attn_norm=arrays[f"layers.{i}.attn_norm"],
            wq=arrays[f"layers.{i}.wq"],
            wk=arrays[f"layers.{i}.wk"],
            wv=arrays[f"layers.{i}.wv"],
            wo=arrays[f"layers.{i}.wo"],
            ffn_norm=arrays[f"layers.{i}.ffn_norm"],
            w_gate=arrays[f"layers.{i}.w_gate"],
            w_up=arrays[f"layers.{i}.w_up"],
            w_down=arrays[f"layers.{i}.w_down"],
        )
        for i in range(config.n_layers)
    ]
    weights = Weights(
        tok_embedding=arrays["tok_embedding"],
        layers=layers,
        final_norm=arrays["final_norm"],
    )
    return Model(config=config, weights=weights)

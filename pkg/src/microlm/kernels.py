"""Dense float32 kernels used by the transformer forward pass.

All tensors are numpy float32 arrays; matrices are row-major with shape
(rows, cols). Kernels validate shapes eagerly and are deterministic:
identical inputs produce identical bits on repeated calls.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

__all__ = [
    "matmul",
    "rmsnorm",
    "rope_angles",
    "apply_rope",
    "silu",
    "swiglu_ffn",
    "softmax",
]

_F32 = np.float32


def _as_f32(x: np.ndarray, name: str, ndim: int) -> np.ndarray:
    a = np.asarray(x)
    if a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {a.shape}")
    return a.astype(_F32, copy=False)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two 2-D float32 arrays."""
    a = _as_f32(a, "a", 2)
    b = _as_f32(b, "b", 2)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dims differ: {a.shape} @ {b.shape}"
        )
    return np.matmul(a, b)


def rmsnorm(x: np.ndarray, gain: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Root-mean-square normalization: x / sqrt(mean(x^2) + eps) * gain.

    Accepts a single vector or a matrix of row vectors; the mean runs over
    the last axis.
    """
    if eps <= 0:
        raise DimensionError(f"eps must be positive, got {eps}")
    x = np.asarray(x, dtype=_F32)
    gain = np.asarray(gain, dtype=_F32)
    if gain.ndim != 1 or x.shape[-1] != gain.shape[0]:
        raise DimensionError(
            f"gain shape {gain.shape} does not match feature dim {x.shape}"
        )
    ms = np.mean(np.square(x), axis=-1, keepdims=True)
    return (x / np.sqrt(ms + _F32(eps))) * gain


def rope_angles(head_dim: int, position: int, theta: float) -> np.ndarray:
    """Rotation angles for one position: position * theta**(-2i/head_dim)."""
    if head_dim % 2 != 0 or head_dim <= 0:
        raise DimensionError(f"head_dim must be positive and even, got {head_dim}")
    if position < 0:
        raise DimensionError(f"position must be non-negative, got {position}")
    i = np.arange(head_dim // 2, dtype=np.float64)
    freqs = theta ** (-2.0 * i / head_dim)
    return position * freqs


def apply_rope(vec: np.ndarray, position: int, theta: float) -> np.ndarray:
    """Rotary position encoding applied to one head-sized vector.

    Adjacent pairs (v[2i], v[2i+1]) are rotated in their plane by
    position * theta**(-2i/head_dim). Norm-preserving.
    """
    v = _as_f32(vec, "vec", 1)
    angles = rope_angles(v.shape[0], position, theta)
    cos = np.cos(angles)
    sin = np.sin(angles)
    even = v[0::2].astype(np.float64)
    odd = v[1::2].astype(np.float64)
    out = np.empty_like(v)
    out[0::2] = (even * cos - odd * sin).astype(_F32)
    out[1::2] = (even * sin + odd * cos).astype(_F32)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x), elementwise."""
    x = np.asarray(x, dtype=_F32)
    return x / (np.float32(1.0) + np.exp(-x))


def swiglu_ffn(
    x: np.ndarray,
    w_gate: np.ndarray,
    w_up: np.ndarray,
    w_down: np.ndarray,
) -> np.ndarray:
    """Gated feed-forward: (silu(x @ w_gate) * (x @ w_up)) @ w_down.

    Weights are (in_features, out_features): w_gate and w_up are (d, m),
    w_down is (m, d). Accepts a vector or a matrix of row vectors.
    """
    x = np.asarray(x, dtype=_F32)
    w_gate = _as_f32(w_gate, "w_gate", 2)
    w_up = _as_f32(w_up, "w_up", 2)
    w_down = _as_f32(w_down, "w_down", 2)
    d, m = w_gate.shape
    if w_up.shape != (d, m):
        raise DimensionError(f"w_up shape {w_up.shape} != w_gate shape {(d, m)}")
    if w_down.shape != (m, d):
        raise DimensionError(f"w_down shape {w_down.shape}, expected {(m, d)}")
    if x.shape[-1] != d:
        raise DimensionError(f"input dim {x.shape[-1]} != weight in-dim {d}")
    return (silu(x @ w_gate) * (x @ w_up)) @ w_down


def softmax(x: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis (max subtraction)."""
    x = np.asarray(x, dtype=_F32)
    if x.size == 0:
        raise DimensionError("softmax of an empty array")
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)

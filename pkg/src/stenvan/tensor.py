"""Dense float64 tensor primitives.

Tensors are plain C-contiguous ``numpy.ndarray`` objects of dtype float64.
Every function here validates shapes up front and raises
:class:`~stenvan.errors.DimensionError` with both offending shapes rather
than letting numpy broadcast silently.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, NumericError

NVT1_MAGIC = b"NVT1"


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array (no copy if already one)."""
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with row-max subtraction."""
    if x.ndim != 2:
        raise DimensionError(f"softmax_rows expects a matrix, got shape {x.shape}")
    if np.isnan(x).any():
        raise NumericError("softmax_rows: NaN in input")
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    # x: (B, C, H, W) -> columns (B*H'*W', C*k*k)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
    return cols, ho, wo


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Zero-padded 2-D cross-correlation without bias.

    Args:
        x: input of shape ``(C_in, H, W)``, or ``(B, C_in, H, W)`` for a
            batch of independent images with shared weights.
        w: kernels of shape ``(C_out, C_in, k, k)``.
        stride: step between output samples, >= 1.
        pad: zero padding added on every spatial border.

    Returns:
        ``(C_out, H', W')`` (or ``(B, C_out, H', W')``) with
        ``H' = (H + 2*pad - k) // stride + 1``.
    """
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: bad ranks, input {x.shape}, kernel {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise DimensionError(f"conv2d: input channels {x.shape} do not match kernel {w.shape}")
    if w.shape[2] != w.shape[3]:
        raise DimensionError(f"conv2d: kernel must be square, got {w.shape}")
    if stride < 1 or pad < 0:
        raise DimensionError(f"conv2d: invalid stride={stride} pad={pad}")
    k = w.shape[2]
    h, wd = x.shape[2:]
    if h + 2 * pad < k or wd + 2 * pad < k:
        raise DimensionError(f"conv2d: kernel {w.shape} larger than padded input {x.shape} (pad={pad})")

    c_out = w.shape[0]
    if k == 1 and pad == 0:
        xs = x[:, :, ::stride, ::stride]
        b, c, ho, wo = xs.shape
        cols = xs.transpose(0, 2, 3, 1).reshape(b * ho * wo, c)
    else:
        cols, ho, wo = _im2col(x, k, stride, pad)
        b = x.shape[0]
    out = cols @ w.reshape(c_out, -1).T
    out = np.ascontiguousarray(out.reshape(b, ho, wo, c_out).transpose(0, 3, 1, 2))
    return out[0] if squeeze else out


def batchnorm_infer(x, gamma, beta, mean, var, eps: float = 1e-5, axis: int = 0) -> np.ndarray:
    """Inference batch norm with fixed per-channel statistics along ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    c = x.shape[axis]
    vecs = [np.asarray(v, dtype=np.float64).reshape(-1) for v in (gamma, beta, mean, var)]
    for name, v in zip(("gamma", "beta", "mean", "var"), vecs):
        if v.shape[0] != c:
            raise DimensionError(f"batchnorm_infer: {name} has length {v.shape[0]}, input {x.shape} has {c} channels on axis {axis}")
    gamma, beta, mean, var = vecs
    if (var < 0).any():
        raise NumericError("batchnorm_infer: negative variance")
    bshape = [1] * x.ndim
    bshape[axis] = c
    scale = (gamma / np.sqrt(var + eps)).reshape(bshape)
    return (x - mean.reshape(bshape)) * scale + beta.reshape(bshape)


def pool(
    x: np.ndarray,
    kind: str,
    window: Sequence[int],
    stride: Sequence[int] | None = None,
    pad: Sequence[int] | None = None,
) -> np.ndarray:
    """Sliding-window max or average reduction over every axis.

    ``window``, ``stride`` and ``pad`` give one entry per axis of ``x``; use a
    window of 1 for axes that should pass through. Max pooling pads with
    ``-inf``, average pooling with zeros and always divides by the full
    window volume.
    """
    if kind not in ("max", "avg"):
        raise ValueError(f"pool kind must be 'max' or 'avg', got {kind!r}")
    window = tuple(int(v) for v in window)
    stride = window if stride is None else tuple(int(v) for v in stride)
    pad = (0,) * x.ndim if pad is None else tuple(int(v) for v in pad)
    if not (len(window) == len(stride) == len(pad) == x.ndim):
        raise DimensionError(f"pool: window {window}/stride {stride}/pad {pad} do not match input rank {x.shape}")
    if any(s < 1 for s in stride) or any(p < 0 for p in pad):
        raise DimensionError(f"pool: invalid stride {stride} or pad {pad}")
    for n, wv, p in zip(x.shape, window, pad):
        if wv < 1 or wv > n + 2 * p:
            raise DimensionError(f"pool: window {window} exceeds input {x.shape} (pad {pad})")
    if any(pad):
        fill = -np.inf if kind == "max" else 0.0
        x = np.pad(x, [(p, p) for p in pad], constant_values=fill)
    win = sliding_window_view(x, window)
    win = win[tuple(slice(None, None, s) for s in stride)]
    red = tuple(range(x.ndim, 2 * x.ndim))
    if kind == "max":
        return np.ascontiguousarray(win.max(axis=red))
    return np.ascontiguousarray(win.sum(axis=red) / float(np.prod(window)))


def reshape(x: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    return np.ascontiguousarray(x).reshape(shape).copy()


def permute(x: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """Materialized axis permutation (``out.shape[i] == x.shape[order[i]]``)."""
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(x.ndim)):
        raise DimensionError(f"permute: order {order} is not a permutation of the axes of {x.shape}")
    return np.ascontiguousarray(x.transpose(order))


def inverse_permutation(order: Sequence[int]) -> tuple[int, ...]:
    inv = [0] * len(order)
    for i, o in enumerate(order):
        inv[o] = i
    return tuple(inv)


# NVT1 binary format: b"NVT1", u32 ndim, ndim x u32 dims, f32 payload (all LE).

def encode_nvt1(x: np.ndarray) -> bytes:
    x = np.asarray(x)
    if any(d < 1 for d in x.shape) or x.ndim == 0:
        raise DimensionError(f"NVT1 requires positive dimensions, got {x.shape}")
    head = NVT1_MAGIC + struct.pack(f"<I{x.ndim}I", x.ndim, *x.shape)
    return head + np.ascontiguousarray(x, dtype="<f4").tobytes()


def decode_nvt1(buf: bytes) -> np.ndarray:
    if len(buf) < 8 or buf[:4] != NVT1_MAGIC:
        raise DimensionError("not an NVT1 tensor (bad magic)")
    (ndim,) = struct.unpack_from("<I", buf, 4)
    off = 8 + 4 * ndim
    if ndim == 0 or len(buf) < off:
        raise DimensionError(f"NVT1: truncated header (ndim={ndim})")
    shape = struct.unpack_from(f"<{ndim}I", buf, 8)
    n = int(np.prod(shape))
    if any(d < 1 for d in shape) or len(buf) != off + 4 * n:
        raise DimensionError(f"NVT1: payload of {len(buf) - off} bytes does not match shape {shape}")
    return np.frombuffer(buf, dtype="<f4", offset=off, count=n).astype(np.float64).reshape(shape)


def save_nvt1(path, x: np.ndarray) -> None:
    Path(path).write_bytes(encode_nvt1(x))


def load_nvt1(path) -> np.ndarray:
    return decode_nvt1(Path(path).read_bytes())

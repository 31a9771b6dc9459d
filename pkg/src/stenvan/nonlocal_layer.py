"""Embedded-Gaussian non-local attention over all T*H*W positions.

Layout convention: features are ``(C, T, H, W)``. Internally the tensor is
flattened to ``N x C`` rows, one per space-time position, so that

    q = x theta^T,  k = x phi^T,  v = x g^T          (N x C')
    A = softmax_rows(q k^T)                           (N x N)
    z = x + (A v) W_z^T                               (N x C)

The stripe variant pools each frame into S horizontal bands first and runs
the same attention over the T*S band vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DimensionError, NumericError
from .tensor import as_tensor, load_nvt1, save_nvt1, softmax_rows

_WEIGHTS = ("theta_w", "phi_w", "g_w", "wz_w")


@dataclass(frozen=True, eq=False)
class NonLocalParams:
    """Projection weights of one non-local layer.

    ``theta_w``, ``phi_w`` and ``g_w`` are ``(C', C)``; ``wz_w`` is ``(C, C')``.
    """

    theta_w: np.ndarray
    phi_w: np.ndarray
    g_w: np.ndarray
    wz_w: np.ndarray

    def __post_init__(self):
        for name in _WEIGHTS:
            object.__setattr__(self, name, as_tensor(getattr(self, name)))
        ce, c = self.theta_w.shape
        if not 1 <= ce <= c:
            raise DimensionError(f"c_embed={ce} must lie in [1, c_in={c}]")
        for name in ("phi_w", "g_w"):
            if getattr(self, name).shape != (ce, c):
                raise DimensionError(f"{name} has shape {getattr(self, name).shape}, expected {(ce, c)}")
        if self.wz_w.shape != (c, ce):
            raise DimensionError(f"wz_w has shape {self.wz_w.shape}, expected {(c, ce)}")

    @property
    def c_in(self) -> int:
        return self.theta_w.shape[1]

    @property
    def c_embed(self) -> int:
        return self.theta_w.shape[0]

    @classmethod
    def init(cls, c_in: int, c_embed: int | None = None, seed: int = 0) -> "NonLocalParams":
        """Seeded uniform(+-1/sqrt(C)) projections and a zero ``W_z``.

        The zero output projection makes a fresh layer an exact identity.
        ``c_embed`` defaults to ``max(1, c_in // 2)``.
        """
        if c_embed is None:
            c_embed = max(1, c_in // 2)
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(c_in)
        mats = [rng.uniform(-bound, bound, size=(c_embed, c_in)) for _ in range(3)]
        return cls(*mats, np.zeros((c_in, c_embed)))

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        files = {name: f"{name}.nvt1" for name in _WEIGHTS}
        for name, fname in files.items():
            save_nvt1(d / fname, getattr(self, name))
        manifest = {"c_in": self.c_in, "c_embed": self.c_embed, "files": files}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory) -> "NonLocalParams":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        p = cls(**{name: load_nvt1(d / manifest["files"][name]) for name in _WEIGHTS})
        if (p.c_in, p.c_embed) != (manifest["c_in"], manifest["c_embed"]):
            raise DimensionError(f"manifest declares ({manifest['c_in']}, {manifest['c_embed']}), weights are ({p.c_in}, {p.c_embed})")
        return p


@dataclass(frozen=True)
class StripeConfig:
    """Number of horizontal bands per frame; bands are mean-pooled."""

    num_stripes: int = 16

    def __post_init__(self):
        if self.num_stripes < 1:
            raise DimensionError(f"num_stripes must be positive, got {self.num_stripes}")


@dataclass(eq=False)
class NonLocalCache:
    """Intermediates saved by :func:`nonlocal_forward` for the backward pass."""

    shape: tuple
    x: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    attn: np.ndarray
    y: np.ndarray
    params: NonLocalParams = field(repr=False)


def _attend(xf: np.ndarray, p: NonLocalParams):
    q = xf @ p.theta_w.T
    k = xf @ p.phi_w.T
    v = xf @ p.g_w.T
    attn = softmax_rows(q @ k.T)
    y = attn @ v
    return q, k, v, attn, y


def _check_input(x: np.ndarray, p: NonLocalParams) -> None:
    if x.ndim != 4:
        raise DimensionError(f"expected a (C, T, H, W) tensor, got shape {x.shape}")
    if x.shape[0] != p.c_in:
        raise DimensionError(f"input has {x.shape[0]} channels {x.shape}, layer expects c_in={p.c_in}")


def _check_finite(z: np.ndarray, what: str) -> None:
    if not np.isfinite(z).all():
        raise NumericError(f"{what}: non-finite activations")


def nonlocal_forward(x: np.ndarray, p: NonLocalParams) -> tuple[np.ndarray, NonLocalCache]:
    """Dense non-local layer ``z = x + W_z y`` over every space-time position.

    Returns the output (same shape as ``x``) and a cache for
    :func:`nonlocal_backward`.
    """
    x = as_tensor(x)
    _check_input(x, p)
    xf = x.reshape(p.c_in, -1).T
    q, k, v, attn, y = _attend(xf, p)
    z = x + (p.wz_w @ y.T).reshape(x.shape)
    _check_finite(z, "nonlocal_forward")
    return z, NonLocalCache(x.shape, xf, q, k, v, attn, y, p)


def nonlocal_backward(grad_z: np.ndarray, cache: NonLocalCache, p: NonLocalParams) -> tuple[np.ndarray, NonLocalParams]:
    """Exact gradients of :func:`nonlocal_forward`.

    Returns ``(grad_x, grads)`` where ``grads`` is a :class:`NonLocalParams`
    holding the gradient of each weight matrix.
    """
    if cache.params is not p:
        raise ContractError("nonlocal_backward: cache was produced with different parameters")
    grad_z = as_tensor(grad_z)
    if grad_z.shape != tuple(cache.shape):
        raise ContractError(f"nonlocal_backward: grad_z shape {grad_z.shape} does not match cached forward shape {cache.shape}")

    gz = grad_z.reshape(p.c_in, -1).T
    d_wz = gz.T @ cache.y
    dy = gz @ p.wz_w
    d_attn = dy @ cache.v.T
    dv = cache.attn.T @ dy
    # softmax Jacobian applied row by row
    ds = cache.attn * (d_attn - (d_attn * cache.attn).sum(axis=1, keepdims=True))
    dq = ds @ cache.k
    dk = ds.T @ cache.q

    xf = cache.x
    grads = NonLocalParams(dq.T @ xf, dk.T @ xf, dv.T @ xf, d_wz)
    dx = gz + dq @ p.theta_w + dk @ p.phi_w + dv @ p.g_w
    return np.ascontiguousarray(dx.T).reshape(cache.shape), grads


def stripe_heights(h: int, s: int) -> list[int]:
    """Band heights for ``s`` stripes over ``h`` rows; the first ``h % s`` get one extra row."""
    if s > h:
        raise DimensionError(f"cannot cut {h} rows into {s} stripes")
    base, extra = divmod(h, s)
    return [base + 1 if i < extra else base for i in range(s)]


def make_stripes(x: np.ndarray, s: StripeConfig) -> np.ndarray:
    """Mean of each horizontal band over its rows and all columns: ``(C,T,H,W) -> (C,T,S)``."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"make_stripes expects (C, T, H, W), got {x.shape}")
    heights = stripe_heights(x.shape[2], s.num_stripes)
    bounds = np.cumsum([0] + heights)
    return np.stack(
        [x[:, :, a:b, :].mean(axis=(2, 3)) for a, b in zip(bounds[:-1], bounds[1:])],
        axis=2,
    )


def stripe_nonlocal_forward(x: np.ndarray, p: NonLocalParams, s: StripeConfig, return_attention: bool = False):
    """Spatially reduced non-local layer.

    Attention runs over the ``T*S`` stripe vectors; the projected update
    ``W_z y`` (``C x T x S``) is repeated over each band's rows and all
    columns before the residual add.
    """
    x = as_tensor(x)
    _check_input(x, p)
    c, t, h, w = x.shape
    heights = stripe_heights(h, s.num_stripes)
    xs = make_stripes(x, s)
    _, _, _, attn, y = _attend(xs.reshape(c, -1).T, p)
    upd = (p.wz_w @ y.T).reshape(c, t, s.num_stripes)
    upd = np.repeat(upd, heights, axis=2)[..., None]
    z = x + upd
    _check_finite(z, "stripe_nonlocal_forward")
    return (z, attn) if return_attention else z

"""Feature pooling layer: global 3-D pooling over (T', H, W) then batch norm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import BatchNorm, VideoFeatures
from .errors import DimensionError
from .tensor import as_tensor, batchnorm_infer, pool


@dataclass(frozen=True, eq=False)
class PooledFeature:
    pre_bn: np.ndarray  # triplet-loss tap
    post_bn: np.ndarray  # classification tap and retrieval feature


def fpl_forward(v: VideoFeatures | np.ndarray, kind: str = "avg", bn: BatchNorm | None = None) -> PooledFeature:
    """Pool a ``(C, T', H, W)`` feature tensor to one ``C``-vector.

    ``bn`` defaults to identity statistics (gamma=1, beta=0, mean=0, var=1,
    eps=0), so ``post_bn == pre_bn`` unless real statistics are supplied.
    """
    x = as_tensor(v.tensor if isinstance(v, VideoFeatures) else v)
    if x.ndim != 4 or x.size == 0:
        raise DimensionError(f"fpl_forward expects a non-empty (C, T, H, W) tensor, got {x.shape}")
    c = x.shape[0]
    pre = pool(x, kind, (1, *x.shape[1:])).reshape(c)
    if bn is None:
        bn = BatchNorm(np.ones(c), np.zeros(c), np.zeros(c), np.ones(c), eps=0.0)
    post = batchnorm_infer(pre, bn.gamma, bn.beta, bn.mean, bn.var, bn.eps, axis=0)
    return PooledFeature(pre, post)

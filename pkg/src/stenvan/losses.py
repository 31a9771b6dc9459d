"""Training objectives (forward only) and P x K batch composition."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DimensionError
from .sampling import Track


@dataclass(frozen=True, eq=False)
class LabeledBatch:
    embeddings: np.ndarray  # (B, D)
    labels: np.ndarray  # (B,)

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        lab = np.asarray(self.labels)
        if emb.ndim != 2 or lab.shape != (emb.shape[0],):
            raise DimensionError(f"embeddings {emb.shape} and labels {lab.shape} disagree")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", lab)


def cross_entropy(logits: np.ndarray, labels: Sequence[int]) -> float:
    """Mean negative log-softmax of the true class."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"logits {logits.shape} and labels {labels.shape} disagree")
    k = logits.shape[1]
    if ((labels < 0) | (labels >= k)).any():
        raise ContractError(f"labels must lie in [0, {k}), got {labels.tolist()}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    per = lse - shifted[np.arange(len(labels)), labels]
    return float(per.mean())


def euclidean_matrix(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # direct differences, not the |x|^2 - 2xy + |y|^2 expansion, to keep exact zeros
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def batch_hard_triplet(batch: LabeledBatch) -> float:
    """Soft-margin batch-hard triplet loss with non-squared Euclidean distance.

    For each anchor: ``softplus(max_p d(a, p) - min_n d(a, n))`` over in-batch
    positives (anchor excluded) and negatives; averaged over anchors.
    """
    emb, lab = batch.embeddings, batch.labels
    b = emb.shape[0]
    if b < 2:
        raise ContractError(f"triplet loss needs at least 2 embeddings, got {b}")
    d = euclidean_matrix(emb, emb)
    same = lab[:, None] == lab[None, :]
    pos = same & ~np.eye(b, dtype=bool)
    neg = ~same
    for i in range(b):
        if not pos[i].any():
            raise ContractError(f"anchor {i} (identity {lab[i].item()!r}) has no positive in the batch")
        if not neg[i].any():
            raise ContractError(f"anchor {i} (identity {lab[i].item()!r}) has no negative in the batch")
    hardest_pos = np.where(pos, d, -np.inf).max(axis=1)
    hardest_neg = np.where(neg, d, np.inf).min(axis=1)
    return float(np.logaddexp(0.0, hardest_pos - hardest_neg).mean())


def pk_batch_compose(catalog: Sequence[Track], p: int, k: int, seed=None) -> list[int]:
    """Pick ``p`` identities and ``k`` tracks of each; returns catalog indices grouped by identity.

    Identities with fewer than ``k`` tracks are sampled with replacement.
    """
    if p < 1 or k < 1:
        raise ContractError(f"P and K must be positive, got P={p}, K={k}")
    by_id: dict = defaultdict(list)
    for i, tr in enumerate(catalog):
        by_id[tr.id].append(i)
    ids = sorted(by_id)
    if len(ids) < p:
        raise ContractError(f"catalog has {len(ids)} identities, need P={p}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(ids), size=p, replace=False)
    out: list[int] = []
    for j in chosen:
        tracks = by_id[ids[j]]
        take = rng.choice(tracks, size=k, replace=len(tracks) < k)
        out.extend(int(t) for t in take)
    return out

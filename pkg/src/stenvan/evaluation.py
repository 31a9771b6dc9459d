"""Re-ID retrieval metrics: distance matrix, CMC / rank-1 and mAP.

Gallery entries sharing both identity and camera with the query are
dropped before ranking (cross-camera protocol) unless ``cam_filter=False``.
Distance ties are broken by gallery index.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import as_tensor, load_nvt1, save_nvt1

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    vectors: np.ndarray  # (N, D)
    ids: np.ndarray  # (N,)
    cameras: np.ndarray  # (N,)

    def __post_init__(self):
        vec = as_tensor(self.vectors)
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        cams = np.asarray(self.cameras, dtype=np.int64).reshape(-1)
        if vec.ndim != 2 or vec.shape[1] < 1:
            raise DimensionError(f"vectors must be (N, D) with D >= 1, got {vec.shape}")
        if not (vec.shape[0] == ids.shape[0] == cams.shape[0]):
            raise DimensionError(f"lengths disagree: vectors {vec.shape[0]}, ids {ids.shape[0]}, cameras {cams.shape[0]}")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "cameras", cams)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def save(self, directory) -> None:
        """Write ``header.json`` ({n, d}), ``vectors.nvt1`` and ``labels.csv`` (index,id,camera)."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        n, dim = self.vectors.shape
        (d / "header.json").write_text(json.dumps({"n": n, "d": dim}, sort_keys=True) + "\n")
        save_nvt1(d / "vectors.nvt1", self.vectors)
        with open(d / "labels.csv", "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["index", "id", "camera"])
            for i, (pid, cam) in enumerate(zip(self.ids, self.cameras)):
                wr.writerow([i, int(pid), int(cam)])

    @classmethod
    def load(cls, directory) -> "EmbeddingSet":
        d = Path(directory)
        header = json.loads((d / "header.json").read_text())
        vec = load_nvt1(d / "vectors.nvt1")
        if vec.shape != (header["n"], header["d"]):
            raise DimensionError(f"header declares ({header['n']}, {header['d']}), vectors are {vec.shape}")
        with open(d / "labels.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        rows.sort(key=lambda r: int(r["index"]))
        if [int(r["index"]) for r in rows] != list(range(header["n"])):
            raise DimensionError(f"labels.csv must index rows 0..{header['n'] - 1}")
        return cls(vec, [int(r["id"]) for r in rows], [int(r["camera"]) for r in rows])


def pairwise_distances(q: EmbeddingSet | np.ndarray, g: EmbeddingSet | np.ndarray) -> np.ndarray:
    qv = q.vectors if isinstance(q, EmbeddingSet) else as_tensor(q)
    gv = g.vectors if isinstance(g, EmbeddingSet) else as_tensor(g)
    if qv.shape[1] != gv.shape[1]:
        raise DimensionError(f"feature dimensions differ: query {qv.shape}, gallery {gv.shape}")
    diff = qv[:, None, :] - gv[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


@dataclass
class RetrievalResult:
    rank1: float
    mAP: float
    cmc: np.ndarray
    num_valid: int
    skipped_queries: list[int] = field(default_factory=list)


def evaluate(dist, q_ids, g_ids, q_cams, g_cams, cam_filter: bool = True) -> RetrievalResult:
    """CMC curve, rank-1 and mAP over the queries that have a valid match.

    Queries without any valid gallery match are left out of every average
    and listed in ``skipped_queries``.
    """
    dist = as_tensor(dist)
    q_ids, g_ids = np.asarray(q_ids), np.asarray(g_ids)
    q_cams, g_cams = np.asarray(q_cams), np.asarray(g_cams)
    nq, ng = dist.shape
    if q_ids.shape != (nq,) or q_cams.shape != (nq,) or g_ids.shape != (ng,) or g_cams.shape != (ng,):
        raise DimensionError(f"label vectors do not match distance matrix {dist.shape}")

    order = np.argsort(dist, axis=1, kind="stable")
    cmc_sum = np.zeros(ng)
    aps = []
    skipped = []
    for i in range(nq):
        ranked = order[i]
        if cam_filter:
            keep = ~((g_ids[ranked] == q_ids[i]) & (g_cams[ranked] == q_cams[i]))
            ranked = ranked[keep]
        hits = g_ids[ranked] == q_ids[i]
        if not hits.any():
            skipped.append(i)
            continue
        first = int(np.argmax(hits))
        cmc_sum[first:] += 1
        cum = np.cumsum(hits)
        ranks = np.flatnonzero(hits) + 1
        aps.append(math.fsum(cum[hits] / ranks) / len(ranks))
    if skipped:
        log.warning("%d of %d queries have no valid gallery match and were skipped", len(skipped), nq)
    if not aps:
        raise ContractError("no query has a valid gallery match")
    n = len(aps)
    # correctly rounded sums make the result independent of summation order
    return RetrievalResult(float(cmc_sum[0] / n), math.fsum(aps) / n, cmc_sum / n, n, skipped)


def cmc_rank1(dist, q_ids, g_ids, q_cams, g_cams, cam_filter: bool = True) -> float:
    return evaluate(dist, q_ids, g_ids, q_cams, g_cams, cam_filter).rank1


def mean_average_precision(dist, q_ids, g_ids, q_cams, g_cams, cam_filter: bool = True) -> float:
    return evaluate(dist, q_ids, g_ids, q_cams, g_cams, cam_filter).mAP


def evaluate_sets(query: EmbeddingSet, gallery: EmbeddingSet, cam_filter: bool = True) -> RetrievalResult:
    dist = pairwise_distances(query, gallery)
    return evaluate(dist, query.ids, gallery.ids, query.cameras, gallery.cameras, cam_filter)

"""Restricted random sampling of frame indices from a track."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class Track:
    length: int
    id: int
    camera: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ContractError(f"track length must be >= 1, got {self.length}")


def chunk_bounds(track_len: int, t_chunks: int) -> list[tuple[int, int]]:
    """Chunk ``i`` covers ``[floor(i*L/T), floor((i+1)*L/T))``."""
    return [(i * track_len // t_chunks, (i + 1) * track_len // t_chunks) for i in range(t_chunks)]


def rrs_sample(track_len: int, t_chunks: int, mode: str = "test", rng_seed=None) -> list[int]:
    """One frame index per chunk: random in ``train`` mode, the chunk start in ``test``.

    When the track is shorter than ``t_chunks`` some chunks are empty; those
    yield their start index, which duplicates a neighbouring frame. The
    result is always non-decreasing.
    """
    if track_len < 1 or t_chunks < 1:
        raise ContractError(f"need track_len >= 1 and t_chunks >= 1, got {track_len}, {t_chunks}")
    if mode not in ("train", "test"):
        raise ContractError(f"mode must be 'train' or 'test', got {mode!r}")
    bounds = chunk_bounds(track_len, t_chunks)
    if mode == "test":
        return [a for a, _ in bounds]
    rng = np.random.default_rng(rng_seed)
    return [int(rng.integers(a, b)) if b > a else a for a, b in bounds]

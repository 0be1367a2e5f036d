"""Run-length encoding for masks and voxel sets (flattened row-major slices)."""

from __future__ import annotations

import numpy as np


def encode_mask(slice2d: np.ndarray) -> list[list[int]]:
    """Full-coverage RLE: [[value, run_length], ...] over the flattened slice."""
    flat = np.asarray(slice2d).ravel()
    if flat.size == 0:
        return []
    boundaries = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [flat.size]])
    return [[int(flat[s]), int(e - s)] for s, e in zip(starts, ends)]


def decode_mask(runs: list[list[int]], shape: tuple[int, int], dtype=np.uint8) -> np.ndarray:
    total = int(np.prod(shape))
    flat = np.empty(total, dtype=dtype)
    pos = 0
    for value, length in runs:
        if length <= 0:
            raise ValueError("non-positive run length")
        flat[pos : pos + length] = value
        pos += length
    if pos != total:
        raise ValueError(f"runs cover {pos} voxels, slice has {total}")
    return flat.reshape(shape)


def encode_index_runs(indices: np.ndarray) -> list[list[int]]:
    """Sparse voxel set as [[start, length], ...] over sorted flat indices."""
    idx = np.unique(np.asarray(indices, dtype=np.int64))
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) != 1) + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [idx.size]])
    return [[int(idx[s]), int(e - s)] for s, e in zip(starts, ends)]


def decode_index_runs(runs: list[list[int]]) -> np.ndarray:
    parts = []
    for start, length in runs:
        if length <= 0 or start < 0:
            raise ValueError("invalid index run")
        parts.append(np.arange(start, start + length, dtype=np.int64))
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(parts)

"""Separate tolerated segmentation errors from failures that need correction.

A mis-labeled voxel becomes a failure candidate when it lies farther from the
reference boundary of the affected structure than the tolerance allows
(stricter inside than outside, since CNNs tend to undersegment). Candidates
are clustered per class per slice (2D, 4-connected) and small clusters are
dropped, except on the apical slice; slices outside the reference
foreground z-range keep every error unconditionally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import FOREGROUND_CLASSES, PATCH_SIZE

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class ToleranceSpec:
    outside_voxels: int = 3
    inside_voxels: int = 2
    min_cluster: int = 10

    def __post_init__(self):
        if not self.outside_voxels >= self.inside_voxels >= 0:
            raise ValueError("need outside_voxels >= inside_voxels >= 0")
        if self.min_cluster < 1:
            raise ValueError("min_cluster must be >= 1")


@dataclass
class FailureSet:
    voxel_mask: np.ndarray  # (Z, H, W) bool
    patch_labels: np.ndarray  # (Z, ceil(H/p), ceil(W/p)) bool
    patch_size: int
    spec: ToleranceSpec

    def slice_has_failure(self) -> np.ndarray:
        return self.patch_labels.any(axis=(1, 2))


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a 4-neighbor outside the region (image edge counts)."""
    m = mask.astype(bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def boundary_distance_map(ref_slice: np.ndarray, cls: int) -> np.ndarray:
    """Euclidean distance (voxels) to the nearest boundary voxel of `cls`.

    Zero on the boundary itself, defined both inside and outside the region;
    infinity when the class is absent from the slice.
    """
    border = boundary_mask(ref_slice == cls)
    if not border.any():
        return np.full(ref_slice.shape, np.inf)
    return ndimage.distance_transform_edt(~border)


def patch_labels(voxel_mask: np.ndarray, patch_size: int = PATCH_SIZE) -> np.ndarray:
    """Non-overlapping patch grid: cell true iff any voxel in its patch is true."""
    h, w = voxel_mask.shape
    if h % patch_size or w % patch_size:
        raise ValueError(f"slice dims {voxel_mask.shape} not divisible by {patch_size}")
    gh, gw = h // patch_size, w // patch_size
    return voxel_mask.reshape(gh, patch_size, gw, patch_size).any(axis=(1, 3))


def pad_to_multiple(mask: np.ndarray, multiple: int) -> np.ndarray:
    h, w = mask.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return mask
    pad = [(0, 0)] * (mask.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(mask, pad, constant_values=False)


def _filter_small_clusters(candidates: np.ndarray, min_cluster: int) -> np.ndarray:
    if min_cluster <= 1 or not candidates.any():
        return candidates
    labels, n = ndimage.label(candidates, structure=_FOUR_CONNECTED)
    if n == 0:
        return candidates
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_cluster
    keep[0] = False
    return keep[labels]


def compute_failure_set(
    pred: np.ndarray, ref: np.ndarray, spec: ToleranceSpec = ToleranceSpec(), patch_size: int = PATCH_SIZE
) -> FailureSet:
    if pred.shape != ref.shape:
        raise ValueError(f"prediction {pred.shape} and reference {ref.shape} differ")
    nz, h, w = ref.shape
    fg_slices = np.flatnonzero((ref > 0).any(axis=(1, 2)))
    if fg_slices.size:
        apex_z, base_z = int(fg_slices[0]), int(fg_slices[-1])
    else:
        apex_z = base_z = None

    voxel_mask = np.zeros_like(pred, dtype=bool)
    for z in range(nz):
        errors = pred[z] != ref[z]
        if not errors.any():
            continue
        if apex_z is None or z < apex_z or z > base_z:
            # beyond the annotated heart: every error is a failure
            voxel_mask[z] = errors
            continue
        for cls in FOREGROUND_CLASSES:
            dist = boundary_distance_map(ref[z], cls)
            false_pos = (pred[z] == cls) & (ref[z] != cls) & (dist > spec.outside_voxels)
            false_neg = (ref[z] == cls) & (pred[z] != cls) & (dist > spec.inside_voxels)
            candidates = false_pos | false_neg
            if z != apex_z:
                candidates = _filter_small_clusters(candidates, spec.min_cluster)
            voxel_mask[z] |= candidates

    padded = pad_to_multiple(voxel_mask, patch_size)
    grids = np.stack([patch_labels(padded[z], patch_size) for z in range(nz)])
    return FailureSet(voxel_mask=voxel_mask, patch_labels=grids, patch_size=patch_size, spec=spec)

"""Detector input cropping around the automatic segmentation mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_CROP = 80
GRID_MULTIPLE = 8


@dataclass(frozen=True)
class CropGeometry:
    offset: tuple[int, int]  # (row, col) of the crop origin in slice coordinates
    size: tuple[int, int]

    def grid_shape(self, patch_size: int = GRID_MULTIPLE) -> tuple[int, int]:
        return self.size[0] // patch_size, self.size[1] // patch_size


def _ceil_multiple(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


def _axis_window(extent: int, lo: int, hi: int, size: int) -> int:
    """Start of a size-long window centered on [lo, hi), kept in bounds when possible."""
    start = (lo + hi - size) // 2
    if size <= extent:
        return min(max(start, 0), extent - size)
    return (extent - size) // 2  # window larger than the slice: centered padding


def crop_with_padding(arr: np.ndarray, offset: tuple[int, int], size: tuple[int, int]) -> np.ndarray:
    """Extract a window that may extend past the array; outside voxels are zero."""
    h, w = arr.shape
    r0, c0 = offset
    out = np.zeros(size, dtype=arr.dtype)
    rs, re = max(r0, 0), min(r0 + size[0], h)
    cs, ce = max(c0, 0), min(c0 + size[1], w)
    if rs < re and cs < ce:
        out[rs - r0 : re - r0, cs - c0 : ce - c0] = arr[rs:re, cs:ce]
    return out


def crop_size_for_bbox(bbox_h: int, bbox_w: int, min_size: int = MIN_CROP, multiple: int = GRID_MULTIPLE) -> tuple[int, int]:
    return (
        max(min_size, _ceil_multiple(bbox_h, multiple)),
        max(min_size, _ceil_multiple(bbox_w, multiple)),
    )


def crop_for_detection(
    image_slice: np.ndarray,
    umap_slice: np.ndarray,
    auto_seg_slice: np.ndarray,
    min_size: int = MIN_CROP,
    multiple: int = GRID_MULTIPLE,
) -> tuple[np.ndarray, np.ndarray, CropGeometry]:
    """Crop (image, uncertainty map) around the automatic segmentation.

    The window covers the minimal enclosing bounding box of the mask, is at
    least `min_size` per side and a multiple of the grid spacing; with an
    empty mask the slice is center-cropped to `min_size` squared. Windows
    larger than the slice are zero-padded.
    """
    if image_slice.shape != umap_slice.shape or image_slice.shape != auto_seg_slice.shape:
        raise ValueError("image, uncertainty map and segmentation slices must align")
    h, w = image_slice.shape
    rows, cols = np.nonzero(auto_seg_slice > 0)
    if rows.size == 0:
        size = (min_size, min_size)
        offset = ((h - min_size) // 2, (w - min_size) // 2)
    else:
        r0, r1 = int(rows.min()), int(rows.max()) + 1
        c0, c1 = int(cols.min()), int(cols.max()) + 1
        size = crop_size_for_bbox(r1 - r0, c1 - c0, min_size, multiple)
        offset = (_axis_window(h, r0, r1, size[0]), _axis_window(w, c0, c1, size[1]))
    geometry = CropGeometry(offset=offset, size=size)
    return (
        crop_with_padding(image_slice, offset, size),
        crop_with_padding(umap_slice, offset, size),
        geometry,
    )

"""Prediction post-processing: largest-component filtering and grid inversion."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .. import FOREGROUND_CLASSES
from ..io.preprocess import ResampleGeometry, invert_resample_labels


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 26:
        return np.ones((3, 3, 3), dtype=bool)
    if connectivity == 6:
        return ndimage.generate_binary_structure(3, 1)
    raise ValueError("connectivity must be 6 or 26")


def largest_component_filter(labels: np.ndarray, connectivity: int = 26) -> np.ndarray:
    """Keep only the largest 3D connected component per foreground class."""
    structure = _structure(connectivity)
    out = labels.copy()
    for cls in FOREGROUND_CLASSES:
        mask = labels == cls
        if not mask.any():
            continue
        components, n = ndimage.label(mask, structure=structure)
        if n <= 1:
            continue
        sizes = np.bincount(components.ravel())
        sizes[0] = 0
        keep = sizes.argmax()
        out[mask & (components != keep)] = 0
    return out


def postprocess_segmentation(
    labels: np.ndarray,
    geometry: ResampleGeometry | None = None,
    connectivity: int = 26,
) -> np.ndarray:
    """Largest-component filtering, then (optionally) inverse in-plane resampling."""
    filtered = largest_component_filter(labels, connectivity)
    if geometry is None:
        return filtered
    return invert_resample_labels(filtered, geometry)

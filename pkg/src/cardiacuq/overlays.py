"""PNG overlay emitter: image, contours, uncertainty heat and flagged regions."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.patches as mpatches
import matplotlib.pyplot as plt
import numpy as np

_CONTOUR_COLORS = {1: "tab:orange", 2: "tab:green", 3: "tab:red"}


def render_slice_overlay(
    image: np.ndarray,
    pred: np.ndarray | None,
    ref: np.ndarray | None,
    umap: np.ndarray | None,
    flagged_windows,
    path,
    patch_size: int = 8,
) -> Path:
    """Write a composite PNG for one slice.

    `flagged_windows` is an iterable of (row0, col0) voxel corners of
    patch-size regions; pred/ref are drawn as contours, the uncertainty map
    as a translucent heat layer.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 5), dpi=110)
    ax.imshow(image, cmap="gray", interpolation="nearest")
    if umap is not None:
        ax.imshow(umap, cmap="magma", alpha=0.35, vmin=0.0, vmax=1.0, interpolation="nearest")
    for labels, style in ((ref, "--"), (pred, "-")):
        if labels is None:
            continue
        for cls, color in _CONTOUR_COLORS.items():
            mask = labels == cls
            if mask.any():
                ax.contour(mask.astype(float), levels=[0.5], colors=[color], linestyles=style, linewidths=1.2)
    for r0, c0 in flagged_windows:
        ax.add_patch(
            mpatches.Rectangle(
                (c0 - 0.5, r0 - 0.5), patch_size, patch_size,
                fill=False, edgecolor="yellow", linewidth=1.4,
            )
        )
    ax.set_axis_off()
    fig.tight_layout(pad=0)
    fig.savefig(path)
    plt.close(fig)
    return path

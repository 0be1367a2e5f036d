"""Running the trained detector over volumes and mapping grids back to voxels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from ..io.layout import load_arrays, save_arrays
from ..uncertainty import UncertaintyMap
from .crops import CropGeometry, crop_for_detection

DEFAULT_THRESHOLD = 0.5


@dataclass
class SliceDetection:
    z: int
    probs: np.ndarray  # (k, m) failure probability per region
    offset: tuple[int, int]


@dataclass
class DetectionResult:
    slices: list[SliceDetection]
    decision_threshold: float = DEFAULT_THRESHOLD
    patch_size: int = 8
    umap_kind: str = "entropy"

    def flagged_regions(self, threshold: float | None = None) -> list[tuple[int, int, int]]:
        thr = self.decision_threshold if threshold is None else threshold
        out = []
        for s in self.slices:
            for gr, gc in np.argwhere(s.probs >= thr):
                out.append((s.z, int(gr), int(gc)))
        return out

    def voxel_regions(self, threshold: float | None = None) -> list[tuple[int, int, int]]:
        """Flagged regions as (z, row0, col0) voxel windows in volume coordinates."""
        thr = self.decision_threshold if threshold is None else threshold
        p = self.patch_size
        out = []
        for s in self.slices:
            r_off, c_off = s.offset
            for gr, gc in np.argwhere(s.probs >= thr):
                out.append((s.z, r_off + int(gr) * p, c_off + int(gc) * p))
        return out

    def scored_voxel_regions(self) -> list[tuple[int, int, int, float]]:
        p = self.patch_size
        out = []
        for s in self.slices:
            r_off, c_off = s.offset
            for (gr, gc), prob in np.ndenumerate(s.probs):
                out.append((s.z, r_off + gr * p, c_off + gc * p, float(prob)))
        return out

    def slice_scores(self) -> np.ndarray:
        """Per-slice detection score: the maximum region probability."""
        return np.array([float(s.probs.max()) if s.probs.size else 0.0 for s in self.slices])

    def save(self, path) -> None:
        arrays = {}
        offsets = np.array([s.offset for s in self.slices], dtype=np.int64)
        zs = np.array([s.z for s in self.slices], dtype=np.int64)
        for i, s in enumerate(self.slices):
            arrays[f"slice_{i:03d}/probs"] = s.probs.astype(np.float32)
        arrays["offsets"] = offsets
        arrays["zs"] = zs
        save_arrays(
            path,
            arrays,
            attrs={
                "decision_threshold": self.decision_threshold,
                "patch_size": self.patch_size,
                "umap_kind": self.umap_kind,
                "n_slices": len(self.slices),
            },
        )

    @classmethod
    def load(cls, path) -> "DetectionResult":
        arrays, attrs = load_arrays(path)
        n = int(attrs["n_slices"])
        offsets = arrays["offsets"]
        zs = arrays["zs"]
        slices = [
            SliceDetection(
                z=int(zs[i]),
                probs=np.asarray(arrays[f"slice_{i:03d}/probs"]),
                offset=(int(offsets[i][0]), int(offsets[i][1])),
            )
            for i in range(n)
        ]
        kind = attrs["umap_kind"]
        return cls(
            slices=slices,
            decision_threshold=float(attrs["decision_threshold"]),
            patch_size=int(attrs["patch_size"]),
            umap_kind=kind if isinstance(kind, str) else kind.decode(),
        )


def detect_failure_regions(
    model,
    image_volume: np.ndarray,
    umap: UncertaintyMap,
    auto_labels: np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
    expected_umap_kind: str | None = None,
) -> DetectionResult:
    """Per-slice region probabilities on bounding-box crops of the volume."""
    if expected_umap_kind is not None and umap.kind != expected_umap_kind:
        raise ValueError(
            f"detector was trained on {expected_umap_kind} maps, got {umap.kind}"
        )
    if image_volume.shape != umap.values.shape or image_volume.shape != auto_labels.shape:
        raise ValueError("image, uncertainty map and labels must share a shape")
    model.eval()
    slices = []
    for z in range(image_volume.shape[0]):
        img_crop, umap_crop, geometry = crop_for_detection(
            image_volume[z], umap.values[z], auto_labels[z]
        )
        x = torch.from_numpy(np.stack([img_crop, umap_crop])[None].astype(np.float32))
        with torch.no_grad():
            probs = model.region_probs(x)[0].numpy()
        slices.append(SliceDetection(z=z, probs=probs, offset=geometry.offset))
    return DetectionResult(
        slices=slices,
        decision_threshold=threshold,
        patch_size=model.patch_size,
        umap_kind=umap.kind,
    )

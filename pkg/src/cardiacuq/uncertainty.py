"""Per-voxel uncertainty maps and risk-coverage calibration curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import NUM_CLASSES
from .errors import EmptyReferenceError
from .volumes import ProbabilityVolume

UMAP_KINDS = ("entropy", "bayesian")


@dataclass
class UncertaintyMap:
    values: np.ndarray  # (Z, H, W), in [0, 1]
    kind: str
    source: tuple | None = None  # (arch, loss, mc_enabled)
    T: int | None = None

    def __post_init__(self):
        if self.kind not in UMAP_KINDS:
            raise ValueError(f"kind must be one of {UMAP_KINDS}, got {self.kind!r}")
        v = np.asarray(self.values)
        if v.min() < 0 or v.max() > 1:
            raise ValueError("uncertainty values outside [0, 1]")
        if self.kind == "bayesian" and (self.T is None or self.T < 2):
            raise ValueError("bayesian maps require T >= 2")


def entropy_values(probs: np.ndarray) -> np.ndarray:
    """Normalized entropy of a (..., C) probability array, in [0, 1]."""
    p = np.asarray(probs, dtype=np.float64)
    plogp = np.where(p > 0, p * np.log2(np.maximum(p, 1e-300)), 0.0)
    ent = -plogp.sum(axis=-1) / np.log2(p.shape[-1])
    return np.clip(ent, 0.0, 1.0)


def entropy_map(volume: ProbabilityVolume, source: tuple | None = None) -> UncertaintyMap:
    """E-map: normalized entropy of the (mean) softmax over the four classes."""
    return UncertaintyMap(
        values=entropy_values(volume.probs).astype(np.float32),
        kind="entropy",
        source=source,
        T=volume.T if volume.mc_enabled else None,
    )


def bayesian_values(samples: np.ndarray) -> np.ndarray:
    """Mean over classes of the per-class sample standard deviation (ddof=1)."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim < 2 or s.shape[0] < 2:
        raise ValueError("need a (T >= 2, ..., C) sample stack")
    std = s.std(axis=0, ddof=1)
    return np.clip(std.mean(axis=-1), 0.0, 1.0)


def bayesian_map(samples: np.ndarray, source: tuple | None = None) -> UncertaintyMap:
    """B-map from an MC sample stack of shape (T, Z, H, W, C)."""
    samples = np.asarray(samples)
    if samples.shape[-1] != NUM_CLASSES:
        raise ValueError(f"expected {NUM_CLASSES} classes, got {samples.shape[-1]}")
    return UncertaintyMap(
        values=bayesian_values(samples).astype(np.float32),
        kind="bayesian",
        source=source,
        T=int(samples.shape[0]),
    )


def bayesian_map_from_std(per_class_std: np.ndarray, T: int, source: tuple | None = None) -> UncertaintyMap:
    """B-map when only the per-class sample std (Z, H, W, C) was persisted."""
    values = np.clip(np.asarray(per_class_std, dtype=np.float64).mean(axis=-1), 0.0, 1.0)
    return UncertaintyMap(values=values.astype(np.float32), kind="bayesian", source=source, T=T)


@dataclass
class RiskCoverageCurve:
    """Remaining error count as the least-uncertain fraction of voxels grows.

    Coverage c retains the c% least uncertain voxels inside the
    reference-foreground bounding box; risk is the number of incorrectly
    segmented voxels among them.
    """

    coverage: np.ndarray  # 0..100
    risk: np.ndarray
    thresholds: np.ndarray
    bbox: tuple  # ((z0, z1), (y0, y1), (x0, x1)), half-open

    def write_csv(self, path) -> None:
        from pathlib import Path

        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            f.write("coverage_percent,risk_voxels,threshold\n")
            for c, r, t in zip(self.coverage, self.risk, self.thresholds):
                f.write(f"{int(c)},{r:.6g},{t:.8g}\n")


def foreground_bbox(ref: np.ndarray) -> tuple:
    idx = np.nonzero(ref > 0)
    if idx[0].size == 0:
        raise EmptyReferenceError("reference volume has no foreground")
    return tuple((int(ax.min()), int(ax.max()) + 1) for ax in idx)


def risk_coverage_curve(
    umap: UncertaintyMap | np.ndarray, pred: np.ndarray, ref: np.ndarray
) -> RiskCoverageCurve:
    values = umap.values if isinstance(umap, UncertaintyMap) else np.asarray(umap)
    if values.shape != pred.shape or pred.shape != ref.shape:
        raise ValueError("uncertainty map, prediction and reference shapes differ")
    bbox = foreground_bbox(ref)
    sl = tuple(slice(a, b) for a, b in bbox)
    u = values[sl].ravel().astype(np.float64)
    err = (pred[sl] != ref[sl]).ravel()

    # descending uncertainty; stable sort keeps raster order among ties
    order = np.argsort(-u, kind="stable")
    err_desc = err[order]
    # suffix_errors[m] = errors among the m least uncertain voxels
    suffix_errors = np.concatenate([[0], np.cumsum(err_desc[::-1])])

    n = u.size
    coverage = np.arange(101)
    retained = np.rint(n * coverage / 100).astype(int)
    risk = suffix_errors[retained].astype(np.float64)
    thresholds = np.quantile(u, coverage / 100)
    return RiskCoverageCurve(coverage=coverage, risk=risk, thresholds=thresholds, bbox=bbox)

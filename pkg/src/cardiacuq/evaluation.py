"""Segmentation metrics, statistical tests, detection curves and simulated correction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from . import CLASS_NAMES, FOREGROUND_CLASSES, PATCH_SIZE
from .errors import OutOfBoundsRegionError, UndefinedMetricError

MYOCARDIAL_DENSITY_G_PER_ML = 1.05


def dice_3d(pred: np.ndarray, ref: np.ndarray, cls: int) -> float:
    """3D Dice overlap; 1.0 when both masks are empty, 0.0 when only one is."""
    if pred.shape != ref.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {ref.shape}")
    a = pred == cls
    b = ref == cls
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def _surface_points_mm(mask: np.ndarray, spacing) -> np.ndarray:
    """Boundary voxel coordinates in mm (6-neighborhood; image edge counts as outside)."""
    padded = np.pad(mask, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1, 1:-1]
        & padded[2:, 1:-1, 1:-1]
        & padded[1:-1, :-2, 1:-1]
        & padded[1:-1, 2:, 1:-1]
        & padded[1:-1, 1:-1, :-2]
        & padded[1:-1, 1:-1, 2:]
    )
    coords = np.argwhere(mask & ~interior).astype(np.float64)
    dx, dy, dz = spacing
    return coords * np.array([dz, dy, dx])


def hausdorff_3d(pred: np.ndarray, ref: np.ndarray, cls: int, spacing) -> float:
    """Symmetric 3D Hausdorff distance between boundary point sets, in mm.

    Computed at the voxel grid described by `spacing` = (dx, dy, dz) for
    volumes laid out (Z, H, W).
    """
    if pred.shape != ref.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {ref.shape}")
    a = _surface_points_mm(pred == cls, spacing)
    b = _surface_points_mm(ref == cls, spacing)
    if a.size == 0 or b.size == 0:
        raise UndefinedMetricError(f"Hausdorff undefined: empty mask for class {cls}")
    d_ab = cKDTree(b).query(a)[0].max()
    d_ba = cKDTree(a).query(b)[0].max()
    return float(max(d_ab, d_ba))


def volume_ml(labels: np.ndarray, cls: int, spacing) -> float:
    dx, dy, dz = spacing
    return float((labels == cls).sum()) * dx * dy * dz / 1000.0


def clinical_metrics(pred_ed: np.ndarray, pred_es: np.ndarray, spacing) -> dict[str, float]:
    """EDV/EF for both ventricles plus LV myocardial mass (1.05 g/mL)."""
    lv, rv, lvm = 3, 1, 2
    out = {
        "LV_EDV_ml": volume_ml(pred_ed, lv, spacing),
        "RV_EDV_ml": volume_ml(pred_ed, rv, spacing),
        "LVM_mass_g": volume_ml(pred_ed, lvm, spacing) * MYOCARDIAL_DENSITY_G_PER_ML,
    }
    for name, cls in (("LV", lv), ("RV", rv)):
        edv = out[f"{name}_EDV_ml"]
        esv = volume_ml(pred_es, cls, spacing)
        if edv == 0:
            raise UndefinedMetricError(f"{name} ejection fraction undefined: EDV = 0")
        out[f"{name}_EF_pct"] = 100.0 * (edv - esv) / edv
    return out


@dataclass(frozen=True)
class AgreementStats:
    pearson_r: float
    bias: float
    bias_sd: float
    mae: float


def agreement_stats(auto_values, ref_values) -> AgreementStats:
    """Pearson rho, bias (auto - reference, mean +/- sample sd) and MAE."""
    a = np.asarray(auto_values, dtype=np.float64)
    r = np.asarray(ref_values, dtype=np.float64)
    if a.shape != r.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two equal-length 1D vectors with >= 2 entries")
    if np.ptp(a) == 0 or np.ptp(r) == 0:
        raise UndefinedMetricError("Pearson correlation undefined for zero-variance input")
    diff = a - r
    return AgreementStats(
        pearson_r=float(stats.pearsonr(a, r)[0]),
        bias=float(diff.mean()),
        bias_sd=float(diff.std(ddof=1)),
        mae=float(np.abs(diff).mean()),
    )


def mann_whitney_u(sample_a, sample_b) -> float:
    """Two-sided Mann-Whitney U p-value.

    Exact null distribution for small samples without ties, tie-corrected
    normal approximation otherwise.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be nonempty")
    pooled = np.concatenate([a, b])
    if np.unique(pooled).size == 1:
        return 1.0  # every observation tied: no evidence of a shift
    has_ties = np.unique(pooled).size < pooled.size
    method = "exact" if (max(a.size, b.size) <= 20 and not has_ties) else "asymptotic"
    return float(stats.mannwhitneyu(a, b, alternative="two-sided", method=method).pvalue)


def simulate_correction(
    pred: np.ndarray,
    ref: np.ndarray,
    regions,
    patch_size: int = PATCH_SIZE,
) -> np.ndarray:
    """Replace predicted labels with reference labels inside flagged regions.

    `regions` is an iterable of (z, row0, col0) voxel offsets of patch-size
    windows (already mapped from grid cells through the crop offset). Windows
    may extend past the slice edge when the detector ran on a padded crop;
    windows with no overlap at all raise.
    """
    nz, h, w = pred.shape
    if ref.shape != pred.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {ref.shape}")
    corrected = pred.copy()
    for z, r0, c0 in regions:
        if z < 0 or z >= nz or r0 + patch_size <= 0 or c0 + patch_size <= 0 or r0 >= h or c0 >= w:
            raise OutOfBoundsRegionError(f"region (z={z}, r={r0}, c={c0}) outside volume")
        rs = slice(max(r0, 0), min(r0 + patch_size, h))
        cs = slice(max(c0, 0), min(c0 + patch_size, w))
        corrected[z, rs, cs] = ref[z, rs, cs]
    return corrected


@dataclass
class PrecisionRecallCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    average_precision: float


def slice_detection_pr(scores, labels) -> PrecisionRecallCurve:
    """Precision-recall over slices, scored by their maximum region probability.

    Average precision uses the interpolated precision envelope evaluated at
    every recall point.
    """
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(labels, dtype=bool)
    if s.shape != t.shape or s.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1D")
    n_pos = int(t.sum())
    if n_pos == 0:
        raise UndefinedMetricError("no positive slices; PR curve undefined")

    order = np.argsort(-s, kind="stable")
    s_sorted, t_sorted = s[order], t[order]
    # one PR point per distinct threshold (ties grouped)
    boundaries = np.flatnonzero(np.diff(s_sorted)) if s_sorted.size > 1 else np.array([], int)
    cut = np.concatenate([boundaries, [s_sorted.size - 1]])
    tp = np.cumsum(t_sorted)[cut]
    fp = np.cumsum(~t_sorted)[cut]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    thresholds = s_sorted[cut]

    # precision envelope: best precision achievable at recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    recall_prev = np.concatenate([[0.0], recall[:-1]])
    ap = float(np.sum((recall - recall_prev) * envelope))
    return PrecisionRecallCurve(
        thresholds=thresholds, precision=precision, recall=recall, average_precision=ap
    )


def voxel_sensitivity_vs_fp(volumes, thresholds=None, patch_size: int = PATCH_SIZE):
    """Failure-voxel sensitivity against false-positive regions per volume.

    `volumes` is a list of (scored_regions, failure_mask) pairs where
    scored_regions is a list of (z, row0, col0, prob). Returns
    (thresholds, sensitivity, mean_fp_regions) arrays. Regions of one volume
    are assumed disjoint (non-overlapping grid cells), so covered failure
    voxels add up per region.
    """
    total_failures = sum(int(fm.sum()) for _, fm in volumes)
    if total_failures == 0:
        raise UndefinedMetricError("empty failure set; sensitivity undefined")
    if thresholds is None:
        thresholds = np.concatenate([np.linspace(0.0, 1.0, 101), [1.0 + 1e-9]])
    thresholds = np.asarray(thresholds, dtype=np.float64)

    probs, fail_counts = [], []
    for regions, fmask in volumes:
        nz, h, w = fmask.shape
        vol_probs = np.empty(len(regions))
        vol_counts = np.empty(len(regions))
        for i, (z, r0, c0, p) in enumerate(regions):
            window = fmask[z, max(r0, 0) : min(r0 + patch_size, h), max(c0, 0) : min(c0 + patch_size, w)]
            vol_probs[i] = p
            vol_counts[i] = int(window.sum())
        probs.append(vol_probs)
        fail_counts.append(vol_counts)

    sens = np.zeros(thresholds.size)
    fps = np.zeros(thresholds.size)
    for vol_probs, vol_counts in zip(probs, fail_counts):
        flagged = vol_probs[None, :] >= thresholds[:, None]
        sens += (flagged * vol_counts[None, :]).sum(axis=1)
        fps += (flagged & (vol_counts[None, :] == 0)).sum(axis=1)
    return thresholds, sens / total_failures, fps / len(volumes)


def per_structure_metrics(pred: np.ndarray, ref: np.ndarray, spacing) -> dict:
    """Dice and Hausdorff per foreground structure; HD None when undefined."""
    out = {}
    for cls in FOREGROUND_CLASSES:
        name = CLASS_NAMES[cls]
        entry = {"dice": dice_3d(pred, ref, cls)}
        try:
            entry["hausdorff_mm"] = hausdorff_3d(pred, ref, cls, spacing)
        except UndefinedMetricError:
            entry["hausdorff_mm"] = None
        out[name] = entry
    return out

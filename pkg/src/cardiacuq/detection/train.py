"""Detector training: class weighting, forced-positive sampling, loss, loop."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import DivergedError
from ..io.layout import write_json
from ..models.train import lr_at, save_checkpoint
from .config import DetectorConfig
from .crops import crop_with_padding
from .model import build_detector

PROB_CLAMP = 1e-7


def compute_w_pos(patch_grids_per_volume) -> float:
    """Mean per-volume percentage of negative patches over that of positives."""
    pos_fractions = []
    for grids in patch_grids_per_volume:
        grids = np.asarray(grids)
        pos_fractions.append(grids.mean())
    mean_pos = float(np.mean(pos_fractions))
    if mean_pos == 0.0:
        raise ValueError("no positive patches in the training set")
    return (1.0 - mean_pos) / mean_pos


def detection_loss(region_probs: torch.Tensor, labels: torch.Tensor, w_pos: float) -> torch.Tensor:
    """Weighted binary cross-entropy, summed over patches.

    -sum_j [ w_pos * t_j * log p_j + (1 - t_j) * log(1 - p_j) ]
    """
    if region_probs.shape != labels.shape:
        raise ValueError(f"probs {tuple(region_probs.shape)} vs labels {tuple(labels.shape)}")
    p = torch.clamp(region_probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = labels.to(p.dtype)
    return -(w_pos * t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).sum()


@dataclass
class DetectionSlice:
    """One training slice: image, uncertainty map and its aligned patch grid."""

    image: np.ndarray  # (H, W)
    umap: np.ndarray  # (H, W)
    patch_grid: np.ndarray  # (ceil(H/p), ceil(W/p)) bool, volume-aligned


class DetectionDataset:
    """Training slices grouped by patient volume (w_pos averages per volume)."""

    def __init__(self, volumes: list[list[DetectionSlice]], patch_size: int):
        self.slices = [s for volume in volumes for s in volume]
        if not self.slices:
            raise ValueError("empty detection dataset")
        self.patch_size = patch_size
        self.volume_grids = [
            np.stack([s.patch_grid for s in volume]) for volume in volumes if volume
        ]
        self.positive_indices = [
            i for i, s in enumerate(self.slices) if s.patch_grid.any()
        ]

    def __len__(self):
        return len(self.slices)


def _snapped_offsets(extent: int, crop: int, patch: int) -> np.ndarray:
    """Valid crop starts, snapped to the patch grid (0 when the slice is small)."""
    limit = max(0, _padded(extent, patch) - crop)
    return np.arange(0, limit + 1, patch)


def _padded(extent: int, patch: int) -> int:
    return -(-extent // patch) * patch


def _grid_window(grid: np.ndarray, gr0: int, gc0: int, gh: int, gw: int) -> np.ndarray:
    out = np.zeros((gh, gw), dtype=bool)
    rs, re = gr0, min(gr0 + gh, grid.shape[0])
    cs, ce = gc0, min(gc0 + gw, grid.shape[1])
    if rs < re and cs < ce:
        out[: re - rs, : ce - cs] = grid[rs:re, cs:ce]
    return out


def _forced_offset(extent: int, crop: int, patch: int, g: int, rng) -> int:
    """Crop start (multiple of patch) whose window contains grid cell g."""
    lo = max(0, (g + 1) * patch - crop)
    hi = min(g * patch, max(0, _padded(extent, patch) - crop))
    choices = np.arange(lo, hi + 1, patch)
    return int(rng.choice(choices))


def sample_training_batch(
    dataset: DetectionDataset,
    batch_size: int,
    forced_positive_fraction: float,
    rng,
    crop: tuple[int, int] = (80, 80),
):
    """Sample (inputs, label grids); floor(batch * fraction) crops are forced
    to contain at least one positive patch."""
    if not dataset.positive_indices:
        raise ValueError("dataset contains no slice with a failure")
    patch = dataset.patch_size
    ch, cw = crop
    gh, gw = ch // patch, cw // patch
    n_forced = int(batch_size * forced_positive_fraction)
    inputs = np.zeros((batch_size, 2, ch, cw), dtype=np.float32)
    labels = np.zeros((batch_size, gh, gw), dtype=np.float32)
    for b in range(batch_size):
        if b < n_forced:
            s = dataset.slices[int(rng.choice(dataset.positive_indices))]
            pos = np.argwhere(s.patch_grid)
            g_r, g_c = pos[int(rng.integers(0, len(pos)))]
            h, w = s.image.shape
            r0 = _forced_offset(h, ch, patch, int(g_r), rng)
            c0 = _forced_offset(w, cw, patch, int(g_c), rng)
        else:
            s = dataset.slices[int(rng.integers(0, len(dataset.slices)))]
            h, w = s.image.shape
            r0 = int(rng.choice(_snapped_offsets(h, ch, patch)))
            c0 = int(rng.choice(_snapped_offsets(w, cw, patch)))
        inputs[b, 0] = crop_with_padding(s.image, (r0, c0), crop)
        inputs[b, 1] = crop_with_padding(s.umap, (r0, c0), crop)
        labels[b] = _grid_window(s.patch_grid, r0 // patch, c0 // patch, gh, gw)
    return torch.from_numpy(inputs), torch.from_numpy(labels)


@dataclass
class DetectorTrainResult:
    final_checkpoint: Path
    curve_path: Path
    final_loss: float
    w_pos: float


def train_detector(
    config: DetectorConfig,
    dataset: DetectionDataset,
    out_dir,
    log_every: int = 50,
) -> DetectorTrainResult:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)

    w_pos = config.w_pos
    if w_pos is None:
        w_pos = compute_w_pos(dataset.volume_grids)

    model = build_detector(config)
    model.train()
    optimizer = torch.optim.Adam(
        model.parameters(), lr=lr_at(config.lr_schedule, 0), weight_decay=1e-4
    )
    curve = []
    window = []
    final_loss = float("nan")
    for it in range(config.iterations):
        for group in optimizer.param_groups:
            group["lr"] = lr_at(config.lr_schedule, it)
        x, t = sample_training_batch(
            dataset, config.batch_size, config.forced_positive_fraction, rng, config.train_crop
        )
        optimizer.zero_grad()
        probs = torch.softmax(model(x), dim=1)[:, 1]
        loss = detection_loss(probs, t, w_pos) / config.batch_size
        value = float(loss.detach())
        if not math.isfinite(value):
            raise DivergedError(f"detector: non-finite loss at iteration {it}")
        loss.backward()
        optimizer.step()
        window.append(value)
        final_loss = value
        if (it + 1) % log_every == 0 or it + 1 == config.iterations:
            curve.append((it + 1, float(np.mean(window))))
            window.clear()

    final = out_dir / "detector_final.pt"
    save_checkpoint(model, final)
    curve_path = out_dir / "train_curve.csv"
    with open(curve_path, "w") as f:
        f.write("iteration,loss\n")
        for it, value in curve:
            f.write(f"{it},{value:.6f}\n")
    payload = config.to_json()
    payload["w_pos"] = w_pos
    write_json(out_dir / "config.json", payload)
    return DetectorTrainResult(
        final_checkpoint=final, curve_path=curve_path, final_loss=final_loss, w_pos=w_pos
    )

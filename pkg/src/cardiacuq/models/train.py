"""Segmentation training: batch sampling, schedules, snapshots, checkpoints."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import DivergedError
from ..io.layout import write_json
from .config import DN_PAD, SegModelConfig
from .losses import training_loss
from .nets import build_segmentation_model


def lr_at(schedule: dict, iteration: int) -> float:
    """Learning rate for a 0-based iteration index.

    step: base * decay^(iteration // every).
    snapshot: cosine within each cycle, reset to base at every cycle start.
    """
    kind = schedule["kind"]
    if kind == "step":
        return schedule["base_lr"] * schedule["decay"] ** (iteration // schedule["every"])
    if kind == "snapshot":
        cycle = schedule["cycle"]
        phase = (iteration % cycle) / cycle
        return schedule["base_lr"] * 0.5 * (1.0 + math.cos(math.pi * phase))
    raise ValueError(f"unknown schedule kind {kind!r}")


def random_crop_pair(image: np.ndarray, ref: np.ndarray, size: tuple[int, int], rng) -> tuple[np.ndarray, np.ndarray]:
    """Random (image, label) crop; zero-pads when the slice is smaller."""
    h, w = image.shape
    th, tw = size
    if h < th or w < tw:
        ph, pw = max(0, th - h), max(0, tw - w)
        image = np.pad(image, ((0, ph), (0, pw)))
        ref = np.pad(ref, ((0, ph), (0, pw)))
        h, w = image.shape
    r0 = int(rng.integers(0, h - th + 1))
    c0 = int(rng.integers(0, w - tw + 1))
    return image[r0 : r0 + th, c0 : c0 + tw], ref[r0 : r0 + th, c0 : c0 + tw]


def _sample_batch(slices, config: SegModelConfig, rng):
    images, labels = [], []
    for _ in range(config.batch_size):
        img, ref = slices[int(rng.integers(0, len(slices)))]
        img, ref = random_crop_pair(img, ref, config.train_patch, rng)
        k = int(rng.integers(0, 4))  # 0/90/180/270 degree rotation
        if k:
            img = np.rot90(img, k)
            ref = np.rot90(ref, k)
        images.append(np.ascontiguousarray(img, dtype=np.float32))
        labels.append(np.ascontiguousarray(ref, dtype=np.int64))
    x = torch.from_numpy(np.stack(images))[:, None]
    y = torch.from_numpy(np.stack(labels))
    if config.arch == "DN":
        x = torch.nn.functional.pad(x, (DN_PAD, DN_PAD, DN_PAD, DN_PAD))
    return x, y


def save_checkpoint(model: torch.nn.Module, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    torch.save(model.state_dict(), tmp)
    os.replace(tmp, path)


@dataclass
class TrainResult:
    final_checkpoint: Path
    snapshots: list[Path]
    curve_path: Path
    final_loss: float


def collect_training_slices(studies) -> list[tuple[np.ndarray, np.ndarray]]:
    """Flatten preprocessed studies into (image slice, reference slice) pairs."""
    slices = []
    for study in studies:
        for phase in study.phases.values():
            for z in range(phase.image.shape[0]):
                slices.append((phase.image[z], phase.reference[z]))
    return slices


def train_segmentation(
    config: SegModelConfig,
    slices,
    out_dir,
    log_every: int = 50,
) -> TrainResult:
    """Train one segmentation network on pre-extracted 2D slices.

    Writes checkpoints (one snapshot per cycle for the DN), a training-curve
    CSV and the config JSON into `out_dir`.
    """
    if not slices:
        raise ValueError("no training slices")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)

    model = build_segmentation_model(config)
    model.train()
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=lr_at(config.lr_schedule, 0),
        weight_decay=config.weight_decay,
    )

    curve: list[tuple[int, float]] = []
    window: list[float] = []
    snapshots: list[Path] = []
    final_loss = float("nan")
    for it in range(config.iterations):
        lr = lr_at(config.lr_schedule, it)
        for group in optimizer.param_groups:
            group["lr"] = lr
        x, y = _sample_batch(slices, config, rng)
        optimizer.zero_grad()
        loss = training_loss(config.loss, model(x), y)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise DivergedError(
                f"{config.tag()}: non-finite loss {value} at iteration {it} (lr={lr:g})"
            )
        loss.backward()
        optimizer.step()
        window.append(value)
        final_loss = value
        if (it + 1) % log_every == 0 or it + 1 == config.iterations:
            curve.append((it + 1, float(np.mean(window))))
            window.clear()
        if (
            config.lr_schedule["kind"] == "snapshot"
            and (it + 1) % config.lr_schedule["cycle"] == 0
        ):
            snap = out_dir / f"snapshot_{(it + 1) // config.lr_schedule['cycle']:02d}.pt"
            save_checkpoint(model, snap)
            snapshots.append(snap)

    final = out_dir / "model_final.pt"
    save_checkpoint(model, final)
    curve_path = out_dir / "train_curve.csv"
    with open(curve_path, "w") as f:
        f.write("iteration,loss\n")
        for it, value in curve:
            f.write(f"{it},{value:.6f}\n")
    write_json(out_dir / "config.json", config.to_json())
    return TrainResult(
        final_checkpoint=final,
        snapshots=snapshots,
        curve_path=curve_path,
        final_loss=final_loss,
    )

"""Segmentation losses: soft-Dice, cross-entropy and Brier score.

The *_per_class / *_sum functions are the metric-style definitions used by
tests and reports (plain sums, no smoothing). `training_loss` is what the
optimizer sees: probabilities from a softmax, smoothed soft-Dice with the
conventional factor 2, means over classes and batch.
"""

from __future__ import annotations

import numpy as np
import torch

from .. import NUM_CLASSES

CE_CLAMP = 1e-7
DICE_SMOOTH = 1.0


def one_hot_np(labels: np.ndarray, num_classes: int = NUM_CLASSES) -> np.ndarray:
    return np.eye(num_classes, dtype=np.float64)[np.asarray(labels, dtype=np.int64)]


def _check_shapes(probs, reference):
    probs = np.asarray(probs, dtype=np.float64)
    reference = np.asarray(reference)
    if probs.shape[:-1] != reference.shape or probs.shape[-1] != NUM_CLASSES:
        raise ValueError(
            f"probs {probs.shape} incompatible with reference {reference.shape}"
        )
    return probs, reference


def soft_dice_per_class(probs: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-class overlap ratio sum(R*A) / (sum(R) + sum(A)).

    Note this published form lacks the conventional factor 2, so a perfect
    prediction scores 0.5 for every present class. Classes absent from both
    numerator terms return 0.
    """
    probs, reference = _check_shapes(probs, reference)
    onehot = one_hot_np(reference)
    axes = tuple(range(probs.ndim - 1))
    num = (onehot * probs).sum(axis=axes)
    den = onehot.sum(axis=axes) + probs.sum(axis=axes)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def cross_entropy_loss(probs: np.ndarray, reference: np.ndarray) -> float:
    """Total cross-entropy, summed over voxels and classes (natural log)."""
    probs, reference = _check_shapes(probs, reference)
    onehot = one_hot_np(reference)
    return float(-(onehot * np.log(np.clip(probs, CE_CLAMP, None))).sum())


def brier_loss(probs: np.ndarray, reference: np.ndarray) -> float:
    """Total Brier score, summed over voxels and classes."""
    probs, reference = _check_shapes(probs, reference)
    onehot = one_hot_np(reference)
    return float(((onehot - probs) ** 2).sum())


# --- differentiable training-side definitions (torch) ---


def soft_dice_training(probs: torch.Tensor, onehot: torch.Tensor, smooth: float = DICE_SMOOTH) -> torch.Tensor:
    """1 - mean over classes of the smoothed conventional (factor 2) soft-Dice.

    probs/onehot are (B, C, H, W); sums run over batch and space.
    """
    dims = (0, 2, 3)
    num = (probs * onehot).sum(dim=dims)
    den = probs.sum(dim=dims) + onehot.sum(dim=dims)
    dice = (2.0 * num + smooth) / (den + smooth)
    return 1.0 - dice.mean()


def cross_entropy_training(probs: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
    total = -(onehot * torch.log(torch.clamp(probs, min=CE_CLAMP))).sum()
    return total / (probs.shape[0] * probs.shape[1])


def brier_training(probs: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
    return ((onehot - probs) ** 2).sum() / (probs.shape[0] * probs.shape[1])


_TRAINING_LOSSES = {
    "soft_dice": soft_dice_training,
    "cross_entropy": cross_entropy_training,
    "brier": brier_training,
}


def training_loss(name: str, logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Loss on (B, C, H, W) logits against (B, H, W) integer labels."""
    if logits.shape[-2:] != labels.shape[-2:] or logits.shape[0] != labels.shape[0]:
        raise ValueError(f"logits {tuple(logits.shape)} vs labels {tuple(labels.shape)}")
    probs = torch.softmax(logits, dim=1)
    onehot = torch.nn.functional.one_hot(labels.long(), NUM_CLASSES)
    onehot = onehot.permute(0, 3, 1, 2).to(probs.dtype)
    return _TRAINING_LOSSES[name](probs, onehot)

"""Containers for per-voxel class probabilities."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import NUM_CLASSES

PROB_SUM_TOL = 1e-5


@dataclass
class ProbabilityVolume:
    """Per-voxel softmax over the four tissue classes, (Z, H, W, C).

    When MC-dropout sampling is enabled, `samples` holds the T stochastic
    forward passes and `probs` is their per-voxel mean.
    """

    probs: np.ndarray
    samples: np.ndarray | None = None
    T: int = 1
    mc_enabled: bool = False

    def __post_init__(self):
        p = np.asarray(self.probs)
        if p.ndim != 4 or p.shape[-1] != NUM_CLASSES:
            raise ValueError(f"probs must be (Z, H, W, {NUM_CLASSES}), got {p.shape}")
        if p.min() < -PROB_SUM_TOL or p.max() > 1 + PROB_SUM_TOL:
            raise ValueError("probabilities outside [0, 1]")
        sums = p.sum(axis=-1)
        if np.abs(sums - 1.0).max() > PROB_SUM_TOL:
            raise ValueError("per-voxel probabilities do not sum to 1")
        if self.mc_enabled:
            if self.T < 2:
                raise ValueError("MC mode requires T >= 2")
            if self.samples is None or self.samples.shape != (self.T, *p.shape):
                raise ValueError("MC mode requires a (T, Z, H, W, C) sample stack")
            if np.abs(self.samples.mean(axis=0) - p).max() > 1e-4:
                raise ValueError("probs must equal the per-voxel mean of the samples")

    @property
    def labels(self) -> np.ndarray:
        """Per-voxel class with the highest mean probability (ties -> lowest index)."""
        return np.argmax(self.probs, axis=-1).astype(np.uint8)


def from_samples(samples: np.ndarray) -> ProbabilityVolume:
    """Build an MC-mode volume whose mean is taken over the sample stack."""
    samples = np.asarray(samples)
    return ProbabilityVolume(
        probs=samples.mean(axis=0),
        samples=samples,
        T=samples.shape[0],
        mc_enabled=True,
    )

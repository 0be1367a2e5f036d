"""Failure-detector configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..uncertainty import UMAP_KINDS

PATCH_SIZES = (4, 8, 16)


def _default_schedule() -> dict:
    return {"kind": "step", "base_lr": 1e-4, "decay": 0.1, "every": 10_000}


@dataclass
class DetectorConfig:
    patch_size: int = 8
    umap_kind: str = "entropy"
    w_pos: float | None = None  # computed from training labels when None
    iterations: int = 20_000
    batch_size: int = 32
    lr_schedule: dict = field(default_factory=_default_schedule)
    dropout_p: float = 0.5
    train_crop: tuple[int, int] = (80, 80)
    forced_positive_fraction: float = 1.0 / 3.0
    seed: int = 0
    width_scale: float = 1.0

    def __post_init__(self):
        if self.patch_size not in PATCH_SIZES:
            raise ValueError(f"patch_size must be one of {PATCH_SIZES}")
        if self.umap_kind not in UMAP_KINDS:
            raise ValueError(f"umap_kind must be one of {UMAP_KINDS}")
        if not 0.0 <= self.forced_positive_fraction <= 1.0:
            raise ValueError("forced_positive_fraction must be in [0, 1]")
        if any(d % self.patch_size for d in self.train_crop):
            raise ValueError("train_crop dims must be multiples of patch_size")
        if self.w_pos is not None and self.w_pos <= 0:
            raise ValueError("w_pos must be positive")

    def to_json(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "umap_kind": self.umap_kind,
            "w_pos": self.w_pos,
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "lr_schedule": self.lr_schedule,
            "dropout_p": self.dropout_p,
            "train_crop": list(self.train_crop),
            "forced_positive_fraction": self.forced_positive_fraction,
            "seed": self.seed,
            "width_scale": self.width_scale,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "DetectorConfig":
        payload = dict(payload)
        payload["train_crop"] = tuple(payload["train_crop"])
        return cls(**payload)

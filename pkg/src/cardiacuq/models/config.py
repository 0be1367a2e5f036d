"""Segmentation model/training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import NUM_CLASSES

ARCHS = ("DN", "DRN", "U-net")
LOSSES = ("soft_dice", "cross_entropy", "brier")

# training patch sizes: DN trains on 151x151 samples (zero-padded to 281 to
# cover its 131x131 receptive field with valid convolutions)
TRAIN_PATCH = {"DN": (151, 151), "DRN": (128, 128), "U-net": (128, 128)}
DN_PAD = 65  # each side; valid convolutions eat 130 voxels total


def _default_schedule(arch: str) -> dict:
    if arch == "DN":
        return {"kind": "snapshot", "base_lr": 0.02, "cycle": 10_000}
    return {"kind": "step", "base_lr": 0.001, "decay": 0.1, "every": 25_000}


@dataclass
class SegModelConfig:
    arch: str
    loss: str
    dropout_p: float = 0.10
    num_classes: int = NUM_CLASSES
    train_patch: tuple[int, int] | None = None
    iterations: int = 100_000
    lr_schedule: dict = field(default_factory=dict)
    batch_size: int = 16
    weight_decay: float = 1e-4
    seed: int = 0
    width_scale: float = 1.0  # shrinks all layer widths for CPU-scale runs

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown arch {self.arch!r}, expected one of {ARCHS}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}, expected one of {LOSSES}")
        if not 0.0 < self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in (0, 1)")
        if self.num_classes != NUM_CLASSES:
            raise ValueError(f"num_classes must be {NUM_CLASSES}")
        if self.train_patch is None:
            self.train_patch = TRAIN_PATCH[self.arch]
        elif tuple(self.train_patch) != TRAIN_PATCH[self.arch]:
            raise ValueError(
                f"{self.arch} trains on {TRAIN_PATCH[self.arch]} patches, got {self.train_patch}"
            )
        if not self.lr_schedule:
            self.lr_schedule = _default_schedule(self.arch)
        if not 0.0 < self.width_scale <= 1.0:
            raise ValueError("width_scale must be in (0, 1]")

    def tag(self) -> str:
        return f"{self.arch}-{self.loss}"

    def to_json(self) -> dict:
        return {
            "arch": self.arch,
            "loss": self.loss,
            "dropout_p": self.dropout_p,
            "num_classes": self.num_classes,
            "train_patch": list(self.train_patch),
            "iterations": self.iterations,
            "lr_schedule": self.lr_schedule,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "seed": self.seed,
            "width_scale": self.width_scale,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "SegModelConfig":
        payload = dict(payload)
        payload["train_patch"] = tuple(payload["train_patch"])
        return cls(**payload)


def default_seg_config(arch: str, loss: str, **overrides) -> SegModelConfig:
    return SegModelConfig(arch=arch, loss=loss, **overrides)

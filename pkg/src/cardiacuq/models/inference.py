"""Slice-wise inference with optional MC-dropout sampling."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..volumes import ProbabilityVolume, from_samples
from .config import DN_PAD, SegModelConfig
from .nets import DilatedNet, DilatedResidualNet, UNet

# DRN is fully convolutional at stride 8; the U-net pools four times
_MULTIPLE = {"DRN": 8, "U-net": 16}


def enable_mc_dropout(model: torch.nn.Module) -> None:
    """Keep dropout sampling active while all normalization stays in eval mode."""
    model.eval()
    for module in model.modules():
        if isinstance(module, (torch.nn.Dropout, torch.nn.Dropout2d)):
            module.train()


class SnapshotEnsemble:
    """Averages softmax outputs over snapshot members before anything else."""

    def __init__(self, members):
        self.members = list(members)
        if not self.members:
            raise ValueError("need at least one snapshot member")

    def eval(self):
        for m in self.members:
            m.eval()
        return self

    def modules(self):
        for member in self.members:
            yield from member.modules()

    def forward_probs(self, x: torch.Tensor) -> torch.Tensor:
        stack = [torch.softmax(m(x), dim=1) for m in self.members]
        return torch.stack(stack).mean(dim=0)


def _forward_probs(model, x: torch.Tensor) -> torch.Tensor:
    if isinstance(model, SnapshotEnsemble):
        return model.forward_probs(x)
    return torch.softmax(model(x), dim=1)


def _arch_of(model) -> str:
    probe = model.members[0] if isinstance(model, SnapshotEnsemble) else model
    if isinstance(probe, DilatedNet):
        return "DN"
    if isinstance(probe, UNet):
        return "U-net"
    if isinstance(probe, DilatedResidualNet):
        return "DRN"
    raise ValueError(f"cannot infer architecture of {type(probe).__name__}")


def forward_slice_probs(model, slice2d: np.ndarray, arch: str | None = None) -> np.ndarray:
    """One forward pass on a (H, W) slice -> (H, W, C) softmax probabilities."""
    arch = arch or _arch_of(model)
    h, w = slice2d.shape
    x = torch.from_numpy(np.ascontiguousarray(slice2d, dtype=np.float32))[None, None]
    if arch == "DN":
        x = F.pad(x, (DN_PAD, DN_PAD, DN_PAD, DN_PAD))
    else:
        mult = _MULTIPLE[arch]
        ph, pw = (-h) % mult, (-w) % mult
        x = F.pad(x, (0, pw, 0, ph))
    with torch.no_grad():
        probs = _forward_probs(model, x)
    probs = probs[0, :, :h, :w].permute(1, 2, 0).numpy()
    return np.ascontiguousarray(probs, dtype=np.float32)


def _volume_pass(model, volume: np.ndarray, arch: str) -> np.ndarray:
    return np.stack([forward_slice_probs(model, volume[z], arch) for z in range(volume.shape[0])])


def mc_inference(
    model,
    volume: np.ndarray,
    T: int = 10,
    mc_enabled: bool = True,
    seed: int = 0,
) -> ProbabilityVolume:
    """Segment a (Z, H, W) volume slice by slice.

    With MC enabled, runs T stochastic passes with dropout active and returns
    the sample stack plus its per-voxel mean; otherwise a single deterministic
    pass with dropout off.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    arch = _arch_of(model)
    if not mc_enabled:
        model.eval()
        probs = _volume_pass(model, volume, arch)
        return ProbabilityVolume(probs=probs, T=1, mc_enabled=False)
    if T < 2:
        raise ValueError("MC-dropout inference requires T >= 2")
    torch.manual_seed(seed)
    enable_mc_dropout(model)
    # slice-major sampling order; mc_inference_summary reproduces it exactly
    per_slice = [
        np.stack([forward_slice_probs(model, volume[z], arch) for _ in range(T)])
        for z in range(volume.shape[0])
    ]
    samples = np.stack(per_slice, axis=1)
    return from_samples(samples)


def mc_inference_summary(
    model, volume: np.ndarray, T: int = 10, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Memory-lean MC pass: returns (mean probs, per-class sample std).

    Aggregates per slice so the full (T, Z, H, W, C) stack is never held.
    """
    if T < 2:
        raise ValueError("MC-dropout inference requires T >= 2")
    arch = _arch_of(model)
    torch.manual_seed(seed)
    enable_mc_dropout(model)
    means, stds = [], []
    for z in range(volume.shape[0]):
        stack = np.stack(
            [forward_slice_probs(model, volume[z], arch) for _ in range(T)]
        ).astype(np.float64)
        means.append(stack.mean(axis=0))
        stds.append(stack.std(axis=0, ddof=1))
    return (
        np.stack(means).astype(np.float32),
        np.stack(stds).astype(np.float32),
    )


def stochastic_single_inference(model, volume: np.ndarray, seed: int = 0) -> ProbabilityVolume:
    """One dropout-active forward pass (the T=1 point of the MC-sample sweep)."""
    torch.manual_seed(seed)
    enable_mc_dropout(model)
    arch = _arch_of(model)
    probs = _volume_pass(model, volume, arch)
    return ProbabilityVolume(probs=probs, T=1, mc_enabled=False)


def load_checkpoint(config: SegModelConfig, path) -> torch.nn.Module:
    from .nets import build_segmentation_model

    model = build_segmentation_model(config)
    model.load_state_dict(torch.load(path, map_location="cpu", weights_only=True))
    model.eval()
    return model

"""Shallow residual patch classifier (S-ResNet).

Maps a 2-channel input (image slice, uncertainty map) of size (p*k, p*m) to a
(k, m) grid of failure probabilities, where p is the patch size / output
stride (8 by default).
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import DetectorConfig


def _w(channels: int, scale: float, floor: int = 4) -> int:
    return max(floor, int(round(channels * scale)))


class _Block(nn.Module):
    def __init__(self, in_ch, out_ch, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.shortcut = None
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride), nn.BatchNorm2d(out_ch)
            )

    def forward(self, x):
        identity = x if self.shortcut is None else self.shortcut(x)
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return F.relu(out + identity)


class SResNet(nn.Module):
    def __init__(self, patch_size: int = 8, dropout_p: float = 0.5, width_scale: float = 1.0):
        super().__init__()
        if patch_size not in (4, 8, 16):
            raise ValueError("patch_size must be 4, 8 or 16")
        self.patch_size = patch_size
        c = [_w(ch, width_scale) for ch in (16, 32, 64, 128)]
        self.stem = nn.Sequential(
            nn.Conv2d(2, c[0], 7, padding=3),
            nn.BatchNorm2d(c[0]),
            nn.ReLU(inplace=True),
            nn.Conv2d(c[0], c[1], 3, padding=1),
            nn.BatchNorm2d(c[1]),
            nn.ReLU(inplace=True),
        )
        # residual levels 2-4; stride pattern sets the output grid spacing
        strides = {4: (2, 2, 1), 8: (2, 2, 2), 16: (2, 2, 2)}[patch_size]
        self.blocks = nn.ModuleList()
        in_ch = c[1]
        for out_ch, stride in zip((c[1], c[2], c[3]), strides):
            self.blocks.append(_Block(in_ch, out_ch, stride))
            in_ch = out_ch
        self.block_drop = nn.Dropout(dropout_p)
        self.extra_pool = nn.AvgPool2d(2) if patch_size == 16 else None
        self.classifier = nn.Sequential(
            nn.Dropout(dropout_p),
            nn.Conv2d(c[3], c[3], 1),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout_p),
            nn.Conv2d(c[3], c[3], 1),
            nn.ReLU(inplace=True),
            nn.Conv2d(c[3], 2, 1),
        )

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % self.patch_size or w % self.patch_size:
            raise ValueError(
                f"input {h}x{w} must be a multiple of the patch size {self.patch_size}"
            )
        out = self.stem(x)
        for block in self.blocks:
            out = self.block_drop(block(out))
        if self.extra_pool is not None:
            out = self.extra_pool(out)
        return self.classifier(out)

    def region_probs(self, x: torch.Tensor) -> torch.Tensor:
        """Failure probability per patch: softmax channel 1 of the logits."""
        return torch.softmax(self.forward(x), dim=1)[:, 1]


def build_detector(config: DetectorConfig | None = None) -> SResNet:
    config = config or DetectorConfig()
    return SResNet(
        patch_size=config.patch_size,
        dropout_p=config.dropout_p,
        width_scale=config.width_scale,
    )

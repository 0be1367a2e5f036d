"""The three Bayesian segmentation networks.

All three take a single-channel 2D slice and emit per-voxel logits over the
four tissue classes at input resolution (the DN uses valid convolutions, so
its output is 130 voxels smaller per dimension). Dropout placement follows
the published designs so MC-dropout can be switched on at test time.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import SegModelConfig


def _w(channels: int, scale: float, floor: int = 2) -> int:
    return max(floor, int(round(channels * scale)))


class DilatedNet(nn.Module):
    """Ten-layer dilated CNN: eight 3x3 valid convolutions (dilations
    1,1,2,4,8,16,32,1 giving a 131x131 receptive field) plus two 1x1
    classification layers. Dropout after every layer except the last."""

    DILATIONS = (1, 1, 2, 4, 8, 16, 32, 1)
    SHRINK = 130  # total valid-convolution crop per spatial dimension

    def __init__(self, num_classes: int = 4, dropout_p: float = 0.10, width_scale: float = 1.0):
        super().__init__()
        c = _w(32, width_scale)
        fc = _w(128, width_scale, floor=4)
        layers = []
        in_ch = 1
        for i, dil in enumerate(self.DILATIONS):
            layers.append(nn.Conv2d(in_ch, c, 3, dilation=dil))
            if i >= 1:  # batch norm in layers 2..9
                layers.append(nn.BatchNorm2d(c))
            layers.append(nn.ReLU(inplace=True))
            layers.append(nn.Dropout(dropout_p))
            in_ch = c
        layers += [
            nn.Conv2d(c, fc, 1),
            nn.BatchNorm2d(fc),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout_p),
            nn.Conv2d(fc, num_classes, 1),
        ]
        self.layers = nn.Sequential(*layers)

    def forward(self, x):
        return self.layers(x)


class _ConvBnReluDrop(nn.Module):
    def __init__(self, in_ch, out_ch, kernel=3, stride=1, dilation=1, padding=None, dropout_p=0.1):
        super().__init__()
        if padding is None:
            padding = dilation if kernel == 3 else kernel // 2
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, kernel, stride=stride, dilation=dilation, padding=padding),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout_p),
        )

    def forward(self, x):
        return self.block(x)


class _ResidualBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1, dilation=1, dropout_p=0.1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, dilation=dilation, padding=dilation)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.drop1 = nn.Dropout(dropout_p)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, dilation=dilation, padding=dilation)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.drop2 = nn.Dropout(dropout_p)
        self.shortcut = None
        if stride != 1 or in_ch != out_ch:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride), nn.BatchNorm2d(out_ch)
            )

    def forward(self, x):
        identity = x if self.shortcut is None else self.shortcut(x)
        out = self.drop1(F.relu(self.bn1(self.conv1(x))))
        out = self.bn2(self.conv2(out))
        return self.drop2(F.relu(out + identity))


class DilatedResidualNet(nn.Module):
    """DRN-D-22 style feature extractor (output stride 8, dilations 2/4/2 in
    levels 5-7) with a 1x1 classifier upsampled bilinearly to input size."""

    def __init__(self, num_classes: int = 4, dropout_p: float = 0.10, width_scale: float = 1.0):
        super().__init__()
        ch = [_w(c, width_scale) for c in (16, 32, 64, 128, 256, 512)]
        p = dropout_p
        self.features = nn.Sequential(
            _ConvBnReluDrop(1, ch[0], kernel=7, padding=3, dropout_p=p),        # level 1
            _ConvBnReluDrop(ch[0], ch[1], stride=2, dropout_p=p),               # level 2
            _ResidualBlock(ch[1], ch[2], stride=2, dropout_p=p),                # level 3
            _ResidualBlock(ch[2], ch[2], dropout_p=p),
            _ResidualBlock(ch[2], ch[3], stride=2, dropout_p=p),                # level 4
            _ResidualBlock(ch[3], ch[3], dropout_p=p),
            _ResidualBlock(ch[3], ch[4], dilation=2, dropout_p=p),              # level 5
            _ResidualBlock(ch[4], ch[4], dilation=2, dropout_p=p),
            _ResidualBlock(ch[4], ch[5], dilation=4, dropout_p=p),              # level 6
            _ResidualBlock(ch[5], ch[5], dilation=4, dropout_p=p),
            _ConvBnReluDrop(ch[5], ch[5], dilation=2, dropout_p=p),             # level 7
            _ConvBnReluDrop(ch[5], ch[5], dropout_p=p),                         # level 8
        )
        self.classifier = nn.Conv2d(ch[5], num_classes, 1)

    def forward(self, x):
        size = x.shape[-2:]
        out = self.classifier(self.features(x))
        return F.interpolate(out, size=size, mode="bilinear", align_corners=False)


class _UnetConvPair(nn.Module):
    def __init__(self, in_ch, out_ch, norm: bool):
        super().__init__()
        layers = []
        for ic in (in_ch, out_ch):
            layers.append(nn.Conv2d(ic, out_ch, 3, padding=1))
            if norm:
                layers.append(nn.InstanceNorm2d(out_ch, affine=True))
            layers.append(nn.LeakyReLU(0.01, inplace=True))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """Standard four-level U-net with the stated deviations: instance
    normalization on the contracting path, LeakyReLU activations, dropout as
    the last operation of every contracting/expanding block."""

    def __init__(self, num_classes: int = 4, dropout_p: float = 0.10, width_scale: float = 1.0):
        super().__init__()
        c = [_w(64 * 2**i, width_scale, floor=4) for i in range(5)]  # 64..1024
        p = dropout_p
        self.enc = nn.ModuleList([_UnetConvPair(1 if i == 0 else c[i - 1], c[i], norm=True) for i in range(4)])
        self.enc_drop = nn.ModuleList([nn.Dropout(p) for _ in range(4)])
        self.pool = nn.MaxPool2d(2, stride=2)
        self.bottleneck = _UnetConvPair(c[3], c[4], norm=False)
        self.up = nn.ModuleList(
            [nn.ConvTranspose2d(c[4 - i], c[3 - i], 2, stride=2) for i in range(4)]
        )
        self.dec = nn.ModuleList(
            [_UnetConvPair(c[3 - i] * 2, c[3 - i], norm=False) for i in range(4)]
        )
        self.dec_drop = nn.ModuleList([nn.Dropout(p) for _ in range(4)])
        self.classifier = nn.Conv2d(c[0], num_classes, 1)

    def forward(self, x):
        skips = []
        for i in range(4):
            x = self.enc[i](x if i == 0 else self.pool(x))
            x = self.enc_drop[i](x)
            skips.append(x)
        x = self.bottleneck(self.pool(x))
        for i in range(4):
            x = self.up[i](x)
            x = self.dec[i](torch.cat([skips[3 - i], x], dim=1))
            x = self.dec_drop[i](x)
        return self.classifier(x)


def build_segmentation_model(config: SegModelConfig) -> nn.Module:
    """Instantiate the configured architecture (4-channel logits output)."""
    kwargs = dict(
        num_classes=config.num_classes,
        dropout_p=config.dropout_p,
        width_scale=config.width_scale,
    )
    if config.arch == "DN":
        return DilatedNet(**kwargs)
    if config.arch == "DRN":
        return DilatedResidualNet(**kwargs)
    if config.arch == "U-net":
        return UNet(**kwargs)
    raise ValueError(f"unknown arch {config.arch!r}")

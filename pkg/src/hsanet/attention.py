"""Efficient global attention gates.

ESGA gates a feature map with a channel gate followed by a spatial gate;
EPGA fuses a skip concatenation under a single parallel gate. Both keep
the parameter count small by compressing through a ratio ``r`` and by
trading the spatial receptive field for (inverse) pixel shuffling around
1x1 convolutions.
"""

import torch
import torch.nn as nn

from .ops import pixel_shuffle, pixel_unshuffle


def init_gate_params(module):
    """Truncated-normal weights (std 0.02) and zero biases for gate layers."""
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d)):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class ChannelAttention(nn.Module):
    """Per-position channel gate: ``x * sigmoid(fc2(act(fc1(x))))``.

    fc1 compresses C -> C/ratio and fc2 expands back; both act on the
    channel vector at each spatial location independently.
    """

    def __init__(self, channels, ratio, use_gelu=False):
        super().__init__()
        if channels % ratio != 0:
            raise ValueError(f"channels {channels} not divisible by compression ratio {ratio}")
        self.channels = channels
        self.fc1 = nn.Linear(channels, channels // ratio)
        self.fc2 = nn.Linear(channels // ratio, channels)
        self.act = nn.GELU() if use_gelu else nn.Identity()
        init_gate_params(self)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(
                f"expected (N, {self.channels}, H, W) input, got shape {tuple(x.shape)}"
            )
        g = x.permute(0, 2, 3, 1)
        g = self.fc2(self.act(self.fc1(g)))
        return x * torch.sigmoid(g.permute(0, 3, 1, 2))


class SpatialAttention(nn.Module):
    """Spatial gate built from 1x1 convolutions framed by pixel shuffling.

    The map is space-to-channel packed (factor ``shuffle``), squeezed from
    C*shuffle^2 to C/ratio and back, unpacked, and squashed into a gate.
    """

    def __init__(self, channels, ratio, shuffle=2, use_gelu=False):
        super().__init__()
        if channels % ratio != 0:
            raise ValueError(f"channels {channels} not divisible by compression ratio {ratio}")
        self.channels = channels
        self.shuffle = shuffle
        packed = channels * shuffle * shuffle
        self.conv1 = nn.Conv2d(packed, channels // ratio, kernel_size=1)
        self.conv2 = nn.Conv2d(channels // ratio, packed, kernel_size=1)
        self.act = nn.GELU() if use_gelu else nn.Identity()
        init_gate_params(self)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(
                f"expected (N, {self.channels}, H, W) input, got shape {tuple(x.shape)}"
            )
        g = pixel_unshuffle(x, self.shuffle)
        g = self.conv2(self.act(self.conv1(g)))
        return x * torch.sigmoid(pixel_shuffle(g, self.shuffle))


class ESGA(nn.Module):
    """Sequential global attention: channel gate followed by spatial gate."""

    def __init__(self, channels, ratio, shuffle=2, use_gelu=False):
        super().__init__()
        self.channel = ChannelAttention(channels, ratio, use_gelu=use_gelu)
        self.spatial = SpatialAttention(channels, ratio, shuffle=shuffle, use_gelu=use_gelu)

    def forward(self, x):
        return self.spatial(self.channel(x))


class EPGA(nn.Module):
    """Parallel global attention over a skip concatenation.

    Channel and spatial gate logits are computed on the concatenated input,
    averaged, and passed through one shared sigmoid; the resulting gate
    multiplies a linear fusion that halves the concatenated width. Neither
    path applies its own sigmoid.
    """

    def __init__(self, cat_channels, ratio, shuffle=2, use_gelu=False):
        super().__init__()
        if cat_channels % 2 != 0:
            raise ValueError(f"concatenated width {cat_channels} must be even")
        if cat_channels % ratio != 0:
            raise ValueError(
                f"concatenated width {cat_channels} not divisible by compression ratio {ratio}"
            )
        self.cat_channels = cat_channels
        self.out_channels = cat_channels // 2
        self.shuffle = shuffle
        hidden = cat_channels // ratio
        packed = cat_channels * shuffle * shuffle
        self.fc1 = nn.Linear(cat_channels, hidden)
        self.fc2 = nn.Linear(hidden, self.out_channels)
        self.conv1 = nn.Conv2d(packed, hidden, kernel_size=1)
        self.conv2 = nn.Conv2d(hidden, self.out_channels * shuffle * shuffle, kernel_size=1)
        self.fuse = nn.Linear(cat_channels, self.out_channels)
        self.act = nn.GELU() if use_gelu else nn.Identity()
        init_gate_params(self)

    def forward(self, x_cat):
        if x_cat.dim() != 4 or x_cat.shape[1] != self.cat_channels:
            raise ValueError(
                f"expected (N, {self.cat_channels}, H, W) input, got shape {tuple(x_cat.shape)}"
            )
        nhwc = x_cat.permute(0, 2, 3, 1)
        ch = self.fc2(self.act(self.fc1(nhwc))).permute(0, 3, 1, 2)
        sp = pixel_unshuffle(x_cat, self.shuffle)
        sp = self.conv2(self.act(self.conv1(sp)))
        sp = pixel_shuffle(sp, self.shuffle)
        gate = torch.sigmoid(0.5 * ch + 0.5 * sp)
        fused = self.fuse(nhwc).permute(0, 3, 1, 2)
        return gate * fused

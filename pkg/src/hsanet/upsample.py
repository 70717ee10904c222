"""Patch-expanding upsamplers for the decoder.

HICPatchExpand is the hybrid interpolation-convolution expander: after a
layer norm and a channel-expanding linear layer, the map is upsampled 2x
twice over, once by nearest-neighbour interpolation and once by zero
interleaving, and a single convolution shared between the two branches
maps both to the output width. PatchExpand is the learned shuffle-based
alternative used when the hybrid expander is toggled off.
"""

import torch.nn as nn

from .attention import init_gate_params
from .ops import nearest_upsample2x, pixel_shuffle, zero_interleave2x


class HICPatchExpand(nn.Module):
    """Dual-branch 2x upsampler with a shared convolution.

    (N, C, H, W) -> (N, out_channels, 2H, 2W). The default output width is
    C/2 (interior decoder stages). ``merge`` selects how the two branch
    outputs combine: "mean" keeps the scale of a single branch, "sum" adds
    them.
    """

    def __init__(self, in_channels, out_channels=None, mid_channels=None,
                 kernel=3, merge="mean"):
        super().__init__()
        if out_channels is None:
            if in_channels % 2 != 0:
                raise ValueError(f"cannot halve odd channel count {in_channels}")
            out_channels = in_channels // 2
        if mid_channels is None:
            mid_channels = 2 * in_channels
        if kernel % 2 == 0:
            raise ValueError(f"shared conv kernel must be odd, got {kernel}")
        if merge not in ("mean", "sum"):
            raise ValueError(f"merge must be 'mean' or 'sum', got {merge!r}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.merge = merge
        self.norm = nn.LayerNorm(in_channels)
        self.expand = nn.Linear(in_channels, mid_channels)
        self.conv = nn.Conv2d(mid_channels, out_channels, kernel, padding=kernel // 2)
        init_gate_params(self)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (N, {self.in_channels}, H, W), got shape {tuple(x.shape)}"
            )
        t = self.norm(x.permute(0, 2, 3, 1))
        t = self.expand(t).permute(0, 3, 1, 2)
        a = self.conv(nearest_upsample2x(t))
        b = self.conv(zero_interleave2x(t))
        y = a + b
        if self.merge == "mean":
            y = y / 2
        return y


class PatchExpand(nn.Module):
    """Shuffle-based 2x upsampler (the conventional Swin-Unet expanding layer).

    A linear layer widens C to 4*out_channels, pixel shuffling trades the
    factor 4 for a 2x spatial expansion, and a layer norm finishes.
    """

    def __init__(self, in_channels, out_channels=None):
        super().__init__()
        if out_channels is None:
            if in_channels % 2 != 0:
                raise ValueError(f"cannot halve odd channel count {in_channels}")
            out_channels = in_channels // 2
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.expand = nn.Linear(in_channels, 4 * out_channels, bias=False)
        self.norm = nn.LayerNorm(out_channels)
        init_gate_params(self)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected (N, {self.in_channels}, H, W), got shape {tuple(x.shape)}"
            )
        t = self.expand(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)
        t = pixel_shuffle(t, 2)
        return self.norm(t.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)

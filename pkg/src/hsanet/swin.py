"""Swin Transformer backbone pieces.

Standard shifted-window attention with relative position bias, with the
block's MLP slot replaced by an ESGA gate operating on the token grid
reshaped to a feature map. Patch embedding and patch merging provide the
hierarchy; blocks use the pre-norm residual layout.
"""

import torch
import torch.nn as nn

from .attention import ESGA, init_gate_params
from .ops import window_partition, window_reverse

MASKED_LOGIT = -100.0


def shifted_window_mask(h, w, window, shift, device=None, dtype=None):
    """Attention mask for shifted windows, shape (num_windows, window^2, window^2).

    Token pairs originating from non-adjacent image regions get an additive
    logit of ``MASKED_LOGIT``; same-region pairs get 0.
    """
    img = torch.zeros(1, 1, h, w, device=device, dtype=dtype or torch.float32)
    region = 0
    spans = (slice(0, -window), slice(-window, -shift), slice(-shift, None))
    for hs in spans:
        for ws in spans:
            img[:, :, hs, ws] = region
            region += 1
    windows = window_partition(img, window).squeeze(-1)  # (nW, window^2)
    diff = windows.unsqueeze(1) - windows.unsqueeze(2)
    return torch.zeros_like(diff).masked_fill_(diff != 0, MASKED_LOGIT)


class WindowAttention(nn.Module):
    """Multi-head self-attention within windows, with relative position bias.

    Args:
        dim: channels per token, divisible by num_heads.
        window: window side length.
        num_heads: number of attention heads.
    """

    def __init__(self, dim, window, num_heads):
        super().__init__()
        if dim % num_heads != 0:
            raise ValueError(f"dim {dim} not divisible by num_heads {num_heads}")
        self.dim = dim
        self.window = window
        self.num_heads = num_heads
        self.scale = (dim // num_heads) ** -0.5

        self.relative_position_bias_table = nn.Parameter(
            torch.zeros((2 * window - 1) ** 2, num_heads)
        )
        coords = torch.stack(
            torch.meshgrid(torch.arange(window), torch.arange(window), indexing="ij")
        ).flatten(1)
        rel = coords[:, :, None] - coords[:, None, :]
        rel = rel.permute(1, 2, 0).contiguous()
        rel[:, :, 0] += window - 1
        rel[:, :, 1] += window - 1
        rel[:, :, 0] *= 2 * window - 1
        self.register_buffer("relative_position_index", rel.sum(-1))

        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        init_gate_params(self)
        nn.init.trunc_normal_(self.relative_position_bias_table, std=0.02)

    def forward(self, x, mask=None, need_weights=False):
        """x: (num_windows*B, window^2, dim); mask: (num_windows, window^2, window^2)."""
        b, n, c = x.shape
        if c != self.dim or n != self.window * self.window:
            raise ValueError(
                f"expected (B, {self.window ** 2}, {self.dim}) tokens, got {tuple(x.shape)}"
            )
        qkv = self.qkv(x).reshape(b, n, 3, self.num_heads, c // self.num_heads)
        qkv = qkv.permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]

        attn = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.relative_position_bias_table[self.relative_position_index.view(-1)]
        bias = bias.view(n, n, -1).permute(2, 0, 1)
        attn = attn + bias.unsqueeze(0)
        if mask is not None:
            nw = mask.shape[0]
            if b % nw != 0:
                raise ValueError(f"batch {b} not divisible by {nw} masked windows")
            attn = attn.view(b // nw, nw, self.num_heads, n, n) + mask.unsqueeze(1).unsqueeze(0)
            attn = attn.view(b, self.num_heads, n, n)
        attn = attn.softmax(dim=-1)

        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        out = self.proj(out)
        if need_weights:
            return out, attn
        return out


class Mlp(nn.Module):
    """Two-layer GELU MLP; the fallback FFN when the ESGA gate is disabled."""

    def __init__(self, dim, hidden):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)
        init_gate_params(self)

    def forward(self, x):
        return self.fc2(self.act(self.fc1(x)))


class SwinBlock(nn.Module):
    """Pre-norm Swin block with an ESGA gate in place of the MLP.

    forward: ``x <- x + WMSA(LN(x))`` under an optional cyclic shift, then
    ``x <- x + ESGA(LN(x))`` with the tokens reshaped to (N, C, H, W) so the
    gate's pixel-shuffle spatial path is meaningful.
    """

    def __init__(self, dim, num_heads, window, shift=0, ega_ratio=4, use_esga=True,
                 mlp_ratio=4.0):
        super().__init__()
        if shift not in (0, window // 2):
            raise ValueError(f"shift must be 0 or window//2 = {window // 2}, got {shift}")
        self.dim = dim
        self.window = window
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, window, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        if use_esga:
            self.ffn = ESGA(dim, ega_ratio, use_gelu=True)
        else:
            self.ffn = Mlp(dim, int(dim * mlp_ratio))
        self.use_esga = use_esga

    def forward(self, x, hw):
        h, w = hw
        n, length, c = x.shape
        if c != self.dim or length != h * w:
            raise ValueError(
                f"expected (N, {h}*{w}, {self.dim}) tokens, got shape {tuple(x.shape)}"
            )
        if h % self.window != 0 or w % self.window != 0:
            raise ValueError(f"grid {(h, w)} not divisible by window {self.window}")

        shortcut = x
        y = self.norm1(x).view(n, h, w, c)
        if self.shift > 0:
            y = torch.roll(y, shifts=(-self.shift, -self.shift), dims=(1, 2))
            mask = shifted_window_mask(h, w, self.window, self.shift,
                                       device=x.device, dtype=x.dtype)
        else:
            mask = None
        windows = window_partition(y.permute(0, 3, 1, 2), self.window)
        windows = self.attn(windows, mask=mask)
        y = window_reverse(windows, self.window, h, w).permute(0, 2, 3, 1)
        if self.shift > 0:
            y = torch.roll(y, shifts=(self.shift, self.shift), dims=(1, 2))
        x = shortcut + y.reshape(n, length, c)

        z = self.norm2(x)
        if self.use_esga:
            z = z.transpose(1, 2).reshape(n, c, h, w)
            z = self.ffn(z)
            z = z.reshape(n, c, length).transpose(1, 2)
        else:
            z = self.ffn(z)
        return x + z


class PatchEmbed(nn.Module):
    """Non-overlapping patch projection plus layer norm.

    (N, C, H, W) -> (N, H/patch * W/patch, dim).
    """

    def __init__(self, in_channels, dim, patch):
        super().__init__()
        self.patch = patch
        self.proj = nn.Conv2d(in_channels, dim, kernel_size=patch, stride=patch)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != self.proj.in_channels:
            raise ValueError(
                f"expected (N, {self.proj.in_channels}, H, W), got shape {tuple(x.shape)}"
            )
        if x.shape[2] % self.patch != 0 or x.shape[3] % self.patch != 0:
            raise ValueError(
                f"spatial size {tuple(x.shape[2:])} not divisible by patch {self.patch}"
            )
        t = self.proj(x).flatten(2).transpose(1, 2)
        return self.norm(t)


class PatchMerging(nn.Module):
    """Concatenate 2x2 token neighbourhoods, layer-norm, project 4*dim -> 2*dim.

    Neighbour order is (0,0), (1,0), (0,1), (1,1) in (row, col) offsets.
    """

    def __init__(self, dim):
        super().__init__()
        self.dim = dim
        self.norm = nn.LayerNorm(4 * dim)
        self.reduce = nn.Linear(4 * dim, 2 * dim, bias=False)
        init_gate_params(self)

    def forward(self, x, hw):
        h, w = hw
        n, length, c = x.shape
        if c != self.dim or length != h * w:
            raise ValueError(
                f"expected (N, {h}*{w}, {self.dim}) tokens, got shape {tuple(x.shape)}"
            )
        if h % 2 != 0 or w % 2 != 0:
            raise ValueError(f"grid {(h, w)} must have even sides for merging")
        x = x.view(n, h, w, c)
        x0 = x[:, 0::2, 0::2, :]
        x1 = x[:, 1::2, 0::2, :]
        x2 = x[:, 0::2, 1::2, :]
        x3 = x[:, 1::2, 1::2, :]
        x = torch.cat([x0, x1, x2, x3], dim=-1).view(n, (h // 2) * (w // 2), 4 * c)
        return self.reduce(self.norm(x))


class SwinStage(nn.Module):
    """A run of Swin blocks at one resolution, alternating plain and shifted."""

    def __init__(self, dim, depth, num_heads, window, ega_ratio=4, use_esga=True):
        super().__init__()
        self.blocks = nn.ModuleList(
            SwinBlock(
                dim,
                num_heads,
                window,
                shift=0 if i % 2 == 0 else window // 2,
                ega_ratio=ega_ratio,
                use_esga=use_esga,
            )
            for i in range(depth)
        )

    def forward(self, x, hw):
        for block in self.blocks:
            x = block(x, hw)
        return x

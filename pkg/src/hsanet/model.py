"""HSANet assembly.

A shallow convolution and two gated residual conv blocks frame a Swin
encoder-decoder on each side. The encoder downsamples by patch merging,
the decoder upsamples with hybrid patch expanding, skip connections are
fused under parallel gates, and a global residual adds the input back so
the network is the identity at initialization (the output convolution is
zero-initialized).
"""

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import EPGA, ESGA
from .errors import ConfigError, DataError
from .swin import PatchEmbed, PatchMerging, SwinStage
from .upsample import HICPatchExpand, PatchExpand

CHECKPOINT_FORMAT = "hsanet-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``depths``/``heads`` list one entry per stage: encoder stages, the
    bottleneck, then decoder stages. An even-length list is treated as
    encoder+bottleneck and mirrored for the decoder. Stage ``i`` of ``2k+1``
    runs at ``embed_dim * 2**min(i, 2k - i)`` channels.
    """

    in_channels: int = 1
    shallow_width: int = 32
    embed_dim: int = 32
    patch_size: int = 2
    depths: tuple = (1, 1, 1, 1, 1)
    heads: tuple = (2, 4, 8, 4, 2)
    window: int = 8
    ratio: int = 4
    hic_merge: str = "mean"
    hic_kernel: int = 3
    use_esga: bool = True
    use_epga: bool = True
    use_hic: bool = True
    use_texture_mlp: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "depths", tuple(int(d) for d in self.depths))
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))

    @staticmethod
    def _mirror(seq):
        if len(seq) % 2 == 1:
            return tuple(seq)
        return tuple(seq) + tuple(seq[:-1][::-1])

    @property
    def full_depths(self):
        return self._mirror(self.depths)

    @property
    def full_heads(self):
        return self._mirror(self.heads)

    @property
    def num_merges(self):
        return (len(self.full_depths) - 1) // 2

    def stage_dims(self):
        n = len(self.full_depths)
        return tuple(self.embed_dim * 2 ** min(i, n - 1 - i) for i in range(n))

    @property
    def pad_multiple(self):
        return self.patch_size * self.window * 2 ** self.num_merges

    def validate(self):
        for name in ("in_channels", "shallow_width", "embed_dim", "window", "ratio"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if self.patch_size not in (1, 2):
            raise ConfigError(f"patch_size must be 1 or 2, got {self.patch_size}")
        if not self.depths or any(d < 1 for d in self.depths):
            raise ConfigError(f"depths must be positive integers, got {self.depths}")
        if len(self.depths) != len(self.heads):
            raise ConfigError(
                f"heads must match depths stage for stage, got {len(self.heads)} heads "
                f"for {len(self.depths)} depths"
            )
        if self.hic_merge not in ("mean", "sum"):
            raise ConfigError(f"hic_merge must be 'mean' or 'sum', got {self.hic_merge!r}")
        if self.hic_kernel < 1 or self.hic_kernel % 2 == 0:
            raise ConfigError(f"hic_kernel must be a positive odd integer, got {self.hic_kernel}")
        if self.shallow_width % self.ratio != 0:
            raise ConfigError(
                f"shallow_width {self.shallow_width} must be divisible by ratio {self.ratio}"
            )
        for i, (dim, heads) in enumerate(zip(self.stage_dims(), self.full_heads)):
            if heads < 1:
                raise ConfigError(f"heads[{i}] must be positive, got {heads}")
            if dim % heads != 0:
                raise ConfigError(f"heads[{i}] = {heads} does not divide stage width {dim}")
            if dim % self.ratio != 0:
                raise ConfigError(f"ratio {self.ratio} does not divide stage width {dim}")
        return self


class ResConvBlock(nn.Module):
    """Residual 3x3 conv pair with an ESGA gate inside the branch."""

    def __init__(self, channels, ega_ratio=4, use_esga=True):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.act = nn.ReLU()
        self.gate = ESGA(channels, ega_ratio, use_gelu=False) if use_esga else None

    def forward(self, x):
        y = self.conv2(self.act(self.conv1(x)))
        if self.gate is not None:
            y = self.gate(y)
        return x + y


class LinearFusion(nn.Module):
    """Plain per-position linear skip fusion; the fallback when EPGA is off."""

    def __init__(self, cat_channels):
        super().__init__()
        self.proj = nn.Conv2d(cat_channels, cat_channels // 2, kernel_size=1)

    def forward(self, x_cat):
        return self.proj(x_cat)


def pad_to_multiple(x, multiple):
    """Reflect-pad H and W up to the next multiple; raises if padding >= size."""
    h, w = x.shape[-2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if (ph and ph >= h) or (pw and pw >= w):
        raise ValueError(
            f"input {h}x{w} too small to reflect-pad to a multiple of {multiple}"
        )
    if ph or pw:
        x = F.pad(x, (0, pw, 0, ph), mode="reflect")
    return x


class HSANet(nn.Module):
    """Hybrid Swin attention denoiser; see :class:`ModelConfig` for knobs.

    forward maps (N, in_channels, H, W) to the same shape for any H, W at
    least large enough to reflect-pad to ``config.pad_multiple``.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        c0 = config.shallow_width
        dims = config.stage_dims()
        depths = config.full_depths
        heads = config.full_heads
        k = config.num_merges

        self.shallow = nn.Conv2d(config.in_channels, c0, 3, padding=1)
        self.enc_convs = nn.ModuleList(
            ResConvBlock(c0, config.ratio, config.use_esga) for _ in range(2)
        )
        self.embed = PatchEmbed(c0, config.embed_dim, config.patch_size)

        self.enc_stages = nn.ModuleList(
            SwinStage(dims[i], depths[i], heads[i], config.window,
                      ega_ratio=config.ratio, use_esga=config.use_esga)
            for i in range(k)
        )
        self.merges = nn.ModuleList(PatchMerging(dims[i]) for i in range(k))
        self.bottleneck = SwinStage(dims[k], depths[k], heads[k], config.window,
                                    ega_ratio=config.ratio, use_esga=config.use_esga)

        expand_cls = self._expand
        self.expands = nn.ModuleList(
            expand_cls(dims[k + i], dims[k + i + 1]) for i in range(k)
        )
        self.fusions = nn.ModuleList(
            EPGA(2 * dims[k + i + 1], config.ratio) if config.use_epga
            else LinearFusion(2 * dims[k + i + 1])
            for i in range(k)
        )
        self.dec_stages = nn.ModuleList(
            SwinStage(dims[k + i + 1], depths[k + i + 1], heads[k + i + 1], config.window,
                      ega_ratio=config.ratio, use_esga=config.use_esga)
            for i in range(k)
        )

        if config.patch_size == 2:
            self.final_expand = expand_cls(dims[-1], c0)
        else:
            self.final_expand = nn.Conv2d(dims[-1], c0, kernel_size=1)

        self.texture = nn.Conv2d(c0, c0, kernel_size=1) if config.use_texture_mlp else None
        self.dec_convs = nn.ModuleList(
            ResConvBlock(c0, config.ratio, config.use_esga) for _ in range(2)
        )
        self.out_conv = nn.Conv2d(c0, config.in_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def _expand(self, in_channels, out_channels):
        if self.config.use_hic:
            return HICPatchExpand(in_channels, out_channels,
                                  kernel=self.config.hic_kernel,
                                  merge=self.config.hic_merge)
        return PatchExpand(in_channels, out_channels)

    @staticmethod
    def _to_map(tokens, hw):
        n, length, c = tokens.shape
        return tokens.transpose(1, 2).reshape(n, c, hw[0], hw[1])

    @staticmethod
    def _to_tokens(feature_map):
        n, c, h, w = feature_map.shape
        return feature_map.reshape(n, c, h * w).transpose(1, 2)

    def forward(self, x):
        cfg = self.config
        if x.dim() != 4 or x.shape[1] != cfg.in_channels:
            raise ValueError(
                f"expected (N, {cfg.in_channels}, H, W) input, got shape {tuple(x.shape)}"
            )
        h, w = x.shape[-2:]
        xp = pad_to_multiple(x, cfg.pad_multiple)

        f = self.shallow(xp)
        for block in self.enc_convs:
            f = block(f)

        t = self.embed(f)
        grid = (xp.shape[-2] // cfg.patch_size, xp.shape[-1] // cfg.patch_size)

        skips = []
        for stage, merge in zip(self.enc_stages, self.merges):
            t = stage(t, grid)
            skips.append((t, grid))
            t = merge(t, grid)
            grid = (grid[0] // 2, grid[1] // 2)
        t = self.bottleneck(t, grid)

        for expand, fuse, stage in zip(self.expands, self.fusions, self.dec_stages):
            m = expand(self._to_map(t, grid))
            grid = (grid[0] * 2, grid[1] * 2)
            skip_t, _ = skips.pop()
            # skip fusion sees [decoder feature, encoder feature] in that order
            m = fuse(torch.cat([m, self._to_map(skip_t, grid)], dim=1))
            t = stage(self._to_tokens(m), grid)

        g = self.final_expand(self._to_map(t, grid))
        if self.texture is not None:
            g = g + self.texture(g)
        for block in self.dec_convs:
            g = block(g)
        body = self.out_conv(g)
        return x + body[:, :, :h, :w]


def build(config: ModelConfig) -> HSANet:
    """Construct an HSANet with parameters drawn under ``config.seed``."""
    config.validate()
    torch.manual_seed(config.seed)
    return HSANet(config)


def param_count(module: nn.Module) -> int:
    """Total number of learnable scalar parameters in a module."""
    return sum(p.numel() for p in module.parameters())


def param_table(model: nn.Module) -> dict:
    """Per-top-level-submodule parameter counts; values sum to 'total'."""
    table = {}
    for name, child in model.named_children():
        table[name] = param_count(child)
    direct = sum(p.numel() for p in model.parameters(recurse=False))
    if direct:
        table["(direct)"] = direct
    table["total"] = sum(v for k, v in table.items() if k != "total")
    return table


def format_param_table(table: dict) -> str:
    width = max(len(k) for k in table)
    lines = [f"{name:<{width}}  {count:>10,}" for name, count in table.items()]
    return "\n".join(lines)


def save_checkpoint(path, model, config, step=0, optimizer_state=None):
    """Write a self-describing checkpoint: config echo, weights, step counter."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "step": int(step),
        "model": model.state_dict(),
        "optimizer": optimizer_state,
    }
    torch.save(payload, path)


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns (model, config, step, optimizer_state)."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    config = ModelConfig(**payload["config"])
    model = HSANet(config)
    model.load_state_dict(payload["model"])
    return model, config, payload.get("step", 0), payload.get("optimizer")

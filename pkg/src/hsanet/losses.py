"""Denoising objective: per-pixel MAE plus a directional Sobel edge term.

The Sobel term is the mean squared difference between fixed-kernel
gradient maps of prediction and target, taken in four directions. The
kernels below are the normative constants (cross-correlation convention,
reflect padding); they are not learnable.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

SOBEL_DIRECTIONS = ("horizontal", "vertical", "diag_main", "diag_anti")

SOBEL_KERNELS = {
    "horizontal": ((-1.0, 0.0, 1.0), (-2.0, 0.0, 2.0), (-1.0, 0.0, 1.0)),
    "vertical": ((-1.0, -2.0, -1.0), (0.0, 0.0, 0.0), (1.0, 2.0, 1.0)),
    "diag_main": ((-2.0, -1.0, 0.0), (-1.0, 0.0, 1.0), (0.0, 1.0, 2.0)),
    "diag_anti": ((0.0, 1.0, 2.0), (-1.0, 0.0, 1.0), (-2.0, -1.0, 0.0)),
}


@dataclass(frozen=True)
class LossConfig:
    """Loss weights; ``lambda_sobel = 0`` reduces the loss to plain MAE."""

    lambda_sobel: float = 0.1
    directions: tuple = SOBEL_DIRECTIONS

    def validate(self):
        if self.lambda_sobel < 0:
            raise ValueError(f"lambda_sobel must be >= 0, got {self.lambda_sobel}")
        unknown = [d for d in self.directions if d not in SOBEL_KERNELS]
        if unknown or not self.directions:
            raise ValueError(
                f"directions must be a non-empty subset of {SOBEL_DIRECTIONS}, "
                f"got {self.directions}"
            )
        return self


@dataclass
class LossTerms:
    """Total loss and its components, all 0-dim tensors on the autograd graph."""

    total: torch.Tensor
    mae: torch.Tensor
    sobel: torch.Tensor


def _kernel_bank(directions, dtype, device):
    rows = [SOBEL_KERNELS[d] for d in directions]
    return torch.tensor(rows, dtype=dtype, device=device).unsqueeze(1)


def sobel_maps(x, directions=SOBEL_DIRECTIONS):
    """Directional gradient maps of a single-channel image batch.

    (N, 1, H, W) -> (N, len(directions), H, W), reflect-padded so the maps
    keep the input size.
    """
    if x.dim() != 4 or x.shape[1] != 1:
        raise ValueError(f"expected single-channel (N, 1, H, W) input, got {tuple(x.shape)}")
    kernels = _kernel_bank(directions, x.dtype, x.device)
    xp = F.pad(x, (1, 1, 1, 1), mode="reflect")
    return F.conv2d(xp, kernels)


def denoise_loss(pred, target, config=LossConfig()) -> LossTerms:
    """MAE plus ``lambda_sobel`` times the squared Sobel-map difference.

    Both terms average per image over all pixels (the Sobel term over the
    stacked direction maps), then over the batch.
    """
    config.validate()
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: pred {tuple(pred.shape)} vs target {tuple(target.shape)}")
    mae = (pred - target).abs().mean()
    diff = sobel_maps(pred, config.directions) - sobel_maps(target, config.directions)
    sobel = diff.pow(2).mean()
    total = mae + config.lambda_sobel * sobel
    return LossTerms(total=total, mae=mae, sobel=sobel)

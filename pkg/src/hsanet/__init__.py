"""Hybrid Swin attention network for low-dose CT/PET denoising."""

from .attention import EPGA, ESGA, ChannelAttention, SpatialAttention
from .data import (VolumePair, extract_patches, normalize_ct, normalize_pet,
                   synthetic_phantom_volume)
from .losses import LossConfig, denoise_loss, sobel_maps
from .metrics import aggregate, psnr, rmse, ssim
from .model import (HSANet, ModelConfig, build, load_checkpoint, param_count,
                    param_table, save_checkpoint)
from .training import SGD, TrainConfig, poly_lr, train
from .upsample import HICPatchExpand, PatchExpand

__version__ = "0.1.0"

__all__ = [
    "ChannelAttention",
    "EPGA",
    "ESGA",
    "HICPatchExpand",
    "HSANet",
    "LossConfig",
    "ModelConfig",
    "PatchExpand",
    "SGD",
    "SpatialAttention",
    "TrainConfig",
    "VolumePair",
    "aggregate",
    "build",
    "denoise_loss",
    "extract_patches",
    "load_checkpoint",
    "normalize_ct",
    "normalize_pet",
    "param_count",
    "param_table",
    "poly_lr",
    "psnr",
    "rmse",
    "save_checkpoint",
    "sobel_maps",
    "ssim",
    "synthetic_phantom_volume",
    "train",
]

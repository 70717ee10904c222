"""Deterministic tensor rearrangement primitives.

All functions act on channels-first feature maps of shape (N, C, H, W),
are pure, and raise ValueError on shape violations. They are shared by
the attention gates, the Swin blocks and the patch-expanding upsampler.
"""

import torch
import torch.nn.functional as F


def _check_4d(x):
    if x.dim() != 4:
        raise ValueError(f"expected a 4-D (N, C, H, W) tensor, got shape {tuple(x.shape)}")


def pixel_shuffle(x, s):
    """Rearrange channel blocks into space: (N, C*s^2, H, W) -> (N, C, H*s, W*s).

    Sub-pixel convolution convention:
    ``out[n, c, h*s + i, w*s + j] = x[n, c*s*s + i*s + j, h, w]``.
    """
    _check_4d(x)
    if s < 1:
        raise ValueError(f"shuffle factor must be a positive integer, got {s}")
    if x.shape[1] % (s * s) != 0:
        raise ValueError(f"channel count {x.shape[1]} is not divisible by s^2 = {s * s}")
    return F.pixel_shuffle(x, s)


def pixel_unshuffle(x, s):
    """Inverse of :func:`pixel_shuffle`: (N, C, H, W) -> (N, C*s^2, H/s, W/s)."""
    _check_4d(x)
    if s < 1:
        raise ValueError(f"shuffle factor must be a positive integer, got {s}")
    if x.shape[2] % s != 0 or x.shape[3] % s != 0:
        raise ValueError(
            f"spatial size {tuple(x.shape[2:])} is not divisible by shuffle factor {s}"
        )
    return F.pixel_unshuffle(x, s)


def nearest_upsample2x(x):
    """Nearest-neighbour 2x upsampling: ``out[..., h, w] = x[..., h // 2, w // 2]``."""
    _check_4d(x)
    return F.interpolate(x, scale_factor=2, mode="nearest")


def zero_interleave2x(x):
    """Interleave zeros between rows and columns: (N, C, H, W) -> (N, C, 2H, 2W).

    Original samples land on even row/column indices; every other entry is
    exactly zero. Stride-2 even-index subsampling recovers the input.
    """
    _check_4d(x)
    n, c, h, w = x.shape
    out = x.new_zeros(n, c, 2 * h, 2 * w)
    out[:, :, ::2, ::2] = x
    return out


def window_partition(x, window):
    """Split a feature map into non-overlapping windows.

    Args:
        x: (N, C, H, W) with H and W divisible by ``window``.
        window: side length of the square windows.

    Returns:
        (N * H/window * W/window, window*window, C); each window holds one
        contiguous tile flattened row-major.
    """
    _check_4d(x)
    if window < 1:
        raise ValueError(f"window size must be a positive integer, got {window}")
    n, c, h, w = x.shape
    if h % window != 0 or w % window != 0:
        raise ValueError(f"spatial size {(h, w)} is not divisible by window {window}")
    x = x.permute(0, 2, 3, 1)
    x = x.view(n, h // window, window, w // window, window, c)
    x = x.permute(0, 1, 3, 2, 4, 5).contiguous()
    return x.view(-1, window * window, c)


def window_reverse(windows, window, h, w):
    """Inverse of :func:`window_partition`; returns the (N, C, H, W) map."""
    if windows.dim() != 3:
        raise ValueError(f"expected (num_windows, window^2, C), got shape {tuple(windows.shape)}")
    if windows.shape[1] != window * window:
        raise ValueError(
            f"window length {windows.shape[1]} does not match window size {window}"
        )
    if h % window != 0 or w % window != 0:
        raise ValueError(f"target size {(h, w)} is not divisible by window {window}")
    per_image = (h // window) * (w // window)
    if per_image == 0 or windows.shape[0] % per_image != 0:
        raise ValueError(
            f"{windows.shape[0]} windows are inconsistent with a {h}x{w} map "
            f"({per_image} windows per image)"
        )
    n = windows.shape[0] // per_image
    c = windows.shape[2]
    x = windows.view(n, h // window, w // window, window, window, c)
    x = x.permute(0, 1, 3, 2, 4, 5).contiguous().view(n, h, w, c)
    return x.permute(0, 3, 1, 2).contiguous()

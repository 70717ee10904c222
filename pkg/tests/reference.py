"""Naive loop reference implementations used as oracles.

Everything here is written with explicit Python loops over numpy float64
arrays, independent of the package's tensor code paths. Parameter dicts
hold plain numpy copies of module weights (torch conventions: Linear is
``y = x @ W.T + b`` with W of shape (out, in); Conv2d cross-correlates).
"""

import math

import numpy as np


# ---------------------------------------------------------------------------
# elementwise pieces
# ---------------------------------------------------------------------------

def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))

def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + np.vectorize(math.erf)(x / math.sqrt(2.0)))

def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)

def linear(x, weight, bias=None):
    """x: (..., in) -> (..., out) with weight (out, in)."""
    y = np.asarray(x, dtype=np.float64) @ np.asarray(weight, dtype=np.float64).T
    if bias is not None:
        y = y + np.asarray(bias, dtype=np.float64)
    return y

def layernorm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta

def softmax(v):
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# tensor rearrangement
# ---------------------------------------------------------------------------

def pixel_shuffle(x, s):
    n, c_in, h, w = x.shape
    c = c_in // (s * s)
    out = np.zeros((n, c, h * s, w * s), dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            for hi in range(h):
                for wi in range(w):
                    for i in range(s):
                        for j in range(s):
                            out[ni, ci, hi * s + i, wi * s + j] = \
                                x[ni, ci * s * s + i * s + j, hi, wi]
    return out

def pixel_unshuffle(x, s):
    n, c, h, w = x.shape
    out = np.zeros((n, c * s * s, h // s, w // s), dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            for hi in range(h // s):
                for wi in range(w // s):
                    for i in range(s):
                        for j in range(s):
                            out[ni, ci * s * s + i * s + j, hi, wi] = \
                                x[ni, ci, hi * s + i, wi * s + j]
    return out

def nearest_upsample2x(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, 2 * h, 2 * w), dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            for hi in range(2 * h):
                for wi in range(2 * w):
                    out[ni, ci, hi, wi] = x[ni, ci, hi // 2, wi // 2]
    return out

def zero_interleave2x(x):
    n, c, h, w = x.shape
    out = np.zeros((n, c, 2 * h, 2 * w), dtype=np.float64)
    for ni in range(n):
        for ci in range(c):
            for hi in range(h):
                for wi in range(w):
                    out[ni, ci, 2 * hi, 2 * wi] = x[ni, ci, hi, wi]
    return out

def window_partition(x, window):
    n, c, h, w = x.shape
    nh, nw = h // window, w // window
    out = np.zeros((n * nh * nw, window * window, c), dtype=np.float64)
    for ni in range(n):
        for bh in range(nh):
            for bw in range(nw):
                widx = ni * nh * nw + bh * nw + bw
                for i in range(window):
                    for j in range(window):
                        out[widx, i * window + j, :] = x[ni, :, bh * window + i,
                                                         bw * window + j]
    return out

def window_reverse(windows, window, h, w):
    nh, nw = h // window, w // window
    n = windows.shape[0] // (nh * nw)
    c = windows.shape[2]
    out = np.zeros((n, c, h, w), dtype=np.float64)
    for ni in range(n):
        for bh in range(nh):
            for bw in range(nw):
                widx = ni * nh * nw + bh * nw + bw
                for i in range(window):
                    for j in range(window):
                        out[ni, :, bh * window + i, bw * window + j] = \
                            windows[widx, i * window + j, :]
    return out


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def _pad2d(x, pad, mode):
    if pad == 0:
        return x
    n, c, h, w = x.shape
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    out[:, :, pad:pad + h, pad:pad + w] = x
    if mode == "reflect":
        for k in range(1, pad + 1):
            out[:, :, pad - k, :] = out[:, :, pad + k, :]
            out[:, :, pad + h - 1 + k, :] = out[:, :, pad + h - 1 - k, :]
        for k in range(1, pad + 1):
            out[:, :, :, pad - k] = out[:, :, :, pad + k]
            out[:, :, :, pad + w - 1 + k] = out[:, :, :, pad + w - 1 - k]
    elif mode != "zero":
        raise ValueError(mode)
    return out

def conv2d(x, weight, bias=None, pad=0, pad_mode="zero", stride=1):
    """Cross-correlation with weight (out, in, kh, kw)."""
    x = _pad2d(np.asarray(x, dtype=np.float64), pad, pad_mode)
    n, c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    out = np.zeros((n, c_out, oh, ow), dtype=np.float64)
    for ni in range(n):
        for oi in range(c_out):
            for hi in range(oh):
                for wi in range(ow):
                    acc = 0.0
                    for ci in range(c_in):
                        for di in range(kh):
                            for dj in range(kw):
                                acc += weight[oi, ci, di, dj] * \
                                    x[ni, ci, hi * stride + di, wi * stride + dj]
                    out[ni, oi, hi, wi] = acc + (bias[oi] if bias is not None else 0.0)
    return out


# ---------------------------------------------------------------------------
# attention gates
# ---------------------------------------------------------------------------

def _act(x, use_gelu):
    return gelu(x) if use_gelu else np.asarray(x, dtype=np.float64)

def channel_attention(x, p, use_gelu=False):
    """p: fc1_w, fc1_b, fc2_w, fc2_b."""
    n, c, h, w = x.shape
    out = np.zeros_like(x, dtype=np.float64)
    for ni in range(n):
        for hi in range(h):
            for wi in range(w):
                v = x[ni, :, hi, wi]
                hid = _act(linear(v, p["fc1_w"], p["fc1_b"]), use_gelu)
                gate = sigmoid(linear(hid, p["fc2_w"], p["fc2_b"]))
                out[ni, :, hi, wi] = v * gate
    return out

def spatial_attention(x, p, shuffle=2, use_gelu=False):
    """p: conv1_w, conv1_b, conv2_w, conv2_b (1x1 kernels)."""
    packed = pixel_unshuffle(np.asarray(x, dtype=np.float64), shuffle)
    hid = _act(conv2d(packed, p["conv1_w"], p["conv1_b"]), use_gelu)
    logits = conv2d(hid, p["conv2_w"], p["conv2_b"])
    gate = sigmoid(pixel_shuffle(logits, shuffle))
    return x * gate

def esga(x, p, shuffle=2, use_gelu=False):
    return spatial_attention(channel_attention(x, p, use_gelu), p, shuffle, use_gelu)

def epga(x_cat, p, shuffle=2, use_gelu=False):
    """p: fc1_w/b, fc2_w/b, conv1_w/b, conv2_w/b, fuse_w, fuse_b."""
    n, c, h, w = x_cat.shape
    ch = np.zeros((n, c // 2, h, w), dtype=np.float64)
    fused = np.zeros((n, c // 2, h, w), dtype=np.float64)
    for ni in range(n):
        for hi in range(h):
            for wi in range(w):
                v = x_cat[ni, :, hi, wi]
                hid = _act(linear(v, p["fc1_w"], p["fc1_b"]), use_gelu)
                ch[ni, :, hi, wi] = linear(hid, p["fc2_w"], p["fc2_b"])
                fused[ni, :, hi, wi] = linear(v, p["fuse_w"], p["fuse_b"])
    packed = pixel_unshuffle(np.asarray(x_cat, dtype=np.float64), shuffle)
    hid = _act(conv2d(packed, p["conv1_w"], p["conv1_b"]), use_gelu)
    sp = pixel_shuffle(conv2d(hid, p["conv2_w"], p["conv2_b"]), shuffle)
    gate = sigmoid(0.5 * ch + 0.5 * sp)
    return gate * fused


# ---------------------------------------------------------------------------
# swin pieces
# ---------------------------------------------------------------------------

def window_msa(tokens, p, num_heads, mask=None):
    """tokens: (B, n, C); p: qkv_w, qkv_b, proj_w, proj_b, bias_table, bias_index."""
    b, n, c = tokens.shape
    hd = c // num_heads
    scale = 1.0 / math.sqrt(hd)
    out = np.zeros_like(tokens, dtype=np.float64)
    for bi in range(b):
        qkv = linear(tokens[bi], p["qkv_w"], p["qkv_b"])  # (n, 3C)
        merged = np.zeros((n, c), dtype=np.float64)
        for h in range(num_heads):
            q = qkv[:, h * hd:(h + 1) * hd]
            k = qkv[:, c + h * hd:c + (h + 1) * hd]
            v = qkv[:, 2 * c + h * hd:2 * c + (h + 1) * hd]
            logits = np.zeros((n, n), dtype=np.float64)
            for i in range(n):
                for j in range(n):
                    logits[i, j] = scale * float(q[i] @ k[j])
                    logits[i, j] += p["bias_table"][p["bias_index"][i, j], h]
                    if mask is not None:
                        logits[i, j] += mask[bi % mask.shape[0], i, j]
            attn = softmax(logits)
            merged[:, h * hd:(h + 1) * hd] = attn @ v
        out[bi] = linear(merged, p["proj_w"], p["proj_b"])
    return out

def region_mask(h, w, window, shift, masked_logit=-100.0):
    """Reference shifted-window mask: (num_windows, window^2, window^2)."""
    regions = np.zeros((h, w), dtype=np.float64)
    tag = 0
    spans = [(0, h - window), (h - window, h - shift), (h - shift, h)]
    spans_w = [(0, w - window), (w - window, w - shift), (w - shift, w)]
    for (h0, h1) in spans:
        for (w0, w1) in spans_w:
            regions[h0:h1, w0:w1] = tag
            tag += 1
    windows = window_partition(regions[None, None], window)[:, :, 0]
    nw, n = windows.shape
    mask = np.zeros((nw, n, n), dtype=np.float64)
    for wi in range(nw):
        for i in range(n):
            for j in range(n):
                if windows[wi, i] != windows[wi, j]:
                    mask[wi, i, j] = masked_logit
    return mask

def swin_block(x, hw, p, window, shift, num_heads, esga_ratio_params=None,
               mlp_params=None, shuffle=2):
    """x: (N, L, C) tokens. ESGA params in esga_ratio_params or MLP in mlp_params."""
    h, w = hw
    n, length, c = x.shape
    y = layernorm(x, p["norm1_g"], p["norm1_b"])
    grid = np.transpose(y.reshape(n, h, w, c), (0, 3, 1, 2))
    if shift > 0:
        grid = np.roll(grid, (-shift, -shift), axis=(2, 3))
        mask = region_mask(h, w, window, shift)
    else:
        mask = None
    windows = window_partition(grid, window)
    windows = window_msa(windows, p, num_heads, mask=mask)
    grid = window_reverse(windows, window, h, w)
    if shift > 0:
        grid = np.roll(grid, (shift, shift), axis=(2, 3))
    x = x + np.transpose(grid, (0, 2, 3, 1)).reshape(n, length, c)

    z = layernorm(x, p["norm2_g"], p["norm2_b"])
    if esga_ratio_params is not None:
        zmap = np.transpose(z.reshape(n, h, w, c), (0, 3, 1, 2))
        zmap = esga(zmap, esga_ratio_params, shuffle=shuffle, use_gelu=True)
        z = np.transpose(zmap, (0, 2, 3, 1)).reshape(n, length, c)
    else:
        z = linear(gelu(linear(z, mlp_params["fc1_w"], mlp_params["fc1_b"])),
                   mlp_params["fc2_w"], mlp_params["fc2_b"])
    return x + z

def patch_embed(x, p, patch):
    """p: proj_w (D, C, patch, patch), proj_b, norm_g, norm_b."""
    n, c, h, w = x.shape
    gh, gw = h // patch, w // patch
    d = p["proj_w"].shape[0]
    tokens = np.zeros((n, gh * gw, d), dtype=np.float64)
    for ni in range(n):
        for ph in range(gh):
            for pw in range(gw):
                acc = np.zeros(d, dtype=np.float64)
                for oi in range(d):
                    s = 0.0
                    for ci in range(c):
                        for i in range(patch):
                            for j in range(patch):
                                s += p["proj_w"][oi, ci, i, j] * \
                                    x[ni, ci, ph * patch + i, pw * patch + j]
                    acc[oi] = s + p["proj_b"][oi]
                tokens[ni, ph * gw + pw] = acc
    return layernorm(tokens, p["norm_g"], p["norm_b"])

def patch_merging(x, hw, p):
    """p: norm_g, norm_b, reduce_w (2C_out rows, 4C cols; no bias)."""
    h, w = hw
    n, length, c = x.shape
    grid = x.reshape(n, h, w, c)
    out = np.zeros((n, (h // 2) * (w // 2), 4 * c), dtype=np.float64)
    for ni in range(n):
        for hi in range(h // 2):
            for wi in range(w // 2):
                parts = [grid[ni, 2 * hi, 2 * wi], grid[ni, 2 * hi + 1, 2 * wi],
                         grid[ni, 2 * hi, 2 * wi + 1], grid[ni, 2 * hi + 1, 2 * wi + 1]]
                out[ni, hi * (w // 2) + wi] = np.concatenate(parts)
    return linear(layernorm(out, p["norm_g"], p["norm_b"]), p["reduce_w"])


# ---------------------------------------------------------------------------
# upsampler and losses
# ---------------------------------------------------------------------------

def hic_expand(x, p, merge="mean", kernel_pad=1):
    """p: norm_g, norm_b, expand_w, expand_b, conv_w, conv_b."""
    n, c, h, w = x.shape
    nhwc = np.transpose(np.asarray(x, dtype=np.float64), (0, 2, 3, 1))
    t = linear(layernorm(nhwc, p["norm_g"], p["norm_b"]), p["expand_w"], p["expand_b"])
    t = np.transpose(t, (0, 3, 1, 2))
    a = conv2d(nearest_upsample2x(t), p["conv_w"], p["conv_b"], pad=kernel_pad)
    b = conv2d(zero_interleave2x(t), p["conv_w"], p["conv_b"], pad=kernel_pad)
    y = a + b
    return y / 2.0 if merge == "mean" else y

def sobel_maps(x, kernels):
    """x: (N, 1, H, W); kernels: list of 3x3 arrays. Reflect padding."""
    banks = np.stack([np.asarray(k, dtype=np.float64) for k in kernels])[:, None]
    return conv2d(x, banks, bias=None, pad=1, pad_mode="reflect")

def denoise_loss(pred, target, kernels, lam):
    n = pred.shape[0]
    mae = 0.0
    sob = 0.0
    for i in range(n):
        mae += np.abs(pred[i] - target[i]).mean()
        d = sobel_maps(pred[i:i + 1], kernels) - sobel_maps(target[i:i + 1], kernels)
        sob += (d ** 2).mean()
    mae /= n
    sob /= n
    return mae + lam * sob, mae, sob


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def psnr(pred, target, data_range=1.0):
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    mse = float((diff ** 2).mean())
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)

def rmse(pred, target, scale=1.0):
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return math.sqrt(float((diff ** 2).mean())) * scale

def ssim(pred, target, data_range=1.0, k1=0.01, k2=0.03, sigma=1.5, window_size=11):
    """Dense per-window SSIM with a Gaussian weighting."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    half = window_size // 2
    coords = np.arange(window_size) - half
    g1 = np.exp(-(coords ** 2) / (2 * sigma * sigma))
    weights = np.outer(g1, g1)
    weights /= weights.sum()
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    h, w = pred.shape
    values = []
    for i in range(half, h - half):
        for j in range(half, w - half):
            pa = pred[i - half:i + half + 1, j - half:j + half + 1]
            pb = target[i - half:i + half + 1, j - half:j + half + 1]
            mu1 = float((weights * pa).sum())
            mu2 = float((weights * pb).sum())
            s11 = float((weights * pa * pa).sum()) - mu1 * mu1
            s22 = float((weights * pb * pb).sum()) - mu2 * mu2
            s12 = float((weights * pa * pb).sum()) - mu1 * mu2
            values.append(((2 * mu1 * mu2 + c1) * (2 * s12 + c2)) /
                          ((mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)))
    return float(np.mean(values))

"""Shared test utilities: weight extraction for the loop oracles."""

import numpy as np
import torch


def np64(t):
    return t.detach().cpu().double().numpy()


def t64(a):
    return torch.as_tensor(np.asarray(a), dtype=torch.float64)


def channel_params(mod):
    return {
        "fc1_w": np64(mod.fc1.weight), "fc1_b": np64(mod.fc1.bias),
        "fc2_w": np64(mod.fc2.weight), "fc2_b": np64(mod.fc2.bias),
    }


def spatial_params(mod):
    return {
        "conv1_w": np64(mod.conv1.weight), "conv1_b": np64(mod.conv1.bias),
        "conv2_w": np64(mod.conv2.weight), "conv2_b": np64(mod.conv2.bias),
    }


def esga_params(mod):
    p = channel_params(mod.channel)
    p.update(spatial_params(mod.spatial))
    return p


def epga_params(mod):
    return {
        "fc1_w": np64(mod.fc1.weight), "fc1_b": np64(mod.fc1.bias),
        "fc2_w": np64(mod.fc2.weight), "fc2_b": np64(mod.fc2.bias),
        "conv1_w": np64(mod.conv1.weight), "conv1_b": np64(mod.conv1.bias),
        "conv2_w": np64(mod.conv2.weight), "conv2_b": np64(mod.conv2.bias),
        "fuse_w": np64(mod.fuse.weight), "fuse_b": np64(mod.fuse.bias),
    }


def attn_params(mod):
    return {
        "qkv_w": np64(mod.qkv.weight), "qkv_b": np64(mod.qkv.bias),
        "proj_w": np64(mod.proj.weight), "proj_b": np64(mod.proj.bias),
        "bias_table": np64(mod.relative_position_bias_table),
        "bias_index": mod.relative_position_index.cpu().numpy(),
    }


def swin_block_params(block):
    p = attn_params(block.attn)
    p.update({
        "norm1_g": np64(block.norm1.weight), "norm1_b": np64(block.norm1.bias),
        "norm2_g": np64(block.norm2.weight), "norm2_b": np64(block.norm2.bias),
    })
    return p


def mlp_params(mod):
    return {
        "fc1_w": np64(mod.fc1.weight), "fc1_b": np64(mod.fc1.bias),
        "fc2_w": np64(mod.fc2.weight), "fc2_b": np64(mod.fc2.bias),
    }


def patch_embed_params(mod):
    return {
        "proj_w": np64(mod.proj.weight), "proj_b": np64(mod.proj.bias),
        "norm_g": np64(mod.norm.weight), "norm_b": np64(mod.norm.bias),
    }


def patch_merging_params(mod):
    return {
        "norm_g": np64(mod.norm.weight), "norm_b": np64(mod.norm.bias),
        "reduce_w": np64(mod.reduce.weight),
    }


def hic_params(mod):
    return {
        "norm_g": np64(mod.norm.weight), "norm_b": np64(mod.norm.bias),
        "expand_w": np64(mod.expand.weight), "expand_b": np64(mod.expand.bias),
        "conv_w": np64(mod.conv.weight), "conv_b": np64(mod.conv.bias),
    }


def zero_all(module):
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module

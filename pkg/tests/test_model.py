import numpy as np
import pytest
import torch
import torch.nn as nn

from hsanet.attention import EPGA
from hsanet.errors import ConfigError, DataError
from hsanet.model import (LinearFusion, ModelConfig, ResConvBlock, build,
                          load_checkpoint, pad_to_multiple, param_count, param_table,
                          save_checkpoint)
from hsanet.swin import Mlp
from hsanet.upsample import HICPatchExpand, PatchExpand

TINY = ModelConfig(shallow_width=8, embed_dim=8, patch_size=2, depths=(1, 1, 1),
                   heads=(1, 2, 1), window=4, ratio=2, seed=0)

PARAM_TARGET = 610_000


class TestParamBudget:
    def test_default_config_near_target(self):
        total = param_count(build(ModelConfig()))
        assert abs(total - PARAM_TARGET) / PARAM_TARGET <= 0.15

    def test_table_sums_to_total(self):
        model = build(ModelConfig())
        table = param_table(model)
        assert table["total"] == param_count(model)
        assert sum(v for k, v in table.items() if k != "total") == table["total"]

    def test_single_linear_count(self):
        assert param_count(nn.Linear(8, 4)) == 36

    def test_count_invariant_under_forward(self):
        model = build(TINY)
        before = param_count(model)
        with torch.no_grad():
            model(torch.rand(1, 1, 64, 64))
        assert param_count(model) == before


class TestDeterminism:
    def test_same_seed_bit_identical_params(self):
        a = build(ModelConfig(seed=7))
        b = build(ModelConfig(seed=7))
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_different_seed_differs(self):
        a = build(TINY)
        b = build(ModelConfig(**{**TINY.__dict__, "seed": 1}))
        assert any(not torch.equal(pa, pb)
                   for pa, pb in zip(a.parameters(), b.parameters()))

    def test_same_input_bit_identical_output(self):
        model = build(TINY)
        x = torch.rand(2, 1, 64, 64)
        with torch.no_grad():
            assert torch.equal(model(x), model(x))


class TestGlobalResidual:
    def test_identity_at_initialization(self):
        model = build(TINY)
        x = torch.rand(2, 1, 64, 64)
        with torch.no_grad():
            y = model(x)
        assert (y - x).abs().max().item() == 0.0

    def test_identity_with_padding(self):
        model = build(TINY)
        x = torch.rand(1, 1, 70, 90)
        with torch.no_grad():
            y = model(x)
        assert y.shape == x.shape
        assert (y - x).abs().max().item() == 0.0

    def test_body_contributes_after_perturbation(self):
        model = build(TINY)
        with torch.no_grad():
            model.out_conv.weight.add_(0.01)
        x = torch.rand(1, 1, 64, 64)
        with torch.no_grad():
            assert not torch.equal(model(x), x)


class TestShapes:
    def test_shape_closure_various_sizes(self):
        model = build(TINY)  # pad multiple 16
        for h, w in ((64, 64), (48, 80), (33, 50), (17, 40)):
            x = torch.rand(1, 1, h, w)
            with torch.no_grad():
                assert model(x).shape == (1, 1, h, w)

    def test_too_small_input_rejected(self):
        model = build(TINY)
        with pytest.raises(ValueError):
            model(torch.rand(1, 1, 8, 8))

    def test_wrong_channels_rejected(self):
        model = build(TINY)
        with pytest.raises(ValueError):
            model(torch.rand(1, 2, 64, 64))

    def test_pad_to_multiple(self):
        x = torch.rand(1, 1, 33, 50)
        out = pad_to_multiple(x, 16)
        assert out.shape == (1, 1, 48, 64)
        assert torch.equal(out[:, :, :33, :50], x)
        with pytest.raises(ValueError):
            pad_to_multiple(torch.rand(1, 1, 8, 8), 16)


class TestConfigValidation:
    def test_bad_patch_size(self):
        with pytest.raises(ConfigError, match="patch_size"):
            ModelConfig(patch_size=3).validate()

    def test_heads_mismatch(self):
        with pytest.raises(ConfigError, match="heads"):
            ModelConfig(depths=(1, 1, 1), heads=(1, 1)).validate()

    def test_head_divisibility(self):
        with pytest.raises(ConfigError, match="heads"):
            ModelConfig(embed_dim=6, depths=(1,), heads=(4,)).validate()

    def test_ratio_divisibility(self):
        with pytest.raises(ConfigError, match="ratio"):
            ModelConfig(shallow_width=30, ratio=4).validate()

    def test_bad_merge_mode(self):
        with pytest.raises(ConfigError, match="hic_merge"):
            ModelConfig(hic_merge="median").validate()

    def test_even_depths_mirrored(self):
        cfg = ModelConfig(depths=(1, 1), heads=(1, 1), embed_dim=8, shallow_width=8,
                          window=2, ratio=2)
        assert cfg.full_depths == (1, 1, 1)
        assert cfg.full_heads == (1, 1, 1)
        assert cfg.num_merges == 1


class TestAblationToggles:
    def test_esga_off_uses_mlp_ffn(self):
        model = build(ModelConfig(**{**TINY.__dict__, "use_esga": False}))
        assert isinstance(model.bottleneck.blocks[0].ffn, Mlp)
        assert model.enc_convs[0].gate is None
        x = torch.rand(1, 1, 64, 64)
        with torch.no_grad():
            assert model(x).shape == x.shape

    def test_epga_off_uses_linear_fusion(self):
        model = build(ModelConfig(**{**TINY.__dict__, "use_epga": False}))
        assert isinstance(model.fusions[0], LinearFusion)
        x = torch.rand(1, 1, 64, 64)
        with torch.no_grad():
            assert model(x).shape == x.shape

    def test_epga_on_uses_parallel_gate(self):
        model = build(TINY)
        assert isinstance(model.fusions[0], EPGA)

    def test_hic_off_uses_patch_expand(self):
        model = build(ModelConfig(**{**TINY.__dict__, "use_hic": False}))
        assert isinstance(model.expands[0], PatchExpand)
        assert isinstance(model.final_expand, PatchExpand)
        x = torch.rand(1, 1, 64, 64)
        with torch.no_grad():
            assert model(x).shape == x.shape

    def test_hic_on_uses_hybrid_expand(self):
        model = build(TINY)
        assert isinstance(model.expands[0], HICPatchExpand)

    def test_texture_mlp_toggle(self):
        model = build(ModelConfig(**{**TINY.__dict__, "use_texture_mlp": False}))
        assert model.texture is None
        x = torch.rand(1, 1, 64, 64)
        with torch.no_grad():
            assert model(x).shape == x.shape

    def test_all_off_variant_runs(self):
        cfg = ModelConfig(**{**TINY.__dict__, "use_esga": False, "use_epga": False,
                             "use_hic": False})
        model = build(cfg)
        x = torch.rand(1, 1, 64, 64)
        with torch.no_grad():
            assert model(x).shape == x.shape


class TestTrainingStep:
    def test_single_step_decreases_loss(self):
        from hsanet.data import extract_patches, synthetic_phantom_volume
        from hsanet.losses import denoise_loss
        from hsanet.training import SGD

        pair = synthetic_phantom_volume(slices=2, height=64, width=64, seed=4)
        batch = extract_patches(pair, size=64, count=4, rng=4)
        xb = torch.from_numpy(batch.low)
        yb = torch.from_numpy(batch.full)

        model = build(TINY)
        opt = SGD(model.parameters(), momentum=0.9, weight_decay=1e-4)
        terms = denoise_loss(model(xb), yb)
        before = terms.total.item()
        opt.zero_grad()
        terms.total.backward()
        opt.step(0.01)
        after = denoise_loss(model(xb), yb).total.item()
        assert after < before


class TestCheckpoints:
    def test_round_trip_bitwise(self, tmp_path):
        model = build(TINY)
        with torch.no_grad():
            for p in model.parameters():
                p.add_(torch.randn_like(p) * 0.01)
        path = tmp_path / "ckpt.pt"
        save_checkpoint(path, model, TINY, step=17)
        loaded, cfg, step, opt_state = load_checkpoint(path)
        assert step == 17
        assert cfg == TINY
        assert opt_state is None
        for a, b in zip(model.parameters(), loaded.parameters()):
            assert torch.equal(a, b)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "notckpt.pt"
        torch.save({"something": 1}, path)
        with pytest.raises(DataError):
            load_checkpoint(path)


class TestResConvBlock:
    def test_zero_convs_identity(self):
        torch.manual_seed(0)
        block = ResConvBlock(8, 2)
        with torch.no_grad():
            block.conv2.weight.zero_()
            block.conv2.bias.zero_()
        x = torch.rand(1, 8, 6, 6)
        assert torch.equal(block(x), x)

    def test_gate_disabled(self):
        torch.manual_seed(1)
        block = ResConvBlock(8, 2, use_esga=False)
        assert block.gate is None
        x = torch.rand(1, 8, 6, 6)
        assert block(x).shape == x.shape

"""Network assembly: output shapes and ranges, skip wiring, parameter
accounting against the published model-size targets."""

import numpy as np
import pytest

from fsnet.network import (Backbone, DepthNet, NetworkConfig, PoseNet, SegNet,
                           count_parameters, model_size_mb)
from fsnet.tensor import ShapeError, Tensor

RNG = np.random.default_rng(11)


def rgb(n=1, h=16, w=24):
    return Tensor(RNG.random((n, 3, h, w)).astype(np.float32))


@pytest.fixture(scope="module")
def small_cfg():
    return NetworkConfig(c_base=4, bottleneck_dim=16)


class TestBackbone:
    def test_output_shape(self, small_cfg):
        net = Backbone(small_cfg, np.random.default_rng(0))
        out = net(rgb())
        assert out.shape == (1, small_cfg.c_base, 16, 24)

    def test_rejects_bad_resolution(self, small_cfg):
        net = Backbone(small_cfg, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            net(rgb(h=12, w=24))

    def test_stage_details_count_and_shapes(self, small_cfg):
        net = Backbone(small_cfg, np.random.default_rng(0))
        details = net.stage_details(rgb())
        assert len(details) == 8
        c = small_cfg.c_base
        enc_ch = [c, 2 * c, 4 * c, 8 * c]
        dec_ch = [4 * c, 2 * c, c, c]
        for (g, l, fused), ch in zip(details, enc_ch + dec_ch):
            assert g.shape == l.shape == fused.shape
            assert fused.shape[1] == ch

    def test_stage_details_match_forward(self, small_cfg):
        rng_seed = np.random.default_rng(5)
        net = Backbone(small_cfg, rng_seed)
        net.set_mode(False)
        x = rgb()
        full = net(x)
        last = net.stage_details(x)[-1][2]
        np.testing.assert_allclose(last.data, full.data, atol=1e-6)


class TestHeads:
    def test_depth_disparity_in_unit_interval(self, small_cfg):
        net = DepthNet(small_cfg, np.random.default_rng(1))
        disp = net(rgb())
        assert disp.shape == (1, 1, 16, 24)
        assert np.all(disp.data > 0) and np.all(disp.data < 1)

    def test_disparity_to_depth_range(self, small_cfg):
        net = DepthNet(small_cfg, np.random.default_rng(1))
        disp = Tensor(np.array([0.0, 1.0]).reshape(1, 1, 1, 2))
        depth = net.disparity_to_depth(disp)
        np.testing.assert_allclose(depth.data.reshape(-1),
                                   [small_cfg.max_depth, small_cfg.min_depth])

    def test_seg_logits_shape(self, small_cfg):
        net = SegNet(small_cfg, np.random.default_rng(2))
        out = net(rgb(2))
        assert out.shape == (2, small_cfg.num_classes, 16, 24)

    def test_pose_output_shape_and_scale(self):
        cfg = NetworkConfig(c_base=4, bottleneck_dim=16, in_channels=9)
        net = PoseNet(cfg, np.random.default_rng(3))
        frames = Tensor(RNG.random((2, 9, 16, 24)).astype(np.float32))
        pose = net(frames)
        assert pose.shape == (2, 12, 1, 1)
        assert np.abs(pose.data).max() < 1.0   # pose_scale keeps motions small
        pairs = PoseNet.as_pose_pairs(pose)
        assert pairs.shape == (2, 2, 6)

    def test_pose_rejects_rgb(self):
        cfg = NetworkConfig(c_base=4, bottleneck_dim=16, in_channels=9)
        net = PoseNet(cfg, np.random.default_rng(3))
        with pytest.raises(ShapeError):
            net(rgb())


class TestParameterAccounting:
    def test_count_matches_sum(self, small_cfg):
        net = DepthNet(small_cfg, np.random.default_rng(0))
        total, breakdown = count_parameters(net)
        assert total == sum(breakdown.values()) == net.num_parameters()

    def test_variant_lookup(self):
        assert NetworkConfig.variant("S").c_base == 16
        assert NetworkConfig.variant("L").c_base == 32
        with pytest.raises(ValueError):
            NetworkConfig.variant("XL")

    @pytest.mark.parametrize("variant,builder,target_mb", [
        ("S", DepthNet, 5.5), ("L", DepthNet, 16.5),
        ("S", PoseNet, 3.9), ("L", PoseNet, 11.9),
    ])
    def test_model_sizes(self, variant, builder, target_mb):
        cfg = NetworkConfig.variant(
            variant, in_channels=9 if builder is PoseNet else 3)
        net = builder(cfg, np.random.default_rng(0))
        assert model_size_mb(net) == pytest.approx(target_mb, rel=0.10)


class TestDeterminism:
    def test_same_seed_same_output(self, small_cfg):
        x = rgb()
        outs = []
        for _ in range(2):
            net = DepthNet(small_cfg, np.random.default_rng(9))
            net.set_mode(False)
            outs.append(net(Tensor(x.data.copy())).data)
        np.testing.assert_array_equal(outs[0], outs[1])

"""Top-level acceptance gate.

Nine numbered criteria, one test each, each printing a single PASS/FAIL
line (visible through pytest's capture) with its headline numbers. The
training-based criteria share module-scoped fixtures so the toy models
are trained once.
"""

import time

import numpy as np
import pytest

from fsnet import checkpoint as ckpt
from fsnet import losses, ops, spectral
from fsnet.blocks import (ConvBlockSpec, ConvLadderBlock, FreqBlockSpec,
                          FreqLearningBlock, JointBlock, JointBlockSpec)
from fsnet.gradcheck import finite_diff_check, grad_input
from fsnet.geometry import CameraIntrinsics
from fsnet.network import (DepthNet, NetworkConfig, PoseNet, SegNet,
                           count_parameters, model_size_mb)
from fsnet.tensor import (Tensor, clamp, concat_channels, exp_neg, log,
                          minimum_over, reduce_mean, reduce_sum, shift2d,
                          sigmoid, silu, slice_channels, sqrt)
from fsnet.train import TrainConfig, train_depth, train_seg


def report(capsys, n, title, ok, detail):
    with capsys.disabled():
        print(f"\nCRITERION {n} ({title}): {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {n}: {detail}"


# -- shared toy training runs -------------------------------------------------

@pytest.fixture(scope="module")
def depth_run():
    cfg = TrainConfig()  # the shipped defaults are the acceptance config
    t0 = time.perf_counter()
    out = train_depth(cfg)
    out["elapsed"] = time.perf_counter() - t0
    return out


@pytest.fixture(scope="module")
def seg_run():
    cfg = TrainConfig(task="segmentation", steps=3000, lr=1e-3, batch_size=2,
                      num_samples=20, height=64, width=64,
                      log_every=50, eval_every=50, stop_miou=0.95)
    t0 = time.perf_counter()
    out = train_seg(cfg)
    out["elapsed"] = time.perf_counter() - t0
    return out


# -- criterion 1: spectral correctness ----------------------------------------

def test_criterion_1_spectral(capsys):
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    worst_rt, worst_pars, worst_oracle = 0.0, 0.0, 0.0
    for _ in range(200):
        c = int(rng.integers(1, 5))
        h = int(rng.integers(1, 33))
        w = int(rng.integers(1, 49))
        x = Tensor(rng.standard_normal((1, c, h, w)))
        F = spectral.rdft2(x)
        back = spectral.irdft2(F, w)
        worst_rt = max(worst_rt, np.abs(back.data - x.data).max())
        # Parseval on the half spectrum: interior columns carry double
        # weight, DC (and Nyquist when w is even) single
        weights = np.full(F.re.shape[-1], 2.0)
        weights[0] = 1.0
        if w % 2 == 0:
            weights[-1] = 1.0
        spec_energy = ((F.re.data ** 2 + F.im.data ** 2) * weights).sum()
        worst_pars = max(worst_pars, abs(spec_energy - (x.data ** 2).sum()))
        naive = spectral.naive_rdft2(x.data)
        worst_oracle = max(worst_oracle,
                           np.abs(F.re.data - naive.real).max(),
                           np.abs(F.im.data - naive.imag).max())
    elapsed = time.perf_counter() - t0
    ok = worst_rt < 1e-10 and worst_pars < 1e-8 and worst_oracle < 1e-10 \
        and elapsed < 30.0
    report(capsys, 1, "spectral correctness", ok,
           f"round-trip {worst_rt:.2e} (<1e-10), Parseval {worst_pars:.2e} "
           f"(<1e-8), naive-DFT {worst_oracle:.2e} (<1e-10), {elapsed:.1f}s (<30s)")


# -- criterion 2: gradient suite ----------------------------------------------

def _leaf(rng, shape, scale=1.0, offset=0.0):
    t = Tensor(rng.standard_normal(shape) * scale + offset, requires_grad=True)
    t.grad = np.zeros_like(t.data)
    return t


def _block_leaves(block, x):
    leaves = {"x": x}
    for name, p in block.named_parameters():
        leaves[name] = p
    return leaves


def _grad_configs():
    """(name, builder) pairs; builder(seed) -> (f, leaves)."""
    cfgs = []

    def op_cfg(name, build):
        for seed in (0, 1):
            cfgs.append((f"{name}/{seed}", lambda s=seed: build(np.random.default_rng(s))))

    def ssq(t):  # smooth scalar readout
        return reduce_sum(t * t)

    def conv_build(rng):
        x = _leaf(rng, (1, 2, 5, 6))
        k = _leaf(rng, (3, 2, 3, 3), 0.5)
        return (lambda: ssq(ops.conv2d(x, k))), {"x": x, "k": k}
    op_cfg("conv2d", conv_build)

    def chlin_build(rng):
        x = _leaf(rng, (2, 3, 4, 4))
        w = _leaf(rng, (4, 3, 1, 1), 0.5)
        return (lambda: ssq(ops.channel_linear(x, w))), {"x": x, "w": w}
    op_cfg("channel_linear", chlin_build)

    def pool_build(rng):
        x = _leaf(rng, (1, 2, 7, 9))
        return (lambda: ssq(ops.maxpool_3x3_s2(x))), {"x": x}
    op_cfg("maxpool", pool_build)

    def up_build(rng):
        x = _leaf(rng, (1, 3, 3, 4))
        return (lambda: ssq(ops.upsample2x(x))), {"x": x}
    op_cfg("upsample2x", up_build)

    def bilin_build(rng):
        x = _leaf(rng, (1, 2, 6, 6))
        g = _leaf(rng, (1, 2, 6, 6), 1.2, 2.5)
        return (lambda: ssq(ops.bilinear_sample(x, g))), {"x": x, "g": g}
    op_cfg("bilinear_sample", bilin_build)

    def box_build(rng):
        x = _leaf(rng, (1, 2, 5, 5))
        return (lambda: ssq(ops.box3_mean(x))), {"x": x}
    op_cfg("box3_mean", box_build)

    def elem_build(rng):
        x = _leaf(rng, (1, 2, 4, 5))
        return (lambda: reduce_sum(silu(sigmoid(x) * x + exp_neg(x * x)))), {"x": x}
    op_cfg("elementwise_chain", elem_build)

    def logsqrt_build(rng):
        x = _leaf(rng, (1, 1, 4, 4), 0.5, 3.0)
        return (lambda: reduce_sum(log(clamp(x, 0.5, 10.0)) + sqrt(x))), {"x": x}
    op_cfg("log_sqrt_clamp", logsqrt_build)

    def min_build(rng):
        ts = [_leaf(rng, (1, 1, 5, 5)) for _ in range(3)]
        return (lambda: ssq(minimum_over(ts))), {f"t{i}": t for i, t in enumerate(ts)}
    op_cfg("minimum_over", min_build)

    def shuffle_build(rng):
        x = _leaf(rng, (1, 4, 4, 4))
        def f():
            a = slice_channels(x, 0, 2)
            b = slice_channels(x, 2, 4)
            return ssq(concat_channels(shift2d(a, 1, -1), b * a))
        return f, {"x": x}
    op_cfg("concat_slice_shift", shuffle_build)

    def reduce_build(rng):
        x = _leaf(rng, (2, 3, 4, 4))
        return (lambda: reduce_sum(reduce_mean(x * x, (1,)) * reduce_sum(x, (2, 3)))), {"x": x}
    op_cfg("reductions", reduce_build)

    def fft_build(rng):
        x = _leaf(rng, (1, 2, 5, 6))
        def f():
            F = spectral.rdft2(x)
            y = spectral.irdft2(
                spectral.unpack_freq(spectral.pack_freq(F) * 1.5), 6)
            return ssq(y)
        return f, {"x": x}
    op_cfg("spectral_transform", fft_build)

    # blocks (eval-mode BN), all four bottleneck branches of the ladder
    def block_cfg(name, make):
        for seed in (0, 1):
            def build(s=seed, mk=make):
                rng = np.random.default_rng(100 + s)
                block = mk(rng)
                block.set_mode(False)
                x = _leaf(rng, (1, block_in(block), 6, 6))
                def f():
                    y = block(x)
                    return reduce_sum(y * y)
                return f, _block_leaves(block, x)
            cfgs.append((f"{name}/{seed}", build))

    def block_in(block):
        return block.spec.in_c

    block_cfg("freq_block", lambda rng: FreqLearningBlock(
        FreqBlockSpec(2, 3, layer_num=2), rng, dtype=np.float64))
    block_cfg("conv_ladder_plain", lambda rng: ConvLadderBlock(
        ConvBlockSpec(2, 3, layer_num=4, dim=4), rng, dtype=np.float64))
    block_cfg("conv_ladder_squeeze", lambda rng: ConvLadderBlock(
        ConvBlockSpec(6, 3, layer_num=4, dim=4), rng, dtype=np.float64))
    block_cfg("conv_ladder_expand", lambda rng: ConvLadderBlock(
        ConvBlockSpec(3, 6, layer_num=4, dim=4), rng, dtype=np.float64))
    block_cfg("conv_ladder_both", lambda rng: ConvLadderBlock(
        ConvBlockSpec(6, 7, layer_num=4, dim=4), rng, dtype=np.float64))
    block_cfg("joint_block", lambda rng: JointBlock(
        JointBlockSpec(2, 3, freq_layers=2, conv_layers=4, dim=4),
        rng, dtype=np.float64))

    # heads
    def head_cfg(name, make, in_c):
        def build(mk=make, c=in_c):
            rng = np.random.default_rng(7)
            net = mk(rng)
            net.set_mode(False)
            x = _leaf(rng, (1, c, 8, 8), 0.3, 0.5)
            def f():
                y = net(x)
                return reduce_sum(y * y)
            return f, _block_leaves(net, x)
        cfgs.append((name, build))

    net_cfg = NetworkConfig(c_base=4, bottleneck_dim=4, min_depth=0.5,
                            max_depth=5.0, dtype=np.float64)
    head_cfg("depth_head", lambda rng: DepthNet(net_cfg, rng), 3)
    head_cfg("seg_head", lambda rng: SegNet(net_cfg, rng), 3)
    head_cfg("pose_head", lambda rng: PoseNet(net_cfg, rng), 9)

    # losses
    def loss_cfg(name, build):
        for seed in (0, 1):
            cfgs.append((f"{name}/{seed}",
                         lambda s=seed: build(np.random.default_rng(200 + s))))

    def pairwise_build(rng):
        a = _leaf(rng, (1, 3, 6, 8), 0.2, 0.5)
        b = _leaf(rng, (1, 3, 6, 8), 0.2, 0.5)
        return (lambda: reduce_sum(losses.pairwise_loss(a, b))), {"a": a, "b": b}
    loss_cfg("pairwise_loss", pairwise_build)

    K = CameraIntrinsics.default_for(6, 8)

    def recon_build(rng):
        tgt = Tensor(rng.uniform(0.2, 0.8, (1, 3, 6, 8)))
        refs = [Tensor(rng.uniform(0.2, 0.8, (1, 3, 6, 8))) for _ in range(2)]
        depth = _leaf(rng, (1, 1, 6, 8), 0.3, 4.0)
        poses = [_leaf(rng, (1, 6, 1, 1), 0.02) for _ in range(2)]
        # hold the auto-mask gating fixed across perturbations
        _, diag = losses.reconstruction_loss(tgt, refs, depth, poses, K)
        masks = diag["masks"]
        def f():
            loss, _ = losses.reconstruction_loss(tgt, refs, depth, poses, K,
                                                 masks=masks)
            return loss
        return f, {"depth": depth, "pose0": poses[0], "pose1": poses[1]}
    loss_cfg("reconstruction_loss", recon_build)

    def smooth_build(rng):
        disp = _leaf(rng, (1, 1, 6, 8), 0.05, 0.3)
        img = Tensor(rng.uniform(0.0, 1.0, (1, 3, 6, 8)))
        def f():
            depth = 1.0 / clamp(disp, 1e-3, 10.0)
            return losses.geometry_smoothness_loss(disp, depth, img, K)
        return f, {"disp": disp}
    loss_cfg("geometry_smoothness", smooth_build)

    def contrast_build(rng):
        disp = _leaf(rng, (1, 1, 6, 8), 0.2, 0.5)
        opened = losses.gray_opening(disp.data, 3)
        return (lambda: losses.self_contrast_loss(disp, 3, opened=opened)), \
            {"disp": disp}
    loss_cfg("self_contrast", contrast_build)

    def total_build(rng):
        tgt = Tensor(rng.uniform(0.2, 0.8, (1, 3, 6, 8)))
        refs = [Tensor(rng.uniform(0.2, 0.8, (1, 3, 6, 8))) for _ in range(2)]
        disp = _leaf(rng, (1, 1, 6, 8), 0.05, 0.25)
        poses = [_leaf(rng, (1, 6, 1, 1), 0.02) for _ in range(2)]
        opened = losses.gray_opening(disp.data, 31)
        depth0 = 1.0 / clamp(disp, 1e-3, 10.0)
        _, diag = losses.reconstruction_loss(tgt, refs, depth0, poses, K)
        masks = diag["masks"]
        def f():
            depth = 1.0 / clamp(disp, 1e-3, 10.0)
            loss, _ = losses.total_depth_loss(tgt, refs, disp, depth, poses,
                                              K, opened=opened, masks=masks)
            return loss
        return f, {"disp": disp, "pose0": poses[0]}
    loss_cfg("total_depth_loss", total_build)

    def ce_build(rng):
        logits = _leaf(rng, (2, 4, 5, 5))
        labels = rng.integers(0, 4, (2, 5, 5))
        return (lambda: losses.cross_entropy_loss(logits, labels)), \
            {"logits": logits}
    loss_cfg("cross_entropy", ce_build)

    return cfgs


def test_criterion_2_gradients(capsys):
    t0 = time.perf_counter()
    cfgs = _grad_configs()
    assert len(cfgs) >= 50
    worst, worst_name = 0.0, ""
    for name, build in cfgs:
        f, leaves = build()
        rep = finite_diff_check(f, leaves, max_coords=3,
                                rng=np.random.default_rng(5))
        if rep.worst > worst:
            worst, worst_name = rep.worst, name
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 300.0
    report(capsys, 2, "gradient suite", ok,
           f"{len(cfgs)} configurations, max rel error {worst:.2e} "
           f"(<1e-5, worst at {worst_name}), {elapsed:.1f}s (<5min)")


# -- criterion 3: globality / locality ----------------------------------------

def test_criterion_3_receptive_fields(capsys):
    rng = np.random.default_rng(3)
    h = w = 24
    freq = FreqLearningBlock(FreqBlockSpec(1, 2, layer_num=2), rng,
                             dtype=np.float64)
    conv = ConvLadderBlock(ConvBlockSpec(1, 2, layer_num=4, dim=64), rng,
                           dtype=np.float64)
    for blk in (freq, conv):
        blk.set_mode(False)

    def support(block):
        x = Tensor(rng.standard_normal((1, 1, h, w)))
        def probe(t):
            out = block(t)
            pick = np.zeros(out.shape)
            pick[0, :, h // 2, w // 2] = 1.0
            return reduce_sum(out * Tensor(pick))
        g = grad_input(probe, x)[0, 0]
        return np.abs(g) > 1e-14

    freq_alive = support(freq)
    conv_alive = support(conv)
    L = sum(1 for layer in conv.layers if layer.kernel.shape[-1] == 3)
    ys, xs = np.nonzero(conv_alive)
    extent = max(np.abs(ys - h // 2).max(), np.abs(xs - w // 2).max())
    window = np.zeros((h, w), dtype=bool)
    window[h // 2 - L:h // 2 + L + 1, w // 2 - L:w // 2 + L + 1] = True
    conv_bounded = not (conv_alive & ~window).any()
    ok = freq_alive.mean() >= 0.99 and conv_bounded and extent == L
    report(capsys, 3, "globality/locality", ok,
           f"frequency support {freq_alive.mean():.1%} (>=99%), conv support "
           f"within ({2*L+1})^2 window: {conv_bounded}, extent {extent}=L={L}")


# -- criterion 4: architecture fidelity ---------------------------------------

def test_criterion_4_model_sizes(capsys):
    targets = [("depth", "S", 5.5), ("depth", "L", 16.5),
               ("pose", "S", 3.9), ("pose", "L", 11.9)]
    rng = np.random.default_rng(0)
    lines, ok = [], True
    for head, variant, target in targets:
        cfg = NetworkConfig.variant(variant)
        net = DepthNet(cfg, rng) if head == "depth" else PoseNet(cfg, rng)
        size = model_size_mb(net)
        dev = (size - target) / target
        ok = ok and abs(dev) <= 0.10
        lines.append(f"{head}-{variant} {size:.2f}MB vs {target}MB "
                     f"({dev:+.1%})")
        _, breakdown = count_parameters(net)
        with capsys.disabled():
            print(f"\n  {head}-{variant} per-block sizes (MB):")
            for name, count in sorted(breakdown.items()):
                print(f"    {name:22s} {count * 4 / 1e6:8.3f}")
    report(capsys, 4, "architecture fidelity", ok, "; ".join(lines))


# -- criterion 5: loss semantics ----------------------------------------------

def test_criterion_5_loss_semantics(capsys):
    rng = np.random.default_rng(5)
    K = CameraIntrinsics.default_for(12, 16)

    # static scene, identity pose: every ref equals the target
    img = Tensor(rng.uniform(0.0, 1.0, (1, 3, 12, 16)))
    depth = Tensor(rng.uniform(2.0, 10.0, (1, 1, 12, 16)))
    zero_pose = Tensor(np.zeros((1, 6, 1, 1)))
    static_loss, _ = losses.reconstruction_loss(
        img, [img, img], depth, [zero_pose, zero_pose], K)
    static_ok = static_loss.item() == 0.0

    # fronto-parallel plane: constant depth and disparity, uniform image
    const_depth = Tensor(np.full((1, 1, 12, 16), 5.0))
    const_disp = Tensor(np.full((1, 1, 12, 16), 0.2))
    flat_img = Tensor(np.full((1, 3, 12, 16), 0.5))
    gs = losses.geometry_smoothness_loss(const_disp, const_depth, flat_img, K)
    plane_ok = abs(gs.item()) < 1e-8

    # opening-invariant disparity has zero self-contrast
    base = rng.uniform(0.2, 0.8, (1, 1, 24, 24))
    invariant = losses.gray_opening(base, 5)
    sc = losses.self_contrast_loss(Tensor(invariant), 5)
    contrast_ok = sc.item() == 0.0

    # opening idempotent and anti-extensive on 100 random maps
    idem_ok = anti_ok = True
    for _ in range(100):
        x = rng.standard_normal((1, 1, int(rng.integers(5, 20)),
                                 int(rng.integers(5, 20))))
        o = losses.gray_opening(x, 3)
        idem_ok &= bool(np.array_equal(losses.gray_opening(o, 3), o))
        anti_ok &= bool((o <= x + 1e-15).all())

    ok = static_ok and plane_ok and contrast_ok and idem_ok and anti_ok
    report(capsys, 5, "loss semantics", ok,
           f"static-scene loss {static_loss.item()} (==0), plane 3DGS "
           f"{gs.item():.1e} (<1e-8), opening-invariant contrast {sc.item()} "
           f"(==0), opening idempotent {idem_ok}, anti-extensive {anti_ok}")


# -- criteria 6/7: toy training -----------------------------------------------

def test_criterion_6_toy_depth(capsys, depth_run):
    final, elapsed = depth_run["final"], depth_run["elapsed"]
    ok = final["abs_rel"] < 0.15 and final["warp_l1"] < 0.03 \
        and elapsed < 900.0 and depth_run["steps_run"] <= 2000
    report(capsys, 6, "toy depth training", ok,
           f"abs_rel {final['abs_rel']:.3f} (<0.15), warp L1 "
           f"{final['warp_l1']:.4f} (<0.03), {depth_run['steps_run']} steps, "
           f"{elapsed:.0f}s (<900s)")


def test_criterion_7_toy_segmentation(capsys, seg_run):
    final, elapsed = seg_run["final"], seg_run["elapsed"]
    ok = final["mean_iou"] >= 0.95 and seg_run["steps_run"] <= 3000 \
        and elapsed < 900.0
    report(capsys, 7, "toy segmentation", ok,
           f"mIoU {final['mean_iou']:.3f} (>=0.95) in {seg_run['steps_run']} "
           f"steps (<=3000), {elapsed:.0f}s (<900s)")


# -- criterion 8: persistence -------------------------------------------------

def test_criterion_8_checkpoint(capsys, tmp_path):
    rng = np.random.default_rng(8)
    cfg = NetworkConfig.variant("S", min_depth=2.0, max_depth=20.0)
    net = DepthNet(cfg, rng)
    x = Tensor(rng.uniform(0.0, 1.0, (1, 3, 16, 16)).astype(np.float32))
    net.set_mode(False)
    before = net(x).data.copy()

    path_a, path_b = tmp_path / "a.fsln", tmp_path / "b.fsln"
    ckpt.save_checkpoint(path_a, net, {"variant": "S"})
    net2 = DepthNet(cfg, np.random.default_rng(9))
    ckpt.load_checkpoint(path_a, net2)
    ckpt.save_checkpoint(path_b, net2, {"variant": "S"})
    bytes_ok = path_a.read_bytes() == path_b.read_bytes()
    net2.set_mode(False)
    forward_ok = bool(np.array_equal(net2(x).data, before))
    ok = bytes_ok and forward_ok
    report(capsys, 8, "persistence", ok,
           f"file bytes identical after reload+resave: {bytes_ok}, forward "
           f"bit-exact: {forward_ok}")


# -- criterion 9: branch smoothness on the trained model ----------------------

def test_criterion_9_branch_smoothness(capsys, depth_run):
    net = depth_run["net"]
    net.set_mode(False)
    snippet = depth_run["snippets"][0]
    x = Tensor(snippet.frames_clean[1][None].astype(np.float32))
    details = net.backbone.stage_details(x)

    def energy(t):
        d = t.data.astype(np.float64)
        std = d.std()
        z = (d - d.mean()) / (std if std > 0 else 1.0)
        gx = np.diff(z, axis=3)
        gy = np.diff(z, axis=2)
        return (gx ** 2).mean() + (gy ** 2).mean()

    wins = sum(1 for g, l, _ in details if energy(g) < energy(l))
    ok = wins >= 6
    report(capsys, 9, "frequency-branch smoothness", ok,
           f"LFL maps smoother than CNN maps in {wins}/8 stages (need >=6)")

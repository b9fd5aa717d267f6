"""Deformable sampling/convolution against brute-force and finite-difference oracles."""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from vinpaint.models.layers import (
    TAPS,
    AlignmentModule,
    DCABlock,
    FrameDecoder,
    FrameEncoder,
    MaskDecoder,
    OffsetPredictor,
    bilinear_sample,
    bilinear_sample_map,
    deform_conv,
    pad_to_multiple,
    unpad,
)


def bilinear_point_oracle(plane, sx, sy):
    """Zero-padded bilinear interpolation of a 2D array at one point, by hand."""
    h, w = plane.shape
    x0, y0 = int(np.floor(sx)), int(np.floor(sy))
    total = 0.0
    for yi, wy in ((y0, y0 + 1 - sy), (y0 + 1, sy - y0)):
        for xi, wx in ((x0, x0 + 1 - sx), (x0 + 1, sx - x0)):
            if 0 <= yi < h and 0 <= xi < w:
                total += plane[yi, xi] * wx * wy
    return total


def deform_conv_oracle(source, offsets, weight, bias=None):
    """Direct summation over taps, locations, and channels. Slow and obvious."""
    b, c, h, w = source.shape
    out_ch = weight.shape[0]
    out = np.zeros((b, out_ch, h, w))
    for bi in range(b):
        for o in range(out_ch):
            for y in range(h):
                for x in range(w):
                    acc = 0.0 if bias is None else float(bias[o])
                    for n, (dy, dx) in enumerate(TAPS):
                        sy = y + dy + offsets[bi, 2 * n, y, x]
                        sx = x + dx + offsets[bi, 2 * n + 1, y, x]
                        for ci in range(c):
                            acc += weight[o, ci, dy + 1, dx + 1] * bilinear_point_oracle(
                                source[bi, ci], sx, sy
                            )
                    out[bi, o, y, x] = acc
    return out


def test_bilinear_integer_location_is_exact():
    torch.manual_seed(0)
    f = torch.rand(4, 6, 7)
    assert torch.allclose(bilinear_sample(f, (3, 2)), f[:, 2, 3])
    assert torch.allclose(bilinear_sample(f, (6, 5)), f[:, 5, 6])  # corner


def test_bilinear_halfway_is_average():
    f = torch.zeros(2, 3, 3)
    f[:, 0, 0] = torch.tensor([1.0, 3.0])
    f[:, 0, 1] = torch.tensor([2.0, 5.0])
    out = bilinear_sample(f, (0.5, 0.0))
    assert torch.allclose(out, torch.tensor([1.5, 4.0]))


def test_bilinear_outside_is_zero():
    f = torch.ones(3, 4, 4)
    assert torch.all(bilinear_sample(f, (-2.0, 1.0)) == 0)
    assert torch.all(bilinear_sample(f, (1.0, 9.5)) == 0)


def test_bilinear_matches_point_oracle_at_random_locations():
    rng = np.random.default_rng(1)
    plane = rng.random((5, 6))
    f = torch.from_numpy(plane).unsqueeze(0)
    for _ in range(50):
        sx = rng.uniform(-2, 8)
        sy = rng.uniform(-2, 7)
        got = float(bilinear_sample(f, (sx, sy))[0])
        assert abs(got - bilinear_point_oracle(plane, sx, sy)) < 1e-12


def test_deform_conv_zero_offsets_equals_standard_conv():
    torch.manual_seed(2)
    src = torch.rand(2, 3, 8, 9)
    weight = torch.randn(4, 3, 3, 3)
    bias = torch.randn(4)
    offsets = torch.zeros(2, 18, 8, 9)
    got = deform_conv(src, offsets, weight, bias)
    ref = F.conv2d(src, weight, bias, padding=1)
    assert (got - ref).abs().max() < 1e-5


def test_deform_conv_constant_source_is_offset_independent_in_interior():
    torch.manual_seed(3)
    src = torch.full((1, 2, 9, 9), 0.7)
    weight = torch.randn(2, 2, 3, 3)
    small = torch.rand(1, 18, 9, 9) * 0.8 - 0.4  # keep sampling well inside
    base = deform_conv(src, torch.zeros_like(small), weight)
    moved = deform_conv(src, small, weight)
    interior = (slice(None), slice(None), slice(2, 7), slice(2, 7))
    assert (base[interior] - moved[interior]).abs().max() < 1e-5


def test_deform_conv_integer_shift_matches_shifted_conv_and_oracle():
    torch.manual_seed(4)
    src = torch.rand(1, 1, 5, 5, dtype=torch.float64)
    weight = torch.randn(1, 1, 3, 3, dtype=torch.float64)
    offsets = torch.zeros(1, 18, 5, 5, dtype=torch.float64)
    offsets[:, 1::2] = 1.0  # x-offset 1 on every tap
    got = deform_conv(src, offsets, weight).numpy()
    shifted = torch.zeros_like(src)
    shifted[..., :, :-1] = src[..., :, 1:]  # source moved left, zero-filled
    ref = F.conv2d(shifted, weight, padding=1).numpy()
    # Column 0 differs by construction: zero-filling the shift discards source
    # column 0, which the deformable kernel still reaches. Everywhere else the
    # two are the same computation.
    np.testing.assert_allclose(got[..., 1:], ref[..., 1:], atol=1e-12)
    oracle = deform_conv_oracle(src.numpy(), offsets.numpy(), weight.numpy())
    np.testing.assert_allclose(got, oracle, atol=1e-12)


def test_deform_conv_random_offsets_match_direct_summation_oracle():
    rng = np.random.default_rng(5)
    src = rng.random((1, 2, 5, 5))
    weight = rng.standard_normal((2, 2, 3, 3))
    bias = rng.standard_normal(2)
    offsets = rng.uniform(-2.3, 2.3, size=(1, 18, 5, 5))
    got = deform_conv(
        torch.from_numpy(src), torch.from_numpy(offsets), torch.from_numpy(weight),
        torch.from_numpy(bias),
    ).numpy()
    oracle = deform_conv_oracle(src, offsets, weight, bias)
    np.testing.assert_allclose(got, oracle, atol=1e-10)


def test_deform_conv_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        deform_conv(torch.zeros(1, 2, 4, 4), torch.zeros(1, 18, 5, 4), torch.zeros(2, 2, 3, 3))


def test_offset_gradient_matches_finite_differences():
    torch.manual_seed(6)
    src = torch.rand(1, 2, 6, 6, dtype=torch.float64)
    weight = torch.randn(2, 2, 3, 3, dtype=torch.float64)
    proj = torch.randn(1, 2, 6, 6, dtype=torch.float64)
    offsets = (torch.rand(1, 18, 6, 6, dtype=torch.float64) * 1.4 - 0.7).requires_grad_(True)

    def loss_of(off):
        return (deform_conv(src, off, weight) * proj).sum()

    loss_of(offsets).backward()
    eps = 1e-6
    rng = np.random.default_rng(7)
    for _ in range(12):
        k = int(rng.integers(0, 18))
        i = int(rng.integers(0, 6))
        j = int(rng.integers(0, 6))
        with torch.no_grad():
            plus = offsets.detach().clone()
            plus[0, k, i, j] += eps
            minus = offsets.detach().clone()
            minus[0, k, i, j] -= eps
            fd = (loss_of(plus) - loss_of(minus)).item() / (2 * eps)
        grad = offsets.grad[0, k, i, j].item()
        assert abs(grad - fd) <= 1e-3 * max(1.0, abs(fd)), (k, i, j, grad, fd)


def test_dca_block_zero_offset_predictor_degenerates_to_plain_conv():
    torch.manual_seed(8)
    block = DCABlock(4)
    # conv2 is zero-initialized already; also zero conv1 to be explicit
    with torch.no_grad():
        block.offsets.conv1.weight.zero_()
        block.offsets.conv1.bias.zero_()
    src = torch.rand(1, 4, 8, 8)
    tgt = torch.rand(1, 4, 8, 8)
    got = block(src, tgt)
    ref = block.kernel(src)
    assert (got - ref).abs().max() < 1e-6


def test_dca_block_identity_configuration():
    torch.manual_seed(9)
    block = DCABlock(3)
    with torch.no_grad():
        for p in block.offsets.parameters():
            p.zero_()
        block.kernel.weight.zero_()
        block.kernel.bias.zero_()
        block.kernel.weight[:, :, 1, 1] = torch.eye(3)  # center tap identity
    src = torch.rand(1, 3, 8, 8)
    out = block(src, src)
    assert (out - src).abs().max() < 1e-6


def test_alignment_cascade_zero_blocks_is_identity():
    align = AlignmentModule(4, num_blocks=0)
    src = torch.rand(2, 4, 6, 6)
    tgt = torch.rand(2, 4, 6, 6)
    assert torch.equal(align(src, tgt), src)


@pytest.mark.parametrize("n", [0, 1, 2, 3, 4, 5, 6])
def test_alignment_cascade_depth_configurable(n):
    align = AlignmentModule(3, num_blocks=n)
    out = align(torch.rand(1, 3, 4, 4), torch.rand(1, 3, 4, 4))
    assert out.shape == (1, 3, 4, 4)
    assert len(align.blocks) == n


def test_alignment_deterministic():
    torch.manual_seed(10)
    align = AlignmentModule(4, num_blocks=2)
    src = torch.rand(1, 4, 8, 8)
    tgt = torch.rand(1, 4, 8, 8)
    assert torch.equal(align(src, tgt), align(src, tgt))


def test_offset_predictor_starts_at_zero():
    pred = OffsetPredictor(4)
    out = pred(torch.rand(1, 4, 6, 6), torch.rand(1, 4, 6, 6))
    assert torch.all(out == 0)


def test_encoder_shapes_and_determinism():
    torch.manual_seed(11)
    enc = FrameEncoder(16)
    x = torch.rand(2, 3, 64, 64)
    f = enc(x)
    assert f.shape == (2, 16, 16, 16)
    assert torch.equal(f, enc(x))
    with pytest.raises(ValueError):
        enc(torch.full((1, 3, 8, 8), float("nan")))


def test_encoder_handles_zero_frame():
    enc = FrameEncoder(8)
    out = enc(torch.zeros(1, 3, 32, 32))
    assert torch.isfinite(out).all()


def test_decoder_shapes_and_range():
    torch.manual_seed(12)
    dec = FrameDecoder(16)
    f = torch.randn(2, 16, 16, 16) * 3
    y = dec(f)
    assert y.shape == (2, 3, 64, 64)
    assert torch.all((y >= 0) & (y <= 1))
    assert torch.equal(y, dec(f))


def test_mask_decoder_single_channel():
    dec = MaskDecoder(8)
    out = dec(torch.randn(1, 16, 8, 8))
    assert out.shape == (1, 1, 32, 32)
    assert torch.all((out >= 0) & (out <= 1))


def test_pad_unpad_roundtrip():
    x = torch.rand(1, 3, 61, 66)
    padded, size = pad_to_multiple(x)
    assert padded.shape[-2:] == (64, 68)
    assert torch.equal(unpad(padded, size), x)
    same, size2 = pad_to_multiple(torch.rand(1, 1, 8, 8))
    assert same.shape[-2:] == (8, 8) and size2 == (8, 8)

"""Loss oracles, cycle fixed points, and report composition identities."""

import math

import numpy as np
import pytest
import torch

from vinpaint.losses import (
    LossWeights,
    cycle_losses,
    loss_mask,
    loss_reconstruction,
    total_loss,
)
from vinpaint.train import TrainSample


def make_sample(x, y, mask, refs=None):
    refs = refs or [x.clone(), x.clone()]
    return TrainSample(
        target=x, refs=refs, gt=y, mask=mask,
        next_frame=x.clone(), next_mask=mask.clone(), next_gt=y.clone(),
    )


def oracle_phi(gt):
    """Exact completion: paste ground truth into the masked region."""

    def phi(refs, target, mask):
        m = mask.to(target.dtype)
        return (1.0 - m) * target + m * gt, torch.zeros(target.shape[0], 1, 1, 1)

    return phi


def oracle_psi(gt_mask):
    """Exact mask prediction: returns the ground-truth binary mask as floats."""

    def psi(query, completed, feature):
        return gt_mask.to(query.dtype)

    return psi


def test_reconstruction_zero_and_constant():
    x = torch.rand(2, 3, 8, 8)
    assert loss_reconstruction(x, x).item() == 0.0
    assert abs(loss_reconstruction(x, x + 0.1).item() - 0.1) < 1e-6


def test_reconstruction_matches_direct_sum_oracle():
    rng = np.random.default_rng(0)
    a = rng.random((1, 3, 5, 7))
    b = rng.random((1, 3, 5, 7))
    got = loss_reconstruction(torch.from_numpy(a), torch.from_numpy(b)).item()
    expect = float(np.mean(np.abs(a - b)))
    assert abs(got - expect) < 1e-12
    with pytest.raises(ValueError):
        loss_reconstruction(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))


def test_mask_loss_half_prediction_is_ln2():
    gt = (torch.rand(1, 1, 9, 9) > 0.5).float()
    got = loss_mask(torch.full((1, 1, 9, 9), 0.5), gt).item()
    assert abs(got - math.log(2.0)) < 1e-6


def test_mask_loss_perfect_prediction_is_tiny():
    gt = (torch.rand(1, 1, 8, 8) > 0.5).float()
    assert loss_mask(gt.clone(), gt).item() < 1e-5


def test_mask_loss_matches_direct_sum_oracle():
    rng = np.random.default_rng(1)
    p = rng.uniform(0.001, 0.999, size=(1, 1, 6, 6))
    g = (rng.random((1, 1, 6, 6)) > 0.5).astype(np.float64)
    got = loss_mask(torch.from_numpy(p), torch.from_numpy(g)).item()
    pc = np.clip(p, 1e-7, 1 - 1e-7)
    expect = float(np.mean(-(g * np.log(pc) + (1 - g) * np.log(1 - pc))))
    assert abs(got - expect) < 1e-6


def test_cycle_fixed_point_is_exactly_zero():
    torch.manual_seed(0)
    y = torch.rand(1, 3, 2, 4)
    mask = torch.zeros(1, 1, 2, 4)
    mask[..., 1:] = 1.0
    x = y.clone()
    x[:, :, :, 1:] = 0.123  # corrupted inside the mask
    sample = make_sample(x, y, mask)
    l_y, l_m = cycle_losses(sample, oracle_phi(y), oracle_psi(mask))
    assert l_y.item() == 0.0
    assert l_m.item() == 0.0


def test_cycle_with_identity_phi_and_exact_psi_is_zero():
    # A completion network that returns its input unchanged still satisfies
    # the frame cycle when the mask prediction is exact: both passes produce
    # the same frame, so mean|y_hat - y_hat*| = mean|x - x| = 0.
    x = torch.rand(1, 3, 2, 2)
    mask = torch.zeros(1, 1, 2, 2)
    mask[..., 0, 0] = 1.0
    identity_phi = lambda refs, target, m: (target, None)
    sample = make_sample(x, x.clone(), mask)
    l_y, l_m = cycle_losses(sample, identity_phi, oracle_psi(mask))
    assert l_y.item() == 0.0
    assert l_m.item() == 0.0


def test_cycle_hand_computed_two_pixel_case():
    # 1x2 frame, right pixel corrupted by delta in every channel; exact phi,
    # but psi predicts an empty mask. Worked by hand:
    #   y_hat = gt; y_hat* = paste-back with empty hole = x
    #   L_y = mean|gt - x| = delta * hole_fraction, hole_fraction = 1/2
    #   L_m = mean|m - 0| = 1/2
    delta = 0.25
    y = torch.full((1, 3, 1, 2), 0.5)
    x = y.clone()
    x[..., 1] += delta
    mask = torch.zeros(1, 1, 1, 2)
    mask[..., 1] = 1.0
    sample = make_sample(x, y, mask)
    empty_psi = lambda q, c, f: torch.zeros(1, 1, 1, 2)
    l_y, l_m = cycle_losses(sample, oracle_phi(y), empty_psi)
    assert abs(l_y.item() - delta * 0.5) < 1e-7
    assert abs(l_m.item() - 0.5) < 1e-7


def test_total_loss_paper_weights_composition():
    weights = LossWeights()  # lambda_f=2.5, lambda_s=0.25, lambda_c=1, lambda_y=1
    total, report = total_loss(1.0, 1.0, 1.0, 1.0, weights)
    assert abs(total.item() - 4.75) < 1e-7
    assert report.total == pytest.approx(4.75, abs=1e-9)
    assert report.l_c == pytest.approx(2.0, abs=1e-9)


def test_total_loss_zero_components():
    total, report = total_loss(0.0, 0.0, 0.0, 0.0, LossWeights())
    assert total.item() == 0.0 and report.total == 0.0


def test_total_loss_lambda_c_zero_ignores_cycle():
    w = LossWeights(lambda_c=0.0)
    t1, _ = total_loss(0.3, 0.2, 5.0, 9.0, w)
    t2, _ = total_loss(0.3, 0.2, 0.0, 0.0, w)
    assert abs(t1.item() - t2.item()) < 1e-7


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(lambda_f=-0.1)
    with pytest.raises(ValueError):
        LossWeights(lambda_y=-1.0)


def test_report_identities_on_random_inputs():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        w = LossWeights(
            lambda_f=float(rng.uniform(0, 5)),
            lambda_s=float(rng.uniform(0, 5)),
            lambda_c=float(rng.uniform(0, 5)),
            lambda_y=float(rng.uniform(0, 5)),
        )
        vals = rng.uniform(0, 10, size=4)
        _, rep = total_loss(*vals, w)
        assert abs(rep.l_c - (rep.l_m + w.lambda_y * rep.l_y)) < 1e-6
        assert abs(rep.total - (w.lambda_f * rep.l_f + w.lambda_s * rep.l_s + w.lambda_c * rep.l_c)) < 1e-6
        assert rep.total >= 0.0


def test_losses_are_nonnegative_and_zero_iff_components_zero():
    rng = np.random.default_rng(3)
    w = LossWeights(lambda_f=1.0, lambda_s=1.0, lambda_c=1.0, lambda_y=1.0)
    for _ in range(50):
        vals = rng.uniform(0.0, 3.0, size=4)
        total, _ = total_loss(*vals, w)
        assert total.item() >= 0.0
        if total.item() == 0.0:
            assert np.all(vals == 0.0)

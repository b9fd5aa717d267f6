"""Training losses: reconstruction, mask BCE, and the two cycle terms.

The cycle nests the two networks both ways round: re-completing the target
under the predicted mask must reproduce the first completion (frame cycle),
and predicting the mask from the first completion must reproduce the ground
truth mask (mask cycle). Gradients flow through both passes; the binary mask
fed back into the completion network uses a straight-through estimator.
"""

from dataclasses import asdict, dataclass

import torch

from .models.maskpred import straight_through_binarize

BCE_EPS = 1e-7


class NonFiniteLossError(RuntimeError):
    """The total loss went non-finite; the step was aborted, params untouched."""

    def __init__(self, report):
        super().__init__(f"non-finite loss: {report}")
        self.report = report


@dataclass(frozen=True)
class LossWeights:
    lambda_f: float = 2.5
    lambda_s: float = 0.25
    lambda_c: float = 1.0
    lambda_y: float = 1.0

    def __post_init__(self):
        for name in ("lambda_f", "lambda_s", "lambda_c", "lambda_y"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class LossReport:
    """Per-step scalar losses. ``l_c = l_m + lambda_y*l_y`` and
    ``total = lambda_f*l_f + lambda_s*l_s + lambda_c*l_c`` hold by construction."""

    l_f: float
    l_s: float
    l_y: float
    l_m: float
    l_c: float
    total: float

    def to_dict(self):
        return asdict(self)


def loss_reconstruction(pred, target):
    """Mean absolute error over all pixels and channels."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


def loss_mask(soft_pred, gt_mask):
    """Mean binary cross-entropy with 1e-7 clamping of the prediction."""
    if soft_pred.shape != gt_mask.shape:
        raise ValueError(f"shape mismatch: {tuple(soft_pred.shape)} vs {tuple(gt_mask.shape)}")
    p = soft_pred.clamp(BCE_EPS, 1.0 - BCE_EPS)
    g = gt_mask.to(p.dtype)
    return -(g * torch.log(p) + (1.0 - g) * torch.log(1.0 - p)).mean()


def total_loss(l_f, l_s, l_y, l_m, weights):
    """Combine the components; returns (total tensor, LossReport).

    The report scalars are recombined in float64 so the linear-combination
    identities hold to well under 1e-6 regardless of the training dtype.
    """

    def as_tensor(v):
        return v if torch.is_tensor(v) else torch.tensor(float(v))

    l_f, l_s, l_y, l_m = map(as_tensor, (l_f, l_s, l_y, l_m))
    l_c = l_m + weights.lambda_y * l_y
    total = weights.lambda_f * l_f + weights.lambda_s * l_s + weights.lambda_c * l_c
    f, s, y, m = (float(v.detach()) for v in (l_f, l_s, l_y, l_m))
    c = m + weights.lambda_y * y
    report = LossReport(
        l_f=f,
        l_s=s,
        l_y=y,
        l_m=m,
        l_c=c,
        total=weights.lambda_f * f + weights.lambda_s * s + weights.lambda_c * c,
    )
    return total, report


def cycle_losses(sample, phi, psi, threshold=0.5, hard=True, first_pass=None, mask_pred=None):
    """Frame- and mask-cycle L1 terms for one training sample.

    ``phi(refs, target, mask) -> (completed, feature)`` and
    ``psi(query, completed, feature) -> soft mask`` may be the real networks
    or test oracles. ``first_pass``/``mask_pred`` let a caller that already
    ran the teacher-forced completion and same-frame mask prediction reuse
    them. ``hard=False`` skips the straight-through binarization (the soft
    mask feeds the second completion directly), which keeps the composition
    smooth for gradient checking.
    """
    if first_pass is None:
        first_pass = phi(sample.refs, sample.target, sample.mask)
    completed, feature = first_pass
    if mask_pred is None:
        mask_pred = psi(sample.target, completed, feature)
    if hard:
        mask_in = straight_through_binarize(mask_pred, threshold)
    else:
        mask_in = mask_pred
    recompleted, _ = phi(sample.refs, sample.target, mask_in)
    l_y = (completed - recompleted).abs().mean()
    l_m = (sample.mask.to(mask_pred.dtype) - mask_pred).abs().mean()
    return l_y, l_m

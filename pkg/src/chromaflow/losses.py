"""Training objectives: flow-warping temporal loss, Charbonnier, chroma TV.

The warping loss compares each frame against its flow-warped successors at
intervals d in {1, 2}, weighted by a visibility mask computed from the
ground-truth frames; the reduction is the root-mean-square over masked
elements, averaged over (t, d) pairs, so magnitudes are resolution
independent.
"""

from dataclasses import dataclass

import torch

from .errors import ConfigError, ContractError, DivergenceError
from .motion import visibility_mask, warp_backward


@dataclass
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    alpha: float = 9.0
    epsilon: float = 1e-3
    d_set: tuple = (1, 2)

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        self.d_set = tuple(sorted(set(int(d) for d in self.d_set)))
        if not self.d_set or self.d_set[0] < 1:
            raise ConfigError("d_set must contain positive intervals")


def _safe_sqrt(x):
    # exact 0 at 0 with a 0 subgradient (plain sqrt backprops NaN there)
    positive = x > 0
    guarded = torch.where(positive, x, torch.ones_like(x))
    return torch.where(positive, torch.sqrt(guarded), torch.zeros_like(x))


def warp_loss_terms(pred, gt, flows, cfg):
    """Per-(t, d) masked consistency terms; see :func:`warp_loss`."""
    if pred.shape != gt.shape:
        raise ContractError("pred and gt shapes disagree")
    t_frames = pred.shape[0]
    if max(cfg.d_set) >= t_frames:
        raise ContractError(f"max interval {max(cfg.d_set)} needs more than {t_frames} frames")
    terms = {}
    for d in cfg.d_set:
        for t in range(t_frames - d):
            if (t, d) not in flows:
                raise ContractError(f"missing flow for frame pair ({t + d} -> {t})")
            f = flows[(t, d)]
            warped_pred = warp_backward(pred[t + d], f)
            warped_gt = warp_backward(gt[t + d], f)
            mask = visibility_mask(gt[t], warped_gt, cfg.alpha)
            masked = mask * (pred[t] - warped_pred)
            terms[(t, d)] = _safe_sqrt((masked**2).mean())
    return terms


def warp_loss(pred, gt, flows, cfg):
    """Masked temporal consistency loss over frame intervals d in cfg.d_set.

    Args:
        pred, gt: [T, C, H, W] tensors (predicted and ground-truth frames).
        flows: mapping (t, d) -> flow f_{t+d->t} on frame t's grid.
        cfg: LossConfig (alpha sets the visibility sharpness).

    For every pair, the visibility mask exp(-alpha ||y_t - W(y_{t+d})||^2)
    is computed from ``gt`` and applied to the prediction difference; the
    pair term is the RMS of the masked difference, and the loss is the
    mean over (t, d) pairs.
    """
    terms = warp_loss_terms(pred, gt, flows, cfg)
    return torch.stack(list(terms.values())).mean()


def charbonnier_loss(pred, gt, epsilon=1e-3):
    """Smooth L1-like reconstruction penalty: mean sqrt(diff^2 + eps^2)."""
    if pred.shape != gt.shape:
        raise ContractError("pred and gt shapes disagree")
    if epsilon <= 0:
        raise ContractError("epsilon must be positive")
    return torch.sqrt((pred - gt) ** 2 + epsilon**2).mean()


def smooth_loss(pred_ab):
    """Anisotropic total variation of the predicted chroma.

    Mean absolute forward difference along x plus along y, interior pixels
    only; invariant under global chroma offsets.
    """
    if not torch.isfinite(pred_ab).all():
        raise ContractError("predicted chroma must be finite")
    dx = pred_ab[..., :, 1:] - pred_ab[..., :, :-1]
    dy = pred_ab[..., 1:, :] - pred_ab[..., :-1, :]
    return dx.abs().mean() + dy.abs().mean()


def total_loss(warp, charbonnier, smooth, cfg):
    """Weighted sum lambda1 * L_w + lambda2 * L_c + L_s."""
    for name, part in (("warp", warp), ("charbonnier", charbonnier), ("smooth", smooth)):
        value = part.detach() if isinstance(part, torch.Tensor) else torch.tensor(float(part))
        if not torch.isfinite(value).all():
            raise DivergenceError(f"{name} loss is not finite: {value}")
    return cfg.lambda1 * warp + cfg.lambda2 * charbonnier + smooth

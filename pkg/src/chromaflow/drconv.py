"""Dynamic region-aware convolution and the decoder DRBlock.

A guide branch assigns every pixel to one of ``regions`` classes; a filter
branch generates one depthwise kernel set per region from globally pooled
features. The forward pass applies the hard per-pixel assignment; the
backward pass routes gradients through a softmax relaxation of the
assignment (straight-through, temperature 1), so the guide branch keeps
learning even though argmax itself has zero derivative.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError


class DRConv(nn.Module):
    def __init__(self, in_channels, out_channels, kernel=3, regions=4):
        super().__init__()
        if regions < 1:
            raise ConfigError("region count must be >= 1")
        if kernel % 2 == 0:
            raise ConfigError("kernel size must be odd")
        self.in_channels = in_channels
        self.kernel = kernel
        self.regions = regions
        self.assignment_mode = "hard"  # "soft" is a diagnostic mode for gradient checks

        hidden = max(in_channels // 4, 8)
        self.guide = nn.Conv2d(in_channels, regions, 3, padding=1)
        self.filter_gen = nn.Sequential(
            nn.Linear(in_channels, hidden),
            nn.ReLU(),
            nn.Linear(hidden, regions * in_channels * kernel * kernel),
        )
        self.pointwise = nn.Conv2d(in_channels, out_channels, 1)

    @staticmethod
    def _hard_index(logits):
        # strictly-greater scan: ties resolve to the lower region index
        best = logits[:, 0]
        idx = torch.zeros(best.shape, dtype=torch.long, device=logits.device)
        for r in range(1, logits.shape[1]):
            better = logits[:, r] > best
            idx = torch.where(better, torch.full_like(idx, r), idx)
            best = torch.where(better, logits[:, r], best)
        return idx

    def region_map(self, x):
        """Hard per-pixel region indices; ties go to the lower index."""
        return self._hard_index(self.guide(x))

    def _assignment(self, x):
        logits = self.guide(x)
        soft = torch.softmax(logits, dim=1)
        if self.assignment_mode == "soft":
            return soft
        idx = self._hard_index(logits.detach())
        hard = F.one_hot(idx, self.regions).permute(0, 3, 1, 2).to(x.dtype)
        return soft + (hard - soft).detach()

    def forward(self, x):
        n, c, h, w = x.shape
        m, k = self.regions, self.kernel
        weights = self._assignment(x)  # [N, m, H, W]
        filters = self.filter_gen(x.mean(dim=(2, 3)))  # [N, m*C*k*k]
        filters = filters.reshape(n * m * c, 1, k, k)
        stacked = x.unsqueeze(1).expand(n, m, c, h, w).reshape(1, n * m * c, h, w)
        dw = F.conv2d(stacked, filters, padding=k // 2, groups=n * m * c)
        dw = dw.reshape(n, m, c, h, w)
        mixed = (dw * weights.unsqueeze(2)).sum(dim=1)
        return self.pointwise(mixed)


class DRBlock(nn.Module):
    """(DRConv -> BatchNorm -> ReLU) twice, width-preserving."""

    def __init__(self, channels, kernel=3, regions=4):
        super().__init__()
        self.conv1 = DRConv(channels, channels, kernel, regions)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = DRConv(channels, channels, kernel, regions)
        self.bn2 = nn.BatchNorm2d(channels)

    def forward(self, x):
        x = F.relu(self.bn1(self.conv1(x)))
        return F.relu(self.bn2(self.conv2(x)))

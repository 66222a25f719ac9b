"""Decoupled spatial/temporal window attention with flow and histogram hooks.

The fusion block mixes three ingredients at one feature scale: the frame
features themselves, window self-attention within each frame (motion cues
enter the affinities through a projected flow), window self-attention
across frames, and a histogram-conditioned refinement. Concatenations are
followed by 1x1 projections so the channel width stays constant.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, ContractError


def partition_windows(x, s):
    """Split [T, C, H, W] into s*s non-overlapping windows of token vectors.

    Returns [T, s*s, tokens_per_window, C] with windows and in-window
    tokens both in row-major order. Exact inverse: :func:`merge_windows`.
    """
    t, c, h, w = x.shape
    if h % s or w % s:
        raise ContractError(f"spatial size {h}x{w} not divisible into {s}x{s} windows")
    wh, ww = h // s, w // s
    xw = x.reshape(t, c, s, wh, s, ww).permute(0, 2, 4, 3, 5, 1)
    return xw.reshape(t, s * s, wh * ww, c)


def merge_windows(tokens, s, h, w):
    """Inverse of :func:`partition_windows`."""
    t, _, _, c = tokens.shape
    wh, ww = h // s, w // s
    x = tokens.reshape(t, s, s, wh, ww, c).permute(0, 5, 1, 3, 2, 4)
    return x.reshape(t, c, h, w)


class ChannelLayerNorm(nn.Module):
    """LayerNorm over the channel dimension of [*, C, H, W] maps."""

    def __init__(self, channels):
        super().__init__()
        self.norm = nn.LayerNorm(channels)

    def forward(self, x):
        return self.norm(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


def _attend(q, k, v, heads, return_attn=False):
    """Multi-head scaled dot-product attention over [B, N, C] token groups.

    Uses the fused kernel for the plain forward; materializes the softmax
    matrix only when the caller asks for the attention weights.
    """
    b, n, c = q.shape
    d = c // heads
    q = q.reshape(b, n, heads, d).transpose(1, 2)
    k = k.reshape(b, n, heads, d).transpose(1, 2)
    v = v.reshape(b, n, heads, d).transpose(1, 2)
    if not return_attn:
        out = F.scaled_dot_product_attention(q, k, v)
        return out.transpose(1, 2).reshape(b, n, c), None
    attn = torch.softmax((q * d**-0.5) @ k.transpose(-2, -1), dim=-1)
    out = (attn @ v).transpose(1, 2).reshape(b, n, c)
    return out, attn


class SpatialWindowAttention(nn.Module):
    """Per-frame self-attention inside each of s*s windows.

    When built with flow injection, the 2-channel flow is linearly lifted
    to the token width and added before the query/key projections only;
    values see the unmodified tokens, so motion shapes the affinities but
    not the content.
    """

    def __init__(self, channels, heads, windows, flow_injection=True):
        super().__init__()
        if channels % heads:
            raise ConfigError(f"heads ({heads}) must divide channels ({channels})")
        self.heads = heads
        self.windows = windows
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(channels, channels)
        self.v = nn.Linear(channels, channels)
        self.proj = nn.Linear(channels, channels)
        self.flow_proj = nn.Linear(2, channels) if flow_injection else None

    def forward(self, x, flow=None, return_attn=False):
        t, c, h, w = x.shape
        tokens = partition_windows(x, self.windows)
        nw, n = tokens.shape[1], tokens.shape[2]
        qk_in = tokens
        if self.flow_proj is not None and flow is not None:
            if flow.shape != (t, 2, h, w):
                raise ContractError("flow must be [T, 2, H, W] at this feature scale")
            qk_in = tokens + self.flow_proj(partition_windows(flow, self.windows))

        flat = lambda z: z.reshape(t * nw, n, c)  # noqa: E731
        out, attn = _attend(
            self.q(flat(qk_in)), self.k(flat(qk_in)), self.v(flat(tokens)), self.heads, return_attn
        )
        out = merge_windows(self.proj(out).reshape(t, nw, n, c), self.windows, h, w)
        return (out, attn) if return_attn else out


class TemporalWindowAttention(nn.Module):
    """Self-attention over each window's tokens gathered across all frames."""

    def __init__(self, channels, heads, windows):
        super().__init__()
        if channels % heads:
            raise ConfigError(f"heads ({heads}) must divide channels ({channels})")
        self.heads = heads
        self.windows = windows
        self.q = nn.Linear(channels, channels)
        self.k = nn.Linear(channels, channels)
        self.v = nn.Linear(channels, channels)
        self.proj = nn.Linear(channels, channels)

    def forward(self, x, return_attn=False):
        t, c, h, w = x.shape
        tokens = partition_windows(x, self.windows)
        nw, n = tokens.shape[1], tokens.shape[2]
        group = tokens.permute(1, 0, 2, 3).reshape(nw, t * n, c)
        out, attn = _attend(self.q(group), self.k(group), self.v(group), self.heads, return_attn)
        out = self.proj(out).reshape(nw, t, n, c).permute(1, 0, 2, 3)
        out = merge_windows(out, self.windows, h, w)
        return (out, attn) if return_attn else out


class FeatureRefine(nn.Module):
    """Three (conv3x3 + LeakyReLU 0.1) stages injecting the color reference.

    The per-pixel histogram descriptor is lifted to the feature width with
    a 1x1 convolution and concatenated to every frame's features before the
    first stage. Built without ``hist_channels``, the stack runs on the
    features alone (the ablated variant).
    """

    def __init__(self, channels, hist_channels=None):
        super().__init__()
        self.hist_proj = nn.Conv2d(hist_channels, channels, 1) if hist_channels else None
        first_in = 2 * channels if hist_channels else channels
        self.convs = nn.ModuleList(
            [
                nn.Conv2d(first_in, channels, 3, padding=1),
                nn.Conv2d(channels, channels, 3, padding=1),
                nn.Conv2d(channels, channels, 3, padding=1),
            ]
        )

    def forward(self, x, hist=None):
        if self.hist_proj is not None:
            if hist is None:
                raise ContractError("this refinement block requires histogram descriptors")
            if hist.dim() == 3:
                hist = hist.unsqueeze(0)
            if hist.shape[-2:] != x.shape[-2:]:
                raise ContractError(
                    f"histogram scale {tuple(hist.shape[-2:])} does not match "
                    f"feature scale {tuple(x.shape[-2:])}"
                )
            ref = self.hist_proj(hist.to(x.dtype))
            x = torch.cat([x, ref.expand(x.shape[0], -1, -1, -1)], dim=1)
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.1)
        return x


class FlowHistFusion(nn.Module):
    """The joint fusion block hosted at skip connections and the bottleneck.

    m1 = P1(cat(x, TA(LN(x)), SA(LN(x), flow)))
    m2 = P2(cat(m1, FFN(LN(Pm(cat(m1, refine(m1, hist)))))))

    Ablation flags drop the corresponding branch and shrink the P1 width;
    with both attentions off the block degenerates to projections of x.
    """

    def __init__(
        self,
        channels,
        hist_channels,
        s_spatial=4,
        s_temporal=2,
        heads=4,
        use_histogram=True,
        use_flow=True,
        use_spatial=True,
        use_temporal=True,
    ):
        super().__init__()
        self.norm1 = ChannelLayerNorm(channels)
        self.temporal = (
            TemporalWindowAttention(channels, heads, s_temporal) if use_temporal else None
        )
        self.spatial = (
            SpatialWindowAttention(channels, heads, s_spatial, flow_injection=use_flow)
            if use_spatial
            else None
        )
        n_branches = 1 + (self.temporal is not None) + (self.spatial is not None)
        self.p1 = nn.Conv2d(n_branches * channels, channels, 1)
        self.refine = FeatureRefine(channels, hist_channels if use_histogram else None)
        self.pm = nn.Conv2d(2 * channels, channels, 1)
        self.norm2 = ChannelLayerNorm(channels)
        self.ffn = nn.Sequential(
            nn.Conv2d(channels, 2 * channels, 1),
            nn.GELU(),
            nn.Conv2d(2 * channels, channels, 1),
        )
        self.p2 = nn.Conv2d(2 * channels, channels, 1)

    def forward(self, x, flow=None, hist=None):
        xn = self.norm1(x)
        branches = [x]
        if self.temporal is not None:
            branches.append(self.temporal(xn))
        if self.spatial is not None:
            branches.append(self.spatial(xn, flow))
        m1 = self.p1(torch.cat(branches, dim=1))
        fr = self.refine(m1, hist)
        z = self.norm2(self.pm(torch.cat([m1, fr], dim=1)))
        return self.p2(torch.cat([m1, self.ffn(z)], dim=1))

"""The U-shaped colorization network and the clip-level inference driver.

Per-frame shared-weight encoder (stride-2 convs, channels C -> 2C -> 4C ->
8C), four fusion blocks (three skip connections at 1/2, 1/4, 1/8 plus the
bottleneck at 1/8), a decoder of (nearest-upsample + conv) stages followed
by dynamic-region blocks, and a tanh head predicting the two chroma
channels. Temporal mixing happens only inside the fusion blocks; the L
channel passes through untouched.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .drconv import DRBlock
from .errors import ConfigError, ContractError, UsageError
from .fusion import FlowHistFusion
from .histogram import hist_pyramid, slice_hist
from .motion import estimate_flow, prepare_clip_inputs, resample_flow

# scales hosting fusion blocks: three skips + the bottleneck
SKIP_LEVELS = (1, 2, 3)
BOTTLENECK_LEVEL = 3


@dataclass
class NetworkConfig:
    channels: int = 32
    tau: int = 2
    height: int = 64
    width: int = 64
    s_spatial: int = 4
    s_temporal: int = 2
    heads: int = 4
    hist_cells: int = 8
    hist_l_bins: int = 8
    hist_a_bins: int = 16
    hist_b_bins: int = 16
    regions: int = 4
    kernel: int = 3
    theta: float = 50.0
    use_histogram: bool = True
    use_flow: bool = True
    use_spatial_attn: bool = True
    use_temporal_attn: bool = True
    connection: str = "multiply"

    @property
    def frames(self):
        return 2 * self.tau + 1

    @property
    def hist_channels(self):
        return self.hist_a_bins * self.hist_b_bins

    @property
    def in_channels(self):
        return 3 if self.connection == "plain" else 4

    def validate(self):
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        if self.s_spatial < 1 or self.s_temporal < 1:
            raise ConfigError("window counts must be >= 1")
        if self.s_temporal >= self.s_spatial:
            raise ConfigError("temporal window count must be smaller than spatial")
        div = 8 * self.s_spatial
        if self.height % div or self.width % div:
            raise ConfigError(
                f"input size {self.height}x{self.width} must be divisible by {div}"
            )
        for mult in (1, 2, 4, 8):
            if (mult * self.channels) % self.heads:
                raise ConfigError("heads must divide the channel width at every scale")
        if self.connection not in ("plain", "concat", "multiply"):
            raise ConfigError(f"unknown connection mode {self.connection!r}")
        if min(self.hist_cells, self.hist_l_bins, self.hist_a_bins, self.hist_b_bins) < 1:
            raise ConfigError("histogram bin counts must be positive")
        return self


ABLATION_FLAGS = {
    "histogram": "use_histogram",
    "flow": "use_flow",
    "spatial-attn": "use_spatial_attn",
    "temporal-attn": "use_temporal_attn",
}


def ablate(config, flag):
    """Return a copy of ``config`` with one component switched off."""
    if flag not in ABLATION_FLAGS:
        raise ConfigError(
            f"unknown ablation flag {flag!r}; choose from {sorted(ABLATION_FLAGS)}"
        )
    return dataclasses.replace(config, **{ABLATION_FLAGS[flag]: False})


def _conv_act(cin, cout, stride=1):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1), nn.LeakyReLU(0.1)
    )


class ColorizationNet(nn.Module):
    def __init__(self, config):
        super().__init__()
        config.validate()
        self.config = config
        c = config.channels
        hist_ch = config.hist_channels
        fusion_kw = dict(
            s_spatial=config.s_spatial,
            s_temporal=config.s_temporal,
            heads=config.heads,
            use_histogram=config.use_histogram,
            use_flow=config.use_flow,
            use_spatial=config.use_spatial_attn,
            use_temporal=config.use_temporal_attn,
        )

        self.enc0 = _conv_act(config.in_channels, c)
        self.down1 = _conv_act(c, 2 * c, stride=2)
        self.down2 = _conv_act(2 * c, 4 * c, stride=2)
        self.down3 = _conv_act(4 * c, 8 * c, stride=2)

        self.bottleneck = FlowHistFusion(8 * c, hist_ch, **fusion_kw)
        self.skip3 = FlowHistFusion(8 * c, hist_ch, **fusion_kw)
        self.skip2 = FlowHistFusion(4 * c, hist_ch, **fusion_kw)
        self.skip1 = FlowHistFusion(2 * c, hist_ch, **fusion_kw)

        self.fuse8 = nn.Conv2d(16 * c, 8 * c, 1)
        self.block8 = DRBlock(8 * c, config.kernel, config.regions)
        self.up4 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), _conv_act(8 * c, 4 * c))
        self.fuse4 = nn.Conv2d(8 * c, 4 * c, 1)
        self.block4 = DRBlock(4 * c, config.kernel, config.regions)
        self.up2 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), _conv_act(4 * c, 2 * c))
        self.fuse2 = nn.Conv2d(4 * c, 2 * c, 1)
        self.block2 = DRBlock(2 * c, config.kernel, config.regions)
        self.up1 = nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"), _conv_act(2 * c, c))
        self.block1 = DRBlock(c, config.kernel, config.regions)
        self.head = nn.Conv2d(c, 2, 3, padding=1)
        # start close to the flat (zero-chroma) predictor, with symmetry
        # already broken: optimization then works on placing color rather
        # than on undoing large random chroma
        with torch.no_grad():
            self.head.weight.mul_(0.1)
            self.head.bias.zero_()

    def forward(self, assembled, hist_levels=None, flows=None):
        """Predict chroma for one clip.

        Args:
            assembled: [T, C_in, H, W] per-frame input stack.
            hist_levels: {level: [hist_channels, H/2^level, W/2^level]} torch
                tensors for levels 1..3, required when the histogram path is on.
            flows: [T, 2, H, W] flows-to-center at full resolution, required
                when flow injection is on.

        Returns:
            pred_ab [T, 2, H, W] in [-1, 1].
        """
        cfg = self.config
        if assembled.dim() != 4 or assembled.shape[1] != cfg.in_channels:
            raise ContractError(
                f"assembled input must be [T, {cfg.in_channels}, H, W], got {tuple(assembled.shape)}"
            )
        t, _, h, w = assembled.shape
        div = 8 * cfg.s_spatial
        if h % div or w % div:
            raise ContractError(f"input size {h}x{w} must be divisible by {div}")
        if cfg.use_histogram:
            if hist_levels is None:
                raise ContractError("this model requires histogram descriptors")
            missing = [lv for lv in SKIP_LEVELS if lv not in hist_levels]
            if missing:
                raise ContractError(f"histogram pyramid missing levels {missing}")
        if cfg.use_flow and cfg.use_spatial_attn and flows is None:
            raise ContractError("this model requires flows-to-center")

        def flow_at(level):
            if not (cfg.use_flow and cfg.use_spatial_attn) or flows is None:
                return None
            return resample_flow(flows, (h >> level, w >> level)).to(assembled.dtype)

        def hist_at(level):
            if not cfg.use_histogram:
                return None
            hist = hist_levels[level]
            if hist.shape[-2:] != (h >> level, w >> level):
                raise ContractError(
                    f"histogram level {level} has size {tuple(hist.shape[-2:])}, "
                    f"expected {(h >> level, w >> level)}"
                )
            return hist

        e0 = self.enc0(assembled)
        e1 = self.down1(e0)
        e2 = self.down2(e1)
        e3 = self.down3(e2)

        f3, h3 = flow_at(3), hist_at(3)
        x = self.bottleneck(e3, f3, h3)
        x = self.block8(self.fuse8(torch.cat([x, self.skip3(e3, f3, h3)], dim=1)))
        x = self.up4(x)
        x = self.block4(self.fuse4(torch.cat([x, self.skip2(e2, flow_at(2), hist_at(2))], dim=1)))
        x = self.up2(x)
        x = self.block2(self.fuse2(torch.cat([x, self.skip1(e1, flow_at(1), hist_at(1))], dim=1)))
        x = self.up1(x)
        x = self.block1(x)
        return torch.tanh(self.head(x))


def hist_levels_from_descriptors(descriptors, dtype=torch.float32):
    """Downscale full-resolution descriptors to the fusion hosting scales."""
    pyr = hist_pyramid(descriptors, max(SKIP_LEVELS))
    return {lv: torch.from_numpy(np.ascontiguousarray(pyr[lv])).to(dtype) for lv in SKIP_LEVELS}


def hist_levels_for_clip(grid, center_gray, dtype=torch.float32):
    """Slice a reference grid with the clip's center frame and build the pyramid."""
    return hist_levels_from_descriptors(slice_hist(grid, center_gray), dtype)


def inference_windows(n_frames, span):
    """Non-overlapping inference windows with a repeat-last-frame padded tail.

    Returns a list of (frame_indices, n_valid): indices always have length
    ``span``; only the first ``n_valid`` outputs are kept.
    """
    if n_frames < 1:
        raise ContractError("need at least one frame")
    windows = []
    for start in range(0, n_frames, span):
        idxs = [min(i, n_frames - 1) for i in range(start, start + span)]
        windows.append((idxs, min(span, n_frames - start)))
    return windows


def colorize_video(gray, grid, model, flow_fn=None, theta=None):
    """Colorize a grayscale frame sequence with a reference histogram grid.

    Args:
        gray: [N, 1, H, W] tensor (or numpy) of normalized L frames.
        grid: HistGrid color reference (ignored for hist-less models).
        model: a ColorizationNet with loaded weights.
        flow_fn: optional (src_idx, dst_idx) -> uv [2, H, W] with *global*
            frame indices; defaults to the internal block-matching estimator.
        theta: sharpness decay override (defaults to the model config).

    Returns:
        pred_ab [N, 2, H, W] in [-1, 1]; the caller composites with the
        input L, which therefore passes through bit-exactly.
    """
    cfg = model.config
    if isinstance(gray, np.ndarray):
        gray = torch.from_numpy(gray).float()
    if gray.dim() != 4 or gray.shape[1] != 1:
        raise ContractError("gray must be [N, 1, H, W]")
    if cfg.use_histogram and grid is None:
        raise UsageError("a histogram reference (image or grid) is required")
    n = gray.shape[0]
    span = cfg.frames
    theta = cfg.theta if theta is None else theta

    model.eval()
    outputs = torch.empty(n, 2, *gray.shape[-2:])
    with torch.no_grad():
        for idxs, n_valid in inference_windows(n, span):
            win = gray[idxs]

            def lookup(j, i, _idxs=idxs):
                gj, gi = _idxs[j], _idxs[i]
                if gj == gi:
                    return np.zeros((2, *win.shape[-2:]), dtype=np.float32)
                if flow_fn is not None:
                    return flow_fn(gj, gi)
                return estimate_flow(win[j], win[i], src_index=gj, dst_index=gi).uv

            assembled, flows = prepare_clip_inputs(
                win, lookup, theta=theta, connection=cfg.connection
            )
            hist_levels = None
            if cfg.use_histogram:
                hist_levels = hist_levels_for_clip(grid, win[span // 2, 0].numpy())
            pred = model(assembled, hist_levels, flows)
            start = idxs[0]
            outputs[start : start + n_valid] = pred[:n_valid]
    return outputs

"""chromaflow: flow- and histogram-guided video colorization toolkit."""

from ._kernels import BACKEND as KERNEL_BACKEND
from ._kernels import HAVE_NATIVE
from .colorspace import lab_to_rgb, rgb_to_lab
from .config import RunConfig
from .data import ClipManifest, FrameClip, load_clips, read_manifest
from .histogram import HistGrid, build_hist_grid, hist_pyramid, slice_hist
from .losses import LossConfig, charbonnier_loss, smooth_loss, total_loss, warp_loss
from .metrics import MetricsReport, l2_error, psnr, ssim, warp_error
from .motion import (
    FlowField,
    assemble_input,
    estimate_flow,
    load_flo,
    save_flo,
    temporal_sharpness,
    visibility_mask,
    warp_backward,
)
from .network import ColorizationNet, NetworkConfig, ablate, colorize_video
from .synthetic import Shape, SyntheticScene, generate_synthetic, parse_scene, render_scene
from .train import train

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClipManifest",
    "ColorizationNet",
    "FlowField",
    "FrameClip",
    "HAVE_NATIVE",
    "HistGrid",
    "KERNEL_BACKEND",
    "LossConfig",
    "MetricsReport",
    "NetworkConfig",
    "RunConfig",
    "Shape",
    "SyntheticScene",
    "ablate",
    "assemble_input",
    "build_hist_grid",
    "charbonnier_loss",
    "colorize_video",
    "estimate_flow",
    "generate_synthetic",
    "hist_pyramid",
    "l2_error",
    "lab_to_rgb",
    "load_clips",
    "load_flo",
    "parse_scene",
    "psnr",
    "read_manifest",
    "render_scene",
    "rgb_to_lab",
    "save_flo",
    "slice_hist",
    "smooth_loss",
    "ssim",
    "temporal_sharpness",
    "total_loss",
    "train",
    "visibility_mask",
    "warp_backward",
    "warp_error",
]

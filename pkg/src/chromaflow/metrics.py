"""Evaluation metrics and the structured metrics report.

Conventions (fixed so relative comparisons are meaningful):
  * psnr, ssim, l2_error operate on [3, H, W] RGB frames on the 0..255
    scale; psnr of identical frames is capped at 100 dB.
  * ssim is single-scale: 11x11 Gaussian window (sigma 1.5), K1=0.01,
    K2=0.03, dynamic range 255, valid-mode windows, channels averaged.
  * warp_error operates on [T, 3, H, W] sequences in [0, 1]: mean over
    consecutive pairs of the mean masked squared RGB difference against
    the flow-warped successor, with a binary non-occlusion mask from
    forward-backward flow consistency.
  * l2_error is the mean per-pixel Euclidean norm of the RGB difference.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from scipy.signal import convolve2d

from .errors import ContractError, FormatError
from .motion import warp_backward

PSNR_CAP = 100.0

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ContractError(f"frame shapes disagree: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b):
    """Peak signal-to-noise ratio in dB over all channels (0..255 scale)."""
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return PSNR_CAP
    return min(20.0 * np.log10(255.0 / np.sqrt(mse)), PSNR_CAP)


def _gaussian_window():
    half = _SSIM_WINDOW // 2
    g = np.exp(-np.arange(-half, half + 1) ** 2 / (2.0 * _SSIM_SIGMA**2))
    g /= g.sum()
    return np.outer(g, g)


def ssim(a, b):
    """Mean structural similarity of two [3, H, W] (or [H, W]) frames."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.shape[-2] < _SSIM_WINDOW or a.shape[-1] < _SSIM_WINDOW:
        raise ContractError(f"frames smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} ssim window")
    win = _gaussian_window()
    c1 = (_SSIM_K1 * 255.0) ** 2
    c2 = (_SSIM_K2 * 255.0) ** 2

    vals = []
    for x, y in zip(a, b):
        mu_x = convolve2d(x, win, mode="valid")
        mu_y = convolve2d(y, win, mode="valid")
        sxx = convolve2d(x * x, win, mode="valid") - mu_x**2
        syy = convolve2d(y * y, win, mode="valid") - mu_y**2
        sxy = convolve2d(x * y, win, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def l2_error(a, b):
    """Mean per-pixel Euclidean norm of the RGB difference (0..255 scale)."""
    a, b = _pair(a, b)
    return float(np.mean(np.sqrt(np.sum((a - b) ** 2, axis=0))))


def occlusion_valid_mask(flow_fwd, flow_bwd):
    """Binary non-occlusion mask from forward-backward flow consistency.

    ``flow_fwd`` is the warping flow f_{t+1->t} on frame t's grid,
    ``flow_bwd`` the reverse flow f_{t->t+1} on frame t+1's grid. A pixel
    is occluded when ||f_fwd(p) + f_bwd(p + f_fwd(p))||^2 exceeds
    0.01 * (||f_fwd(p)||^2 + ||f_bwd(p + f_fwd(p))||^2) + 0.5.
    """
    fwd = torch.as_tensor(np.asarray(flow_fwd, dtype=np.float32))
    bwd = torch.as_tensor(np.asarray(flow_bwd, dtype=np.float32))
    if fwd.shape != bwd.shape or fwd.dim() != 3 or fwd.shape[0] != 2:
        raise ContractError("flows must both be [2, H, W]")
    bwd_at = warp_backward(bwd, fwd).numpy()
    fwd = fwd.numpy()
    sq = ((fwd + bwd_at) ** 2).sum(axis=0)
    bound = 0.01 * ((fwd**2).sum(axis=0) + (bwd_at**2).sum(axis=0)) + 0.5
    return sq <= bound


def warp_error(frames, flows_fwd, flows_bwd):
    """Temporal consistency error of a [T, 3, H, W] sequence in [0, 1].

    Args:
        frames: output frames, values in [0, 1].
        flows_fwd: per consecutive pair, f_{t+1->t} between the *ground
            truth* frames (list of [2, H, W] or FlowField).
        flows_bwd: matching reverse flows f_{t->t+1}.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ContractError("frames must be [T, 3, H, W]")
    t = frames.shape[0]
    if t < 2:
        raise ContractError("warp error needs at least two frames")
    if len(flows_fwd) != t - 1 or len(flows_bwd) != t - 1:
        raise ContractError(f"need {t - 1} flow pairs, got {len(flows_fwd)}/{len(flows_bwd)}")

    def _uv(f):
        return np.asarray(f.uv if hasattr(f, "uv") else f, dtype=np.float32)

    pair_errors = []
    for i in range(t - 1):
        fwd = _uv(flows_fwd[i])
        valid = occlusion_valid_mask(fwd, _uv(flows_bwd[i]))
        warped = warp_backward(torch.from_numpy(frames[i + 1]), torch.from_numpy(fwd)).numpy()
        err = ((frames[i] - warped) ** 2).sum(axis=0)
        pair_errors.append(float(np.mean(valid * err)))
    return float(np.mean(pair_errors))


# ---------------------------------------------------------------------------
# report


@dataclass
class VideoMetrics:
    name: str
    psnr: list
    ssim: list
    l2_error: list
    warp_error: float

    def means(self):
        return {
            "psnr": float(np.mean(self.psnr)),
            "ssim": float(np.mean(self.ssim)),
            "l2_error": float(np.mean(self.l2_error)),
            "warp_error": self.warp_error,
        }


@dataclass
class MetricsReport:
    """Per-video records plus an aggregate block; serializes to JSON."""

    videos: list
    metadata: dict = field(default_factory=dict)

    def aggregate(self):
        if not self.videos:
            return {}
        keys = ("psnr", "ssim", "l2_error", "warp_error")
        return {k: float(np.mean([v.means()[k] for v in self.videos])) for k in keys}

    def to_json(self):
        doc = {
            "metadata": self.metadata,
            "videos": [dict(asdict(v), means=v.means()) for v in self.videos],
            "aggregate": self.aggregate(),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            videos = [
                VideoMetrics(
                    name=v["name"],
                    psnr=v["psnr"],
                    ssim=v["ssim"],
                    l2_error=v["l2_error"],
                    warp_error=v["warp_error"],
                )
                for v in doc["videos"]
            ]
            return cls(videos=videos, metadata=doc.get("metadata", {}))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"malformed metrics report: {exc}") from exc

    def write(self, path):
        with open(path, "w") as f:
            f.write(self.to_json() + "\n")

    @classmethod
    def read(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())


def evaluate_video(name, pred_frames, gt_frames, flows_fwd, flows_bwd):
    """Compute all four metrics for one video.

    ``pred_frames``/``gt_frames`` are [T, 3, H, W] in [0, 1]; pixel metrics
    are computed on the 0..255 scale, warp error on [0, 1] as documented.
    """
    pred = np.asarray(pred_frames, dtype=np.float64)
    gt = np.asarray(gt_frames, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractError("prediction and ground truth shapes disagree")
    return VideoMetrics(
        name=name,
        psnr=[psnr(p * 255.0, g * 255.0) for p, g in zip(pred, gt)],
        ssim=[ssim(p * 255.0, g * 255.0) for p, g in zip(pred, gt)],
        l2_error=[l2_error(p * 255.0, g * 255.0) for p, g in zip(pred, gt)],
        warp_error=warp_error(pred, flows_fwd, flows_bwd),
    )


def plot_video_metrics(record, path):
    """Optional per-metric line plot for one video (requires matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(12, 3))
    for ax, (key, series) in zip(
        axes, (("psnr", record.psnr), ("ssim", record.ssim), ("l2_error", record.l2_error))
    ):
        ax.plot(series)
        ax.set_title(f"{record.name}: {key}")
        ax.set_xlabel("frame")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

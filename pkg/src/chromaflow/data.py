"""Frame ingestion: PNG sequences, manifests, clip windowing.

A clip is a window of 2*tau+1 consecutive frames. The grayscale input is
the L channel of the (ground-truth) Lab frame; color targets are the ab
channels. Manifests are plain text: ``key=value`` headers plus one video
directory per line, relative to the manifest location.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from .colorspace import normalize_lab, rgb_to_lab
from .errors import ConfigError, ContractError, DataError

_EPS = 1e-6


@dataclass
class FrameClip:
    """A window of 2*tau+1 aligned frames in normalized Lab space.

    gray: [T, 1, H, W] float32 in [0, 1] (L/100).
    target_ab: [T, 2, H, W] float32 in [-1, 1] (ab/128), or None at inference.
    """

    gray: torch.Tensor
    target_ab: torch.Tensor | None = None
    center_index: int = -1
    source_ids: list = field(default_factory=list)

    def __post_init__(self):
        if not isinstance(self.gray, torch.Tensor):
            self.gray = torch.from_numpy(np.ascontiguousarray(self.gray)).float()
        t = self.gray.shape[0]
        if self.gray.dim() != 4 or self.gray.shape[1] != 1:
            raise ContractError(f"gray must be [T, 1, H, W], got {tuple(self.gray.shape)}")
        if t < 3 or t % 2 == 0:
            raise ContractError(f"clip length must be odd and >= 3, got {t}")
        if self.gray.min() < -_EPS or self.gray.max() > 1 + _EPS:
            raise ContractError("gray values must lie in [0, 1]")
        if self.center_index < 0:
            self.center_index = t // 2
        if self.center_index != t // 2:
            raise ContractError("center_index must be tau = T // 2")
        if self.target_ab is not None:
            if not isinstance(self.target_ab, torch.Tensor):
                self.target_ab = torch.from_numpy(np.ascontiguousarray(self.target_ab)).float()
            if self.target_ab.shape != (t, 2, *self.gray.shape[-2:]):
                raise ContractError("target_ab must be [T, 2, H, W] matching gray")
            if self.target_ab.min() < -1 - _EPS or self.target_ab.max() > 1 + _EPS:
                raise ContractError("target_ab values must lie in [-1, 1]")
        if not self.source_ids:
            self.source_ids = list(range(t))

    @property
    def tau(self):
        return self.gray.shape[0] // 2

    @property
    def size(self):
        return tuple(self.gray.shape[-2:])


@dataclass
class ClipManifest:
    root: Path
    videos: list  # list of (name, [frame paths])
    tau: int = 2
    stride: int = 1
    resize: tuple | None = None  # (H, W)

    def __post_init__(self):
        self.root = Path(self.root)
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        if self.tau < 1:
            raise ConfigError("tau must be >= 1")
        for name, frames in self.videos:
            for p in frames:
                if not Path(p).exists():
                    raise DataError(f"manifest lists missing frame: {p}")


def list_video_frames(directory):
    directory = Path(directory)
    frames = sorted(directory.glob("*.png"))
    if not frames:
        raise DataError(f"no PNG frames found in {directory}")
    return frames


def read_manifest(path, tau=None, stride=None, resize=None):
    """Parse a manifest file: key=value headers + one video dir per line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    keys = {}
    dirs = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" in line:
            k, v = line.split("=", 1)
            k = k.strip()
            if k not in ("tau", "stride", "height", "width"):
                raise ConfigError(f"{path}:{lineno}: unknown manifest key {k!r}")
            keys[k] = v.strip()
        else:
            dirs.append(line)
    root = path.parent
    m_tau = tau if tau is not None else int(keys.get("tau", 2))
    m_stride = stride if stride is not None else int(keys.get("stride", 1))
    if resize is None and "height" in keys and "width" in keys:
        resize = (int(keys["height"]), int(keys["width"]))
    videos = [(d, list_video_frames(root / d)) for d in dirs]
    return ClipManifest(root=root, videos=videos, tau=m_tau, stride=m_stride, resize=resize)


def read_frame_rgb(path):
    """Read an 8-bit PNG as float RGB [3, H, W] in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise DataError(f"unreadable frame: {path}")
    rgb = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    return rgb.astype(np.float64).transpose(2, 0, 1) / 255.0


def write_frame_rgb(path, rgb_u8):
    """Write an uint8 RGB [H, W, 3] frame as PNG."""
    ok = cv2.imwrite(str(path), cv2.cvtColor(rgb_u8, cv2.COLOR_RGB2BGR))
    if not ok:
        raise DataError(f"failed to write frame: {path}")


def resize_rgb(rgb, size):
    """Bilinear resize of [3, H, W]; area averaging when downscaling."""
    h, w = rgb.shape[1:]
    th, tw = size
    if (th, tw) == (h, w):
        return rgb
    interp = cv2.INTER_AREA if th <= h and tw <= w else cv2.INTER_LINEAR
    out = cv2.resize(rgb.transpose(1, 2, 0), (tw, th), interpolation=interp)
    return np.clip(out.transpose(2, 0, 1), 0.0, 1.0)


def window_starts(n_frames, tau, stride):
    """Start indices of the sliding clip windows; empty when the video is short."""
    span = 2 * tau + 1
    if n_frames < span:
        return []
    return list(range(0, n_frames - span + 1, stride))


def frames_to_clip_arrays(rgb_frames):
    """Convert a list of RGB [3,H,W] frames to (gray [T,1,H,W], ab [T,2,H,W])."""
    grays, abs_ = [], []
    for rgb in rgb_frames:
        g, ab = normalize_lab(rgb_to_lab(rgb))
        grays.append(g)
        abs_.append(ab)
    return np.stack(grays).astype(np.float32), np.stack(abs_).astype(np.float32)


def load_clips(manifest):
    """Yield FrameClips from a ClipManifest.

    Videos shorter than one window are skipped with a warning; unreadable
    frames raise DataError naming the file.
    """
    span = 2 * manifest.tau + 1
    for name, frame_paths in manifest.videos:
        starts = window_starts(len(frame_paths), manifest.tau, manifest.stride)
        if not starts:
            warnings.warn(
                f"video {name!r} has {len(frame_paths)} frames; "
                f"shorter than one {span}-frame window, skipped",
                stacklevel=2,
            )
            continue
        rgbs = [read_frame_rgb(p) for p in frame_paths]
        if manifest.resize is not None:
            rgbs = [resize_rgb(rgb, manifest.resize) for rgb in rgbs]
        hw = rgbs[0].shape[1:]
        for rgb in rgbs:
            if rgb.shape[1:] != hw:
                raise DataError(f"video {name!r}: frames disagree in size (use a resize target)")
        gray, ab = frames_to_clip_arrays(rgbs)
        for s in starts:
            yield FrameClip(
                gray=torch.from_numpy(gray[s : s + span]),
                target_ab=torch.from_numpy(ab[s : s + span]),
                source_ids=[f"{name}/{p.name}" for p in frame_paths[s : s + span]],
            )

"""Bilateral-grid color reference built from the clip's center frame.

Pixels are splatted into a (spatial cell, luminance bin) grid of
ab-histograms; slicing reads a per-pixel color-distribution descriptor
back out at any resolution, and a fixed 2x2 averaging pyramid aligns the
descriptors with the network's feature scales. The whole branch is plain
numpy and therefore carries no gradient into the color targets.
"""

import struct
from dataclasses import dataclass

import numpy as np
import torch

from . import _kernels
from .errors import ConfigError, ContractError, FormatError


def _as_numpy(x):
    if isinstance(x, torch.Tensor):
        x = x.detach().cpu().numpy()
    return np.asarray(x, dtype=np.float64)


@dataclass
class HistGrid:
    """Normalized ab-histograms per (spatial cell, luminance bin).

    h[gy, gx, l, :] is a distribution over a_bins*b_bins chroma bins; empty
    entries hold the uniform distribution.
    """

    h: np.ndarray  # [G, G, B_L, B_ab] float64
    cells: int
    l_bins: int
    a_bins: int
    b_bins: int

    @property
    def ab_bins(self):
        return self.a_bins * self.b_bins

    @property
    def l_edges(self):
        return np.linspace(0.0, 1.0, self.l_bins + 1)

    @property
    def a_edges(self):
        return np.linspace(-1.0, 1.0, self.a_bins + 1)

    @property
    def b_edges(self):
        return np.linspace(-1.0, 1.0, self.b_bins + 1)

    def ab_bin_index(self, a, b):
        ia = min(max(int((a + 1.0) * 0.5 * self.a_bins), 0), self.a_bins - 1)
        ib = min(max(int((b + 1.0) * 0.5 * self.b_bins), 0), self.b_bins - 1)
        return ia * self.b_bins + ib


def build_hist_grid(gray, ab, cells=8, l_bins=8, a_bins=16, b_bins=16, backend=None):
    """Splat a frame into a HistGrid.

    Each pixel deposits unit mass, bilinearly spread over the 2x2 nearest
    spatial cells and the 2 nearest luminance bins; the chroma coordinate
    picks a single nearest ab bin. Per-(cell, L-bin) histograms are then
    normalized to distributions, with a uniform fallback for empty entries.

    Args:
        gray: [1, H, W] or [H, W] luminance in [0, 1].
        ab: [2, H, W] chroma in [-1, 1].
    """
    if min(cells, l_bins, a_bins, b_bins) < 1:
        raise ConfigError("histogram bin counts must be positive")
    gray = _as_numpy(gray)
    ab = _as_numpy(ab)
    if gray.ndim == 3:
        gray = gray[0]
    if gray.ndim != 2 or ab.shape != (2, *gray.shape):
        raise ContractError("expected gray [1,H,W]/[H,W] and ab [2,H,W] of matching size")

    impl = _kernels.get_impl(backend)
    raw = impl.splat_hist(
        np.ascontiguousarray(gray),
        np.ascontiguousarray(ab[0]),
        np.ascontiguousarray(ab[1]),
        cells,
        l_bins,
        a_bins,
        b_bins,
    )
    mass = raw.sum(axis=-1, keepdims=True)
    ab_bins = a_bins * b_bins
    h = np.where(mass > 0.0, raw / np.where(mass > 0.0, mass, 1.0), 1.0 / ab_bins)
    return HistGrid(h=h, cells=cells, l_bins=l_bins, a_bins=a_bins, b_bins=b_bins)


def splat_raw(gray, ab, cells=8, l_bins=8, a_bins=16, b_bins=16, backend=None):
    """Unnormalized splat (total mass equals the pixel count); test hook."""
    gray = _as_numpy(gray)
    if gray.ndim == 3:
        gray = gray[0]
    ab = _as_numpy(ab)
    impl = _kernels.get_impl(backend)
    return impl.splat_hist(
        np.ascontiguousarray(gray),
        np.ascontiguousarray(ab[0]),
        np.ascontiguousarray(ab[1]),
        cells,
        l_bins,
        a_bins,
        b_bins,
    )


def slice_hist(grid, gray):
    """Read per-pixel descriptors from a HistGrid at (position, luminance).

    Spatially bilinear and luminance-linear interpolation of the stored
    distributions; every descriptor is a convex combination and sums to 1.
    Returns [ab_bins, H, W] float64.
    """
    gray = _as_numpy(gray)
    if gray.ndim == 3:
        gray = gray[0]
    if gray.ndim != 2:
        raise ContractError(f"expected a [H, W] or [1, H, W] gray frame, got {gray.shape}")
    if not np.isfinite(gray).all():
        raise ContractError("gray values must be finite")

    h, w = gray.shape
    g = grid.cells
    ys, xs = np.mgrid[0:h, 0:w]
    cx = (xs + 0.5) / w * g - 0.5
    cy = (ys + 0.5) / h * g - 0.5
    lz = gray * grid.l_bins - 0.5

    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    k0 = np.floor(lz).astype(np.int64)
    wx1 = cx - x0
    wy1 = cy - y0
    wl1 = lz - k0

    out = np.zeros((h, w, grid.ab_bins))
    for dx, wx in ((0, 1.0 - wx1), (1, wx1)):
        gx = np.clip(x0 + dx, 0, g - 1)
        for dy, wy in ((0, 1.0 - wy1), (1, wy1)):
            gy = np.clip(y0 + dy, 0, g - 1)
            for dk, wl in ((0, 1.0 - wl1), (1, wl1)):
                gk = np.clip(k0 + dk, 0, grid.l_bins - 1)
                out += (wx * wy * wl)[:, :, None] * grid.h[gy, gx, gk]
    return out.transpose(2, 0, 1)


def hist_pyramid(feature, levels):
    """Downscale a descriptor map by repeated fixed-weight 2x2 convolutions.

    Each level halves the resolution with a stride-2 2x2 convolution whose
    taps are all 1/4 and which has no bias (a shrunk-weight average), so
    per-pixel descriptor normalization is preserved. Returns
    [level0, ..., level_k] including the input.
    """
    feature = _as_numpy(feature)
    if feature.ndim != 3:
        raise ContractError(f"expected [C, H, W], got {feature.shape}")
    c, h, w = feature.shape
    if levels < 0 or h % (1 << levels) or w % (1 << levels):
        raise ConfigError(f"spatial size {h}x{w} is not divisible by 2^{levels}")
    out = [feature]
    cur = feature
    for _ in range(levels):
        ch, cw = cur.shape[1] // 2, cur.shape[2] // 2
        cur = cur.reshape(c, ch, 2, cw, 2).mean(axis=(2, 4))
        out.append(cur)
    return out


def uniform_descriptors(ab_bins, h, w):
    """The no-information reference: every pixel gets the uniform distribution."""
    return np.full((ab_bins, h, w), 1.0 / ab_bins)


# ---------------------------------------------------------------------------
# serialization (.hg): int32 G, B_L, B_a, B_b then float32 values row-major


def save_grid(grid, path):
    with open(path, "wb") as f:
        f.write(struct.pack("<iiii", grid.cells, grid.l_bins, grid.a_bins, grid.b_bins))
        f.write(np.ascontiguousarray(grid.h, dtype="<f4").tobytes())


def load_grid(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated histogram grid header")
    g, bl, ba, bb = struct.unpack_from("<iiii", raw, 0)
    if min(g, bl, ba, bb) < 1:
        raise FormatError(f"{path}: invalid grid dimensions")
    count = g * g * bl * ba * bb
    if len(raw) != 16 + 4 * count:
        raise FormatError(f"{path}: expected {16 + 4 * count} bytes, found {len(raw)}")
    h = np.frombuffer(raw, dtype="<f4", offset=16).astype(np.float64)
    return HistGrid(h=h.reshape(g, g, bl, ba * bb), cells=g, l_bins=bl, a_bins=ba, b_bins=bb)

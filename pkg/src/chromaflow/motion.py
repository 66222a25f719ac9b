"""Optical flow: estimation, warping, .flo interchange, and the motion priors.

Flow convention used throughout the package: a field written f_{a->b} warps
frame ``a`` onto frame ``b``'s pixel grid. Its values live on frame ``b``
(the target grid) and point into frame ``a`` (the sampled source), so

    warp_backward(frame_a, f_{a->b})(p) == frame_a(p + f(p)) ~= frame_b(p).

``FlowField.src_index`` is the sampled frame ``a``, ``dst_index`` the home
grid ``b``.
"""

import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from . import _kernels
from .errors import ContractError, FormatError

FLO_MAGIC = np.float32(202021.25)


@dataclass
class FlowField:
    """Dense displacement field [2, H, W]: uv[0] = x-shift, uv[1] = y-shift."""

    uv: np.ndarray
    src_index: int = -1
    dst_index: int = -1

    def __post_init__(self):
        self.uv = np.asarray(self.uv, dtype=np.float32)
        if self.uv.ndim != 2 + 1 or self.uv.shape[0] != 2:
            raise ContractError(f"flow must be [2, H, W], got {self.uv.shape}")
        if not np.isfinite(self.uv).all():
            raise ContractError("flow values must be finite")

    def in_bounds(self):
        """True when every displacement stays below the frame extent.

        Interchange files may carry larger values; sampling clamps to the
        border either way, so this is a diagnostic rather than a hard
        construction check.
        """
        h, w = self.uv.shape[1:]
        return bool(
            np.abs(self.uv[0]).max(initial=0.0) < w and np.abs(self.uv[1]).max(initial=0.0) < h
        )

    @property
    def shape(self):
        return self.uv.shape[1:]

    def to_tensor(self, dtype=torch.float32):
        return torch.from_numpy(self.uv).to(dtype)


def _as_flow_tensor(flow):
    if isinstance(flow, FlowField):
        return flow.to_tensor()
    if isinstance(flow, np.ndarray):
        return torch.from_numpy(np.ascontiguousarray(flow, dtype=np.float32))
    return flow


def warp_backward(image, flow):
    """Backward-warp ``image`` by ``flow``: out(p) = image(p + flow(p)).

    Bilinear sampling with border replication outside the frame. Accepts
    [C, H, W] with flow [2, H, W], or batched [N, C, H, W] with flow
    [N, 2, H, W]. Integer-valued flows reproduce plain (clamped) integer
    indexing bit-exactly.
    """
    flow = _as_flow_tensor(flow)
    single = image.dim() == 3
    if single:
        image = image.unsqueeze(0)
        flow = flow.unsqueeze(0)
    if image.dim() != 4 or flow.dim() != 4 or flow.shape[1] != 2:
        raise ContractError("warp_backward expects [C,H,W]+[2,H,W] or batched variants")
    if image.shape[0] != flow.shape[0] or image.shape[-2:] != flow.shape[-2:]:
        raise ContractError(
            f"image {tuple(image.shape)} and flow {tuple(flow.shape)} shapes disagree"
        )

    n, c, h, w = image.shape
    flow = flow.to(image.dtype)
    gy, gx = torch.meshgrid(
        torch.arange(h, dtype=image.dtype),
        torch.arange(w, dtype=image.dtype),
        indexing="ij",
    )
    xs = gx.unsqueeze(0) + flow[:, 0]
    ys = gy.unsqueeze(0) + flow[:, 1]

    x0 = torch.floor(xs)
    y0 = torch.floor(ys)
    wx = (xs - x0).unsqueeze(1)
    wy = (ys - y0).unsqueeze(1)
    x0 = x0.long()
    y0 = y0.long()
    x0c = x0.clamp(0, w - 1)
    x1c = (x0 + 1).clamp(0, w - 1)
    y0c = y0.clamp(0, h - 1)
    y1c = (y0 + 1).clamp(0, h - 1)

    flat = image.reshape(n, c, h * w)

    def tap(yy, xx):
        idx = (yy * w + xx).reshape(n, 1, h * w).expand(n, c, h * w)
        return flat.gather(2, idx).reshape(n, c, h, w)

    out = (
        (1 - wy) * (1 - wx) * tap(y0c, x0c)
        + (1 - wy) * wx * tap(y0c, x1c)
        + wy * (1 - wx) * tap(y1c, x0c)
        + wy * wx * tap(y1c, x1c)
    )
    return out.squeeze(0) if single else out


def resample_flow(flow, size):
    """Bilinearly resize a flow tensor to ``size`` and rescale displacements.

    Downsampling by a factor k divides the displacement values by k (they
    are measured in pixels of the new grid).
    """
    flow = _as_flow_tensor(flow)
    single = flow.dim() == 3
    if single:
        flow = flow.unsqueeze(0)
    h, w = flow.shape[-2:]
    h2, w2 = size
    if (h2, w2) == (h, w):
        out = flow
    else:
        out = torch.nn.functional.interpolate(
            flow, size=(h2, w2), mode="bilinear", align_corners=False
        )
        out = torch.stack([out[:, 0] * (w2 / w), out[:, 1] * (h2 / h)], dim=1)
    return out.squeeze(0) if single else out


# ---------------------------------------------------------------------------
# block-matching flow estimator


def _as_gray2d(frame):
    if isinstance(frame, torch.Tensor):
        frame = frame.detach().cpu().numpy()
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3 and frame.shape[0] == 1:
        frame = frame[0]
    if frame.ndim != 2:
        raise ContractError(f"expected a grayscale frame [H, W] or [1, H, W], got {frame.shape}")
    return np.ascontiguousarray(frame)


def _downsample2(a):
    h2, w2 = a.shape[0] // 2, a.shape[1] // 2
    return a[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2).mean(axis=(1, 3))


def _resize_bilinear(arr, size):
    """Channel-wise bilinear resize of [C, h, w] arrays (half-pixel centers)."""
    c, h, w = arr.shape
    h2, w2 = size
    ys = (np.arange(h2) + 0.5) * h / h2 - 0.5
    xs = (np.arange(w2) + 0.5) * w / w2 - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    wy = np.clip(ys - y0, 0.0, 1.0)[None, :, None]
    wx = np.clip(xs - x0, 0.0, 1.0)[None, None, :]
    top = arr[:, y0][:, :, x0] * (1 - wx) + arr[:, y0][:, :, x1] * wx
    bot = arr[:, y1][:, :, x0] * (1 - wx) + arr[:, y1][:, :, x1] * wx
    return top * (1 - wy) + bot * wy


def _block_anchors(extent, block):
    n = max(1, -(-extent // block))
    return np.array([min(i * block, extent - block) for i in range(n)], dtype=np.int64)


def _search_offsets(radius):
    offs = [(du, dv) for du in range(-radius, radius + 1) for dv in range(-radius, radius + 1)]
    offs.sort(key=lambda o: (o[0] ** 2 + o[1] ** 2, o[0], o[1]))
    return np.array(offs, dtype=np.int64)


def estimate_flow(src, dst, block=8, radius=4, levels=3, src_index=-1, dst_index=-1, backend=None):
    """Estimate f_{src->dst} with deterministic coarse-to-fine block matching.

    The returned field lives on ``dst``'s grid: warp_backward(src, flow)
    approximates ``dst``. Three pyramid levels by default (2x2 mean
    downsampling), +-``radius`` px exhaustive search per level around the
    upsampled-and-doubled coarser estimate, SAD cost, ties broken toward
    the smallest displacement then lexicographically. Bit-reproducible
    across runs.
    """
    src = _as_gray2d(src)
    dst = _as_gray2d(dst)
    if src.shape != dst.shape:
        raise ContractError("frames must share their size")
    h, w = src.shape
    if h < block or w < block:
        raise ContractError(f"frames smaller than one block ({block}x{block})")

    impl = _kernels.get_impl(backend)
    pyr = [(dst, src)]  # (home grid frame, sampled frame), finest first
    while len(pyr) < levels and min(pyr[-1][0].shape) >= 2 * block:
        pyr.append((_downsample2(pyr[-1][0]), _downsample2(pyr[-1][1])))

    offsets = _search_offsets(radius)
    flow = None  # per-pixel [2, h, w] at the current level
    for ref, mov in reversed(pyr):
        lh, lw = ref.shape
        gy = _block_anchors(lh, block)
        gx = _block_anchors(lw, block)
        if flow is None:
            base_u = np.zeros((len(gy), len(gx)), dtype=np.int64)
            base_v = np.zeros_like(base_u)
        else:
            flow = _resize_bilinear(flow, (lh, lw)) * 2.0
            cy = np.clip(gy + block // 2, 0, lh - 1)
            cx = np.clip(gx + block // 2, 0, lw - 1)
            base_u = np.rint(flow[0][cy][:, cx]).astype(np.int64)
            base_v = np.rint(flow[1][cy][:, cx]).astype(np.int64)
        bu, bv = impl.block_search(ref, mov, base_u, base_v, offsets, block, gy, gx)

        flow = np.zeros((2, lh, lw))
        for i, y0 in enumerate(gy):
            for j, x0 in enumerate(gx):
                flow[0, y0 : y0 + block, x0 : x0 + block] = bu[i, j]
                flow[1, y0 : y0 + block, x0 : x0 + block] = bv[i, j]

    # clamp to the representable range (|u| < W, |v| < H)
    flow[0] = np.clip(flow[0], -(w - 1), w - 1)
    flow[1] = np.clip(flow[1], -(h - 1), h - 1)
    return FlowField(flow.astype(np.float32), src_index=src_index, dst_index=dst_index)


# ---------------------------------------------------------------------------
# Middlebury .flo interchange


def save_flo(flow, path):
    """Write a flow field to a Middlebury .flo file (little-endian)."""
    uv = flow.uv if isinstance(flow, FlowField) else np.asarray(flow, dtype=np.float32)
    if uv.ndim != 3 or uv.shape[0] != 2:
        raise ContractError(f"flow must be [2, H, W], got {uv.shape}")
    h, w = uv.shape[1:]
    data = np.ascontiguousarray(uv.transpose(1, 2, 0), dtype="<f4")
    with open(path, "wb") as f:
        f.write(FLO_MAGIC.astype("<f4").tobytes())
        f.write(struct.pack("<ii", w, h))
        f.write(data.tobytes())


def load_flo(path):
    """Read a Middlebury .flo file; raises FormatError on bad magic/truncation."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12:
        raise FormatError(f"{path}: truncated .flo header")
    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != FLO_MAGIC:
        raise FormatError(f"{path}: bad .flo magic {magic!r}")
    w, h = struct.unpack_from("<ii", raw, 4)
    if w <= 0 or h <= 0:
        raise FormatError(f"{path}: invalid dimensions {w}x{h}")
    expected = 12 + w * h * 2 * 4
    if len(raw) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=12).reshape(h, w, 2)
    return FlowField(data.transpose(2, 0, 1).copy())


# ---------------------------------------------------------------------------
# motion priors and network input assembly


def visibility_mask(a, b_warped, alpha):
    """Soft visibility weight exp(-alpha * ||a - b_warped||^2), per pixel.

    The squared norm runs over channels; output shape [1, H, W], values in
    (0, 1] with exact 1 where the frames agree.
    """
    if a.shape != b_warped.shape:
        raise ContractError("frames must share their shape")
    if alpha <= 0:
        raise ContractError("alpha must be positive")
    d2 = ((a - b_warped) ** 2).sum(dim=-3, keepdim=True)
    return torch.exp(-alpha * d2)


def temporal_sharpness(gray, neighbor_flows, theta=50.0):
    """Per-frame sharpness prior from warped-neighbor consistency.

    s_i(p) = exp(-(theta/2) * sum_j ||warp(x_j, f_{j->i})(p) - x_i(p)||^2)
    with j running over the in-range members of {i-1, i+1}. A static clip
    under zero flow scores exactly 1 everywhere.

    Args:
        gray: [T, 1, H, W] tensor of grayscale frames.
        neighbor_flows: mapping (j, i) -> flow f_{j->i} (FlowField or tensor).
        theta: decay rate of the consistency score.
    """
    t = gray.shape[0]
    if t < 2:
        raise ContractError("temporal sharpness needs at least one neighboring frame")
    maps = []
    for i in range(t):
        acc = torch.zeros_like(gray[i])
        for j in (i - 1, i + 1):
            if 0 <= j < t:
                f = _as_flow_tensor(neighbor_flows[(j, i)])
                warped = warp_backward(gray[j], f)
                acc = acc + ((warped - gray[i]) ** 2).sum(dim=0, keepdim=True)
        maps.append(torch.exp(-(theta / 2.0) * acc))
    return torch.stack(maps)


CONNECTION_MODES = ("plain", "concat", "multiply")


def input_channels(connection="multiply"):
    return 3 if connection == "plain" else 4


def assemble_input(gray, sharpness, flows_to_center, connection="multiply"):
    """Stack per-frame network input channels.

    Default ("multiply") layout per frame: [x, s*x, u_to_center, v_to_center].
    "concat" uses [x, s, u, v]; "plain" drops the sharpness channel. The
    center frame's flow must be identically zero (it maps to itself).
    """
    if connection not in CONNECTION_MODES:
        raise ContractError(f"unknown connection mode {connection!r}")
    t = gray.shape[0]
    if sharpness.shape != gray.shape:
        raise ContractError("sharpness and gray shapes disagree")
    if flows_to_center.shape != (t, 2, *gray.shape[-2:]):
        raise ContractError("flows_to_center must be [T, 2, H, W] matching the clip")
    if flows_to_center[t // 2].abs().max() != 0:
        raise ContractError("center frame flow must be zero")

    if connection == "plain":
        return torch.cat([gray, flows_to_center], dim=1)
    if connection == "concat":
        return torch.cat([gray, sharpness, flows_to_center], dim=1)
    return torch.cat([gray, gray * sharpness, flows_to_center], dim=1)


def prepare_clip_inputs(gray, flow_lookup, theta=50.0, connection="multiply"):
    """Build the assembled network input and flows-to-center for one clip.

    ``flow_lookup(j, i)`` must return f_{j->i} (FlowField, tensor, or
    [2, H, W] array) on frame i's grid; it is queried for the adjacent
    pairs feeding the sharpness prior and for every frame-to-center pair.
    """
    t = gray.shape[0]
    center = t // 2
    neighbor = {}
    for i in range(t):
        for j in (i - 1, i + 1):
            if 0 <= j < t:
                neighbor[(j, i)] = _as_flow_tensor(flow_lookup(j, i))
    sharpness = temporal_sharpness(gray, neighbor, theta)
    to_center = []
    for i in range(t):
        if i == center:
            to_center.append(torch.zeros(2, *gray.shape[-2:]))
        else:
            to_center.append(_as_flow_tensor(flow_lookup(i, center)))
    flows = torch.stack(to_center)
    assembled = assemble_input(gray, sharpness, flows, connection)
    return assembled, flows

"""CIE L*a*b* color conversions for sRGB (D65) images.

All chroma prediction happens in Lab: the network consumes the L channel
(normalized to [0, 1]) and predicts ab (normalized to [-1, 1]).
"""

import numpy as np

from .errors import ContractError

# sRGB -> XYZ (D65, IEC 61966-2-1)
_RGB2XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE = np.array([0.95047, 1.0, 1.08883])  # D65 reference white
_DELTA = 6.0 / 29.0


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _lab_f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3.0 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(t):
    return np.where(t > _DELTA, t**3, 3.0 * _DELTA**2 * (t - 4.0 / 29.0))


def rgb_to_lab(rgb):
    """Convert an sRGB image [3, H, W] in [0, 1] to Lab.

    Returns an array [3, H, W] with L in [0, 100] and a, b roughly in
    [-128, 127]. Raises ContractError for values outside [0, 1].
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ContractError(f"expected [3, H, W] image, got shape {rgb.shape}")
    if not np.isfinite(rgb).all() or rgb.min() < -1e-9 or rgb.max() > 1.0 + 1e-9:
        raise ContractError("rgb values must lie in [0, 1]")
    rgb = np.clip(rgb, 0.0, 1.0)

    lin = _srgb_to_linear(rgb)
    xyz = np.einsum("ij,jhw->ihw", _RGB2XYZ, lin)
    f = _lab_f(xyz / _WHITE[:, None, None])
    lab = np.empty_like(xyz)
    lab[0] = 116.0 * f[1] - 16.0
    lab[1] = 500.0 * (f[0] - f[1])
    lab[2] = 200.0 * (f[1] - f[2])
    return lab


def lab_to_rgb(lab):
    """Inverse of :func:`rgb_to_lab`; out-of-gamut results are clamped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    if lab.ndim != 3 or lab.shape[0] != 3:
        raise ContractError(f"expected [3, H, W] image, got shape {lab.shape}")
    if not np.isfinite(lab).all():
        raise ContractError("lab values must be finite")

    fy = (lab[0] + 16.0) / 116.0
    fx = fy + lab[1] / 500.0
    fz = fy - lab[2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)]) * _WHITE[:, None, None]
    lin = np.einsum("ij,jhw->ihw", _XYZ2RGB, xyz)
    return np.clip(_linear_to_srgb(lin), 0.0, 1.0)


def normalize_lab(lab):
    """Split a Lab image into network-ready (gray, ab) pairs.

    gray = L / 100 in [0, 1], shape [1, H, W]; ab = ab / 128 in [-1, 1],
    shape [2, H, W].
    """
    lab = np.asarray(lab, dtype=np.float64)
    gray = np.clip(lab[0:1] / 100.0, 0.0, 1.0)
    ab = np.clip(lab[1:3] / 128.0, -1.0, 1.0)
    return gray, ab


def denormalize_lab(gray, ab):
    """Recombine normalized (gray, ab) into a Lab image [3, H, W]."""
    gray = np.asarray(gray, dtype=np.float64)
    ab = np.asarray(ab, dtype=np.float64)
    if gray.shape[-2:] != ab.shape[-2:]:
        raise ContractError("gray and ab spatial sizes differ")
    return np.concatenate([gray.reshape(1, *gray.shape[-2:]) * 100.0, ab * 128.0], axis=0)


def lab_frames_to_rgb(gray, ab):
    """Composite normalized (gray, ab) frames into float RGB [T, 3, H, W] in [0, 1]."""
    frames = []
    for g, c in zip(np.asarray(gray), np.asarray(ab)):
        frames.append(lab_to_rgb(denormalize_lab(g, c)))
    return np.stack(frames)


def lab_frames_to_rgb_u8(gray, ab):
    """Composite normalized (gray, ab) frames [T,1,H,W]/[T,2,H,W] into uint8 RGB [T,H,W,3]."""
    frames = []
    for g, c in zip(np.asarray(gray), np.asarray(ab)):
        rgb = lab_to_rgb(denormalize_lab(g, c))
        frames.append(np.round(rgb * 255.0).astype(np.uint8).transpose(1, 2, 0))
    return np.stack(frames)

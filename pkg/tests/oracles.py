"""Independent brute-force oracles used by the tests.

Everything here is written as plain per-pixel python loops over numpy
scalars, sharing no code with the package implementations it checks.
"""

import math

import numpy as np


def warp_pixel(image, x, y):
    """Bilinear sample of [C, H, W] at (x, y) with border replication."""
    c, h, w = image.shape
    x0, y0 = math.floor(x), math.floor(y)
    wx, wy = x - x0, y - y0
    out = np.zeros(c)
    for dy, fy in ((0, 1 - wy), (1, wy)):
        for dx, fx in ((0, 1 - wx), (1, wx)):
            xi = min(max(x0 + dx, 0), w - 1)
            yi = min(max(y0 + dy, 0), h - 1)
            out += fy * fx * image[:, yi, xi]
    return out


def warp_naive(image, flow):
    c, h, w = image.shape
    out = np.zeros_like(image, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            out[:, y, x] = warp_pixel(image, x + flow[0, y, x], y + flow[1, y, x])
    return out


def warp_loss_naive(pred, gt, flows, alpha, d_set):
    """Scalar-loop twin of losses.warp_loss (RMS per pair, mean over pairs)."""
    t_frames = pred.shape[0]
    terms = []
    for d in d_set:
        for t in range(t_frames - d):
            f = flows[(t, d)]
            wp = warp_naive(pred[t + d], f)
            wg = warp_naive(gt[t + d], f)
            sq_sum = 0.0
            count = 0
            for y in range(pred.shape[2]):
                for x in range(pred.shape[3]):
                    m = math.exp(-alpha * float(((gt[t, :, y, x] - wg[:, y, x]) ** 2).sum()))
                    for ch in range(pred.shape[1]):
                        sq_sum += (m * (pred[t, ch, y, x] - wp[ch, y, x])) ** 2
                        count += 1
            terms.append(math.sqrt(sq_sum / count))
    return float(np.mean(terms))


def charbonnier_naive(pred, gt, eps):
    total = 0.0
    count = 0
    flat_p = pred.ravel()
    flat_g = gt.ravel()
    for i in range(flat_p.size):
        total += math.sqrt((flat_p[i] - flat_g[i]) ** 2 + eps**2)
        count += 1
    return total / count


def smooth_naive(pred):
    t, c, h, w = pred.shape
    sx = 0.0
    sy = 0.0
    for ti in range(t):
        for ci in range(c):
            for y in range(h):
                for x in range(w - 1):
                    sx += abs(pred[ti, ci, y, x + 1] - pred[ti, ci, y, x])
            for y in range(h - 1):
                for x in range(w):
                    sy += abs(pred[ti, ci, y + 1, x] - pred[ti, ci, y, x])
    return sx / (t * c * h * (w - 1)) + sy / (t * c * (h - 1) * w)


def ssim_naive(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, dyn=255.0):
    """Direct per-window SSIM for [H, W] single channels."""
    half = window // 2
    g = np.array([math.exp(-((i - half) ** 2) / (2 * sigma**2)) for i in range(window)])
    w = np.outer(g, g)
    w /= w.sum()
    c1 = (k1 * dyn) ** 2
    c2 = (k2 * dyn) ** 2
    h, wid = a.shape
    vals = []
    for y in range(h - window + 1):
        for x in range(wid - window + 1):
            pa = a[y : y + window, x : x + window]
            pb = b[y : y + window, x : x + window]
            mu_a = (pa * w).sum()
            mu_b = (pb * w).sum()
            va = (pa * pa * w).sum() - mu_a**2
            vb = (pb * pb * w).sum() - mu_b**2
            cov = (pa * pb * w).sum() - mu_a * mu_b
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (va + vb + c2))
            )
    return float(np.mean(vals))


def warp_error_naive(frames, flows_fwd, flows_bwd):
    """Scalar-loop twin of metrics.warp_error."""
    t, c, h, w = frames.shape
    pair_vals = []
    for i in range(t - 1):
        fwd = flows_fwd[i]
        bwd = flows_bwd[i]
        total = 0.0
        for y in range(h):
            for x in range(w):
                fu, fv = fwd[0, y, x], fwd[1, y, x]
                bu, bv = warp_pixel(bwd, x + fu, y + fv)
                sq = (fu + bu) ** 2 + (fv + bv) ** 2
                bound = 0.01 * (fu**2 + fv**2 + bu**2 + bv**2) + 0.5
                if sq <= bound:
                    warped = warp_pixel(frames[i + 1], x + fu, y + fv)
                    total += float(((frames[i, :, y, x] - warped) ** 2).sum())
        pair_vals.append(total / (h * w))
    return float(np.mean(pair_vals))


def rgb_to_lab_reference(r, g, b):
    """Scalar CIE sRGB(D65) -> Lab conversion, straight from the standard."""

    def lin(c):
        return c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4

    rl, gl, bl = lin(r), lin(g), lin(b)
    x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl
    y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl
    z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl
    xn, yn, zn = 0.95047, 1.0, 1.08883

    def f(t):
        return t ** (1 / 3) if t > (6 / 29) ** 3 else t / (3 * (6 / 29) ** 2) + 4 / 29

    fx, fy, fz = f(x / xn), f(y / yn), f(z / zn)
    return 116 * fy - 16, 500 * (fx - fy), 200 * (fy - fz)

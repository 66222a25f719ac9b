"""Pure numpy implementations of the hot kernels.

These mirror the compiled versions in ``_native.pyx`` operation for
operation; the benchmark in ``benchmarks/bench_kernels.py`` compares the
two backends.
"""

import numpy as np

BACKEND = "numpy"


def block_search(ref, mov, base_u, base_v, offsets, block, grid_y, grid_x):
    """One level of exhaustive block matching.

    For each block of ``ref`` (anchored at ``grid_y[i], grid_x[j]``), scan
    candidate displacements ``base + offsets`` and keep the one with the
    smallest sum of absolute differences against ``mov`` sampled with
    border replication. Ties are broken by smallest displacement magnitude,
    then lexicographically by (u, v).

    Args:
        ref, mov: float64 [H, W] grayscale frames. ``ref`` provides the
            reference blocks (the flow's home grid); ``mov`` is sampled
            at the displaced positions.
        base_u, base_v: int64 [nby, nbx] per-block displacement to search
            around (propagated from the coarser level).
        offsets: int64 [K, 2] (du, dv) candidates.
        block: block edge length in pixels.
        grid_y, grid_x: int64 anchors of the block grid.

    Returns:
        (u, v): int64 [nby, nbx] winning displacement per block.
    """
    h, w = ref.shape
    nby, nbx = len(grid_y), len(grid_x)
    ys = grid_y[:, None] + np.arange(block)[None, :]  # [nby, block]
    xs = grid_x[:, None] + np.arange(block)[None, :]

    n_cand = len(offsets)
    sad = np.empty((n_cand, nby, nbx))
    mag = np.empty((n_cand, nby, nbx), dtype=np.int64)
    cand_u = np.empty((n_cand, nby, nbx), dtype=np.int64)
    cand_v = np.empty((n_cand, nby, nbx), dtype=np.int64)

    ref_blocks = ref[ys[:, None, :, None], xs[None, :, None, :]]  # [nby, nbx, b, b]
    for k, (du, dv) in enumerate(offsets):
        u = base_u + du
        v = base_v + dv
        ry = np.clip(ys[:, None, :, None] + v[:, :, None, None], 0, h - 1)
        rx = np.clip(xs[None, :, None, :] + u[:, :, None, None], 0, w - 1)
        diff = np.abs(ref_blocks - mov[ry, rx])
        sad[k] = diff.sum(axis=(2, 3))
        cand_u[k] = u
        cand_v[k] = v
        mag[k] = u * u + v * v

    # lexicographic argmin over (sad, magnitude, u, v)
    order = np.lexsort((cand_v, cand_u, mag, sad), axis=0)[0]
    take = (order, np.arange(nby)[:, None], np.arange(nbx)[None, :])
    return cand_u[take], cand_v[take]


def splat_hist(gray, a, b, cells, l_bins, a_bins, b_bins):
    """Splat pixels into a bilateral histogram grid.

    Each pixel deposits unit mass, split bilinearly over the 2x2 nearest
    spatial cells and linearly over the 2 nearest luminance bins; the ab
    coordinate selects a single (nearest) chroma bin.

    Args:
        gray: float64 [H, W] in [0, 1].
        a, b: float64 [H, W] in [-1, 1].

    Returns:
        float64 [cells, cells, l_bins, a_bins * b_bins] raw (unnormalized) mass.
    """
    h, w = gray.shape
    ab_bins = a_bins * b_bins
    grid = np.zeros((cells, cells, l_bins, ab_bins))

    ys, xs = np.mgrid[0:h, 0:w]
    cx = (xs + 0.5) / w * cells - 0.5
    cy = (ys + 0.5) / h * cells - 0.5
    lz = gray * l_bins - 0.5

    ia = np.clip(np.floor((a + 1.0) * 0.5 * a_bins).astype(np.int64), 0, a_bins - 1)
    ib = np.clip(np.floor((b + 1.0) * 0.5 * b_bins).astype(np.int64), 0, b_bins - 1)
    iab = ia * b_bins + ib

    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    k0 = np.floor(lz).astype(np.int64)
    wx1 = cx - x0
    wy1 = cy - y0
    wl1 = lz - k0

    flat = grid.reshape(-1)
    for dx, wx in ((0, 1.0 - wx1), (1, wx1)):
        gx = np.clip(x0 + dx, 0, cells - 1)
        for dy, wy in ((0, 1.0 - wy1), (1, wy1)):
            gy = np.clip(y0 + dy, 0, cells - 1)
            for dk, wl in ((0, 1.0 - wl1), (1, wl1)):
                gk = np.clip(k0 + dk, 0, l_bins - 1)
                idx = ((gy * cells + gx) * l_bins + gk) * ab_bins + iab
                np.add.at(flat, idx.ravel(), (wx * wy * wl).ravel())
    return grid

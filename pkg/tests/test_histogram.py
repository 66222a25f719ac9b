import numpy as np
import pytest
import torch

from chromaflow.errors import ConfigError, ContractError
from chromaflow.histogram import (
    HistGrid,
    build_hist_grid,
    hist_pyramid,
    load_grid,
    save_grid,
    slice_hist,
    splat_raw,
    uniform_descriptors,
)


def _uniform_image(h=16, w=16, gray=0.5, a=0.25, b=-0.25):
    return np.full((h, w), gray), np.stack([np.full((h, w), a), np.full((h, w), b)])


class TestBuild:
    def test_uniform_image_is_one_hot(self):
        gray, ab = _uniform_image()
        grid = build_hist_grid(gray, ab, cells=4, l_bins=4)
        hot = grid.ab_bin_index(0.25, -0.25)
        mass = splat_raw(gray, ab, cells=4, l_bins=4)
        populated = mass.sum(-1) > 0
        assert np.all(grid.h[populated][:, hot] == 1.0)
        assert np.all(grid.h[populated].sum(-1) == 1.0)

    def test_distribution_normalization(self, rng):
        gray = rng.uniform(0, 1, (32, 32))
        ab = rng.uniform(-1, 1, (2, 32, 32))
        grid = build_hist_grid(gray, ab)
        sums = grid.h.sum(-1)
        assert np.abs(sums - 1.0).max() < 1e-6

    def test_empty_cells_fall_back_to_uniform(self):
        gray, ab = _uniform_image(gray=0.0)  # only the lowest L bin is touched
        grid = build_hist_grid(gray, ab, cells=2, l_bins=8)
        assert np.allclose(grid.h[:, :, -1], 1.0 / grid.ab_bins)

    def test_mass_conservation(self, rng):
        gray = rng.uniform(0, 1, (24, 20))
        ab = rng.uniform(-1, 1, (2, 24, 20))
        raw = splat_raw(gray, ab)
        assert abs(raw.sum() - 24 * 20) < 1e-8

    def test_two_by_two_hand_splat(self):
        # pixel centers coincide with the 2x2 cell centers: pure one-hot cells
        gray = np.full((2, 2), 0.5)
        ab = np.zeros((2, 2, 2))
        ab[0, :, 0] = 0.5  # left column color A
        ab[0, :, 1] = -0.5  # right column color B
        grid = build_hist_grid(gray, ab, cells=2, l_bins=1, a_bins=4, b_bins=4)
        hot_a = grid.ab_bin_index(0.5, 0.0)
        hot_b = grid.ab_bin_index(-0.5, 0.0)
        for gy in range(2):
            assert grid.h[gy, 0, 0, hot_a] == 1.0
            assert grid.h[gy, 1, 0, hot_b] == 1.0

    def test_bad_bin_counts_rejected(self):
        gray, ab = _uniform_image()
        with pytest.raises(ConfigError):
            build_hist_grid(gray, ab, cells=0)

    def test_backends_agree(self, rng):
        gray = rng.uniform(0, 1, (17, 23))
        ab = rng.uniform(-1, 1, (2, 17, 23))
        a = splat_raw(gray, ab, backend="numpy")
        b = splat_raw(gray, ab, backend="native")
        assert np.abs(a - b).max() < 1e-12


class TestSlice:
    def test_constant_grid_returns_the_constant(self, rng):
        q = rng.uniform(0, 1, 16)
        q /= q.sum()
        h = np.broadcast_to(q, (4, 4, 4, 16)).copy()
        grid = HistGrid(h=h, cells=4, l_bins=4, a_bins=4, b_bins=4)
        desc = slice_hist(grid, rng.uniform(0, 1, (8, 8)))
        assert np.allclose(desc, q[:, None, None], atol=1e-12)

    def test_descriptors_sum_to_one(self, rng):
        gray = rng.uniform(0, 1, (16, 16))
        ab = rng.uniform(-1, 1, (2, 16, 16))
        grid = build_hist_grid(gray, ab)
        desc = slice_hist(grid, rng.uniform(0, 1, (20, 12)))
        assert np.abs(desc.sum(0) - 1.0).max() < 1e-6

    def test_cell_center_pixel_reads_cell_histogram(self, rng):
        h = rng.uniform(0, 1, (2, 2, 2, 9))
        h /= h.sum(-1, keepdims=True)
        grid = HistGrid(h=h, cells=2, l_bins=2, a_bins=3, b_bins=3)
        # 6x6 frame, 2 cells: pixel (1,1) sits exactly at cell (0,0)'s
        # center; L = 0.25 is exactly the lower luminance bin's center.
        gray = np.full((6, 6), 0.25)
        desc = slice_hist(grid, gray)
        assert np.allclose(desc[:, 1, 1], h[0, 0, 0], atol=1e-12)

    def test_hand_computed_convex_combination(self, rng):
        h = rng.uniform(0, 1, (2, 2, 1, 4))
        h /= h.sum(-1, keepdims=True)
        grid = HistGrid(h=h, cells=2, l_bins=1, a_bins=2, b_bins=2)
        gray = np.full((4, 4), 0.5)
        desc = slice_hist(grid, gray)
        # pixel (2, 2) has cell coords (0.75, 0.75): weights 0.25/0.75
        expect = (
            0.25 * 0.25 * h[0, 0, 0]
            + 0.25 * 0.75 * h[0, 1, 0]
            + 0.75 * 0.25 * h[1, 0, 0]
            + 0.75 * 0.75 * h[1, 1, 0]
        )
        assert np.allclose(desc[:, 2, 2], expect, atol=1e-12)

    def test_non_finite_gray_rejected(self, rng):
        grid = build_hist_grid(*_uniform_image())
        with pytest.raises(ContractError):
            slice_hist(grid, np.full((4, 4), np.nan))

    def test_piecewise_constant_image_one_hot_away_from_boundary(self):
        h, w, g = 64, 64, 8
        gray = np.full((h, w), 0.5)
        ab = np.zeros((2, h, w))
        ab[0, :, : w // 2] = 0.5
        ab[0, :, w // 2 :] = -0.5
        grid = build_hist_grid(gray, ab, cells=g, l_bins=4)
        desc = slice_hist(grid, gray)
        hot_a = grid.ab_bin_index(0.5, 0.0)
        hot_b = grid.ab_bin_index(-0.5, 0.0)
        margin = 2 * (w // g)  # splat + slice each reach one cell width
        left = desc[:, :, : w // 2 - margin]
        right = desc[:, :, w // 2 + margin :]
        assert np.allclose(left[hot_a], 1.0, atol=1e-9)
        assert np.allclose(right[hot_b], 1.0, atol=1e-9)


class TestPyramid:
    def test_constant_preserved(self):
        feat = np.full((3, 16, 16), 0.25)
        for level in hist_pyramid(feat, 3):
            assert np.allclose(level, 0.25)

    def test_sums_preserved(self, rng):
        desc = rng.uniform(0, 1, (8, 16, 16))
        desc /= desc.sum(0, keepdims=True)
        for level in hist_pyramid(desc, 4):
            assert np.abs(level.sum(0) - 1.0).max() < 1e-6

    def test_hand_averaged_quads(self):
        feat = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
        out = hist_pyramid(feat, 1)[1]
        expect = np.array([[[(0 + 1 + 4 + 5) / 4, (2 + 3 + 6 + 7) / 4],
                            [(8 + 9 + 12 + 13) / 4, (10 + 11 + 14 + 15) / 4]]])
        assert np.array_equal(out, expect)

    def test_channel_permutation_commutes(self, rng):
        feat = rng.uniform(0, 1, (6, 8, 8))
        perm = rng.permutation(6)
        a = hist_pyramid(feat[perm], 2)
        b = [lvl[perm] for lvl in hist_pyramid(feat, 2)]
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_indivisible_rejected(self):
        with pytest.raises(ConfigError):
            hist_pyramid(np.zeros((1, 12, 12)), 3)


def test_grid_serialization_round_trip(tmp_path, rng):
    gray = rng.uniform(0, 1, (16, 16))
    ab = rng.uniform(-1, 1, (2, 16, 16))
    grid = build_hist_grid(gray, ab, cells=4, l_bins=2, a_bins=8, b_bins=4)
    path = tmp_path / "ref.hg"
    save_grid(grid, path)
    loaded = load_grid(path)
    assert (loaded.cells, loaded.l_bins, loaded.a_bins, loaded.b_bins) == (4, 2, 8, 4)
    assert np.abs(loaded.h - grid.h).max() < 1e-6  # float32 storage


def test_no_gradient_reaches_targets_through_histogram_branch():
    gray = torch.rand(1, 8, 8)
    ab = torch.rand(2, 8, 8, requires_grad=True) * 0.5
    grid = build_hist_grid(gray, ab)  # detaches internally
    desc = slice_hist(grid, gray)
    assert isinstance(desc, np.ndarray)
    feat = torch.from_numpy(desc)
    assert not feat.requires_grad and feat.grad_fn is None


def test_uniform_descriptors():
    u = uniform_descriptors(16, 4, 4)
    assert np.allclose(u.sum(0), 1.0)
    assert np.all(u == 1.0 / 16)

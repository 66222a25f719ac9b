import numpy as np
import pytest
import torch

from chromaflow.errors import ConfigError, ContractError
from chromaflow.fusion import (
    FeatureRefine,
    FlowHistFusion,
    SpatialWindowAttention,
    TemporalWindowAttention,
    merge_windows,
    partition_windows,
)

from gradcheck import analytic_vs_fd, relative_error, sample_coords


class TestWindows:
    def test_counts(self):
        x = torch.randn(2, 3, 64, 64)
        w = partition_windows(x, 4)
        assert w.shape == (2, 16, 256, 3)

    def test_round_trip_exact(self, rng):
        x = torch.from_numpy(rng.normal(size=(3, 5, 16, 24)))
        back = merge_windows(partition_windows(x, 2), 2, 16, 24)
        assert torch.equal(back, x)

    def test_window_index_map(self):
        # 8x8, s=2: window (row 0, col 1) holds rows 0-3, columns 4-7
        x = torch.arange(64, dtype=torch.float32).reshape(1, 1, 8, 8)
        w = partition_windows(x, 2)
        expect = x[0, 0, 0:4, 4:8].reshape(-1)
        assert torch.equal(w[0, 1, :, 0], expect)

    def test_divisibility_enforced(self):
        with pytest.raises(ContractError):
            partition_windows(torch.zeros(1, 1, 6, 6), 4)


class TestSpatialAttention:
    def test_single_token_window_is_projection_chain(self, rng):
        # H = W = s: every window holds one token, attention weight is 1
        sa = SpatialWindowAttention(channels=6, heads=2, windows=4, flow_injection=False)
        x = torch.from_numpy(rng.normal(size=(1, 6, 4, 4)).astype(np.float32))
        out = sa(x)
        tokens = x.permute(0, 2, 3, 1)
        expect = sa.proj(sa.v(tokens)).permute(0, 3, 1, 2)
        assert torch.allclose(out, expect, atol=1e-6)

    def test_softmax_rows_sum_to_one(self, rng):
        sa = SpatialWindowAttention(channels=8, heads=4, windows=2)
        x = torch.from_numpy(rng.normal(size=(2, 8, 8, 8)).astype(np.float32))
        flow = torch.from_numpy(rng.normal(size=(2, 2, 8, 8)).astype(np.float32))
        _, attn = sa(x, flow, return_attn=True)
        assert torch.allclose(attn.sum(dim=-1), torch.ones_like(attn.sum(dim=-1)), atol=1e-6)

    def test_fused_path_matches_manual_weights_path(self, rng):
        sa = SpatialWindowAttention(channels=8, heads=2, windows=2)
        x = torch.from_numpy(rng.normal(size=(2, 8, 8, 8)).astype(np.float32))
        out = sa(x)
        out_manual, _ = sa(x, return_attn=True)
        assert torch.allclose(out, out_manual, atol=1e-5)

    def test_zeroed_flow_projection_ignores_flow(self, rng):
        sa = SpatialWindowAttention(channels=8, heads=2, windows=2)
        torch.nn.init.zeros_(sa.flow_proj.weight)
        torch.nn.init.zeros_(sa.flow_proj.bias)
        x = torch.from_numpy(rng.normal(size=(1, 8, 8, 8)).astype(np.float32))
        const_flow = torch.full((1, 2, 8, 8), 3.0)
        assert torch.allclose(sa(x, torch.zeros(1, 2, 8, 8)), sa(x, const_flow), atol=1e-7)

    def test_flow_shapes_affinities_but_not_content(self, rng):
        sa = SpatialWindowAttention(channels=8, heads=2, windows=2)
        x = torch.from_numpy(rng.normal(size=(1, 8, 8, 8)).astype(np.float32))
        f1 = torch.zeros(1, 2, 8, 8)
        f2 = torch.from_numpy(rng.normal(size=(1, 2, 8, 8)).astype(np.float32))
        assert not torch.allclose(sa(x, f1), sa(x, f2), atol=1e-6)

    def test_window_permutation_equivariance(self, rng):
        sa = SpatialWindowAttention(channels=6, heads=3, windows=2, flow_injection=False)
        x = torch.from_numpy(rng.normal(size=(1, 6, 8, 8)).astype(np.float32))
        perm = torch.from_numpy(rng.permutation(4))
        xw = partition_windows(x, 2)
        x_perm = merge_windows(xw[:, perm], 2, 8, 8)
        out_perm = sa(x_perm)
        expect = merge_windows(partition_windows(sa(x), 2)[:, perm], 2, 8, 8)
        assert torch.allclose(out_perm, expect, atol=1e-6)

    def test_head_divisibility(self):
        with pytest.raises(ConfigError):
            SpatialWindowAttention(channels=6, heads=4, windows=2)


class TestTemporalAttention:
    def test_single_frame_reduces_to_window_attention(self, rng):
        ta = TemporalWindowAttention(channels=8, heads=2, windows=2)
        x = torch.from_numpy(rng.normal(size=(1, 8, 8, 8)).astype(np.float32))
        out = ta(x)
        assert out.shape == x.shape

    def test_identical_frames_give_identical_outputs(self, rng):
        ta = TemporalWindowAttention(channels=8, heads=2, windows=2)
        frame = torch.from_numpy(rng.normal(size=(1, 8, 8, 8)).astype(np.float32))
        x = frame.repeat(4, 1, 1, 1)
        out = ta(x)
        for t in range(1, 4):
            assert torch.allclose(out[0], out[t], atol=1e-6)

    def test_two_token_attention_by_hand(self, rng):
        # T=2 frames of 1x1 windows, identity projections, one head
        ta = TemporalWindowAttention(channels=2, heads=1, windows=1)
        for lin in (ta.q, ta.k, ta.v, ta.proj):
            torch.nn.init.eye_(lin.weight)
            torch.nn.init.zeros_(lin.bias)
        a = np.array([0.3, -0.7])
        b = np.array([1.1, 0.4])
        x = torch.tensor(np.stack([a, b]), dtype=torch.float32).reshape(2, 2, 1, 1)
        out = ta(x).reshape(2, 2).detach().numpy()

        d = np.sqrt(2.0)
        logits_a = np.array([a @ a / d, a @ b / d])
        w_a = np.exp(logits_a) / np.exp(logits_a).sum()
        expect_a = w_a[0] * a + w_a[1] * b
        logits_b = np.array([b @ a / d, b @ b / d])
        w_b = np.exp(logits_b) / np.exp(logits_b).sum()
        expect_b = w_b[0] * a + w_b[1] * b
        assert np.allclose(out[0], expect_a, atol=1e-6)
        assert np.allclose(out[1], expect_b, atol=1e-6)

    def test_frame_permutation_equivariance(self, rng):
        ta = TemporalWindowAttention(channels=6, heads=2, windows=1)
        x = torch.from_numpy(rng.normal(size=(4, 6, 4, 4)).astype(np.float32))
        perm = torch.from_numpy(rng.permutation(4))
        assert torch.allclose(ta(x[perm]), ta(x)[perm], atol=1e-6)


class TestFeatureRefine:
    def test_zero_weights_give_zero(self, rng):
        fr = FeatureRefine(channels=4, hist_channels=8)
        for p in fr.parameters():
            torch.nn.init.zeros_(p)
        x = torch.from_numpy(rng.normal(size=(2, 4, 8, 8)).astype(np.float32))
        hist = torch.rand(8, 8, 8)
        assert torch.equal(fr(x, hist), torch.zeros(2, 4, 8, 8))

    def test_shape_contract(self, rng):
        fr = FeatureRefine(channels=6, hist_channels=12)
        x = torch.randn(3, 6, 16, 16)
        assert fr(x, torch.rand(12, 16, 16)).shape == (3, 6, 16, 16)

    def test_scale_mismatch_rejected(self):
        fr = FeatureRefine(channels=4, hist_channels=8)
        with pytest.raises(ContractError):
            fr(torch.randn(1, 4, 8, 8), torch.rand(8, 4, 4))

    def test_histogram_path_is_live(self, rng):
        fr = FeatureRefine(channels=4, hist_channels=8).double()
        x = torch.from_numpy(rng.normal(size=(1, 4, 8, 8)))
        hist = torch.from_numpy(rng.uniform(0, 1, (8, 8, 8)))
        w = torch.from_numpy(rng.normal(size=(1, 4, 8, 8)))
        coords = [(0, int(i)) for i in rng.choice(hist.numel(), 8, replace=False)]
        analytic, fd = analytic_vs_fd(lambda: (fr(x, hist) * w).sum(), [hist], coords)
        assert np.linalg.norm(analytic) > 1e-8
        assert relative_error(analytic, fd) < 1e-3


class TestFusionBlock:
    def _block(self, **kw):
        torch.manual_seed(3)
        return FlowHistFusion(channels=8, hist_channels=16, s_spatial=4, s_temporal=2, heads=2, **kw)

    def test_shape_contract(self, rng):
        blk = self._block()
        x = torch.randn(3, 8, 16, 16)
        out = blk(x, torch.randn(3, 2, 16, 16), torch.rand(16, 16, 16))
        assert out.shape == x.shape

    def test_skip_dominance_with_constructed_weights(self, rng):
        blk = self._block()
        with torch.no_grad():
            for mod in (blk.temporal, blk.spatial, blk.refine, blk.ffn):
                for p in mod.parameters():
                    p.zero_()
            blk.p1.weight.zero_()
            blk.p1.bias.zero_()
            blk.p1.weight[:, :8].copy_(torch.eye(8).reshape(8, 8, 1, 1))
            blk.p2.weight.zero_()
            blk.p2.bias.zero_()
            blk.p2.weight[:, :8].copy_(torch.eye(8).reshape(8, 8, 1, 1))
        x = torch.from_numpy(rng.normal(size=(3, 8, 8, 8)).astype(np.float32))
        out = blk(x, torch.zeros(3, 2, 8, 8), torch.rand(16, 8, 8))
        assert torch.allclose(out, x, atol=1e-6)

    def test_histogram_input_is_live(self, rng):
        blk = self._block()
        x = torch.from_numpy(rng.normal(size=(3, 8, 8, 8)).astype(np.float32))
        flow = torch.zeros(3, 2, 8, 8)
        real = torch.rand(16, 8, 8)
        real = real / real.sum(0, keepdim=True)
        uniform = torch.full((16, 8, 8), 1.0 / 16)
        assert not torch.allclose(blk(x, flow, real), blk(x, flow, uniform), atol=1e-6)

    def test_ablated_branch_widths(self):
        full = self._block()
        assert full.p1.weight.shape[1] == 24
        no_sa = self._block(use_spatial=False)
        assert no_sa.p1.weight.shape[1] == 16 and no_sa.spatial is None
        no_ta = self._block(use_temporal=False)
        assert no_ta.p1.weight.shape[1] == 16 and no_ta.temporal is None
        bare = self._block(use_spatial=False, use_temporal=False)
        assert bare.p1.weight.shape[1] == 8
        assert bare(torch.randn(3, 8, 8, 8), None, torch.rand(16, 8, 8)).shape == (3, 8, 8, 8)

    def test_gradients_match_finite_differences(self, rng):
        torch.manual_seed(5)
        blk = FlowHistFusion(
            channels=8, hist_channels=12, s_spatial=4, s_temporal=2, heads=2
        ).double()
        x = torch.from_numpy(rng.normal(size=(3, 8, 8, 8)) * 0.5)
        flow = torch.from_numpy(rng.normal(size=(3, 2, 8, 8)) * 0.5)
        hist = torch.from_numpy(rng.uniform(0.01, 1.0, (12, 8, 8)))
        w = torch.from_numpy(rng.normal(size=(3, 8, 8, 8)))

        tensors = [x, flow, hist, *blk.parameters()]
        coords = sample_coords(tensors, 3, rng)
        coords += [(0, int(i)) for i in rng.choice(x.numel(), 16, replace=False)]
        analytic, fd = analytic_vs_fd(
            lambda: (blk(x, flow, hist) * w).sum(), tensors, coords, eps=1e-3,
            stability_filter=True,
        )
        assert relative_error(analytic, fd) < 1e-3

"""Network structure: pyramid geometry, heads, refinement, checkpoints."""

import numpy as np
import pytest

from aftal.model import (
    CoarseProposal,
    Detector,
    FeatureSequence,
    ModelConfig,
    boundary_regions,
    load_checkpoint,
    restore_into,
    save_checkpoint,
)
from aftal.tensorcore import Tensor


def make_detector(**kw):
    defaults = dict(in_channels=4, channels=8, num_classes=2, num_levels=3,
                    groups=2, seed=0)
    defaults.update(kw)
    return Detector(ModelConfig(**defaults))


def random_features(T=32, C=4, fps=4.0, seed=0):
    rng = np.random.default_rng(seed)
    return FeatureSequence(Tensor(rng.normal(size=(T, C))), frames_per_step=fps)


class TestPyramid:
    def test_halving_lengths(self):
        det = make_detector(num_levels=6)
        levels = det.build_pyramid(random_features(T=32))
        assert [lv.num_steps for lv in levels] == [32, 16, 8, 4, 2, 1]

    def test_single_level(self):
        det = make_detector(num_levels=1)
        levels = det.build_pyramid(random_features(T=32))
        assert len(levels) == 1 and levels[0].num_steps == 32

    def test_channels_identical_across_levels(self):
        det = make_detector(num_levels=4, channels=8)
        levels = det.build_pyramid(random_features(T=32))
        assert all(lv.num_channels == 8 for lv in levels)

    def test_ceil_halving_on_odd_lengths(self):
        det = make_detector(num_levels=3)
        levels = det.build_pyramid(random_features(T=13))
        lens = [lv.num_steps for lv in levels]
        for prev, cur in zip(lens, lens[1:]):
            assert cur == (prev + 1) // 2

    def test_too_short_base_rejected(self):
        det = make_detector(num_levels=6)
        with pytest.raises(ValueError):
            det.build_pyramid(random_features(T=16))

    def test_strides_double(self):
        det = make_detector(num_levels=4)
        levels = det.build_pyramid(random_features(T=32, fps=4.0))
        assert [lv.frames_per_step for lv in levels] == [4.0, 8.0, 16.0, 32.0]


class TestCoarsePrediction:
    def test_anchor_arithmetic(self):
        # psi = t - d_s, xi = t + d_e on a synthetic head output
        det = make_detector()
        feat = random_features(T=16)
        levels = det.build_pyramid(feat)
        _, _, proposals, anchors, start, end, _ = det.predict_coarse(levels[0], 0)
        d_s = anchors - start.numpy()
        d_e = end.numpy() - anchors
        assert np.all(d_s >= 0)
        # end extension keeps width at least eps_width
        assert np.all(end.numpy() - start.numpy() >= det.cfg.eps_width - 1e-12)

    def test_proposal_count_matches_level_length(self):
        det = make_detector()
        fwd = det.forward_clip(random_features(T=32))
        for lv in fwd.levels:
            n = len(lv.anchor_times)
            assert lv.coarse_logits.shape[0] == n
            assert lv.offsets.shape[0] == n
        total = sum(len(lv.anchor_times) for lv in fwd.levels)
        assert len(fwd.coarse_proposals()) == total
        assert len(fwd.refinements()) == total

    def test_width_clamp_on_zero_distances(self):
        det = make_detector()
        det.dist_head.w.data[:] = 0.0
        det.dist_head.b.data[:] = -5.0  # relu -> zero distances everywhere
        fwd = det.forward_clip(random_features(T=16))
        for lv in fwd.levels:
            widths = lv.end.numpy() - lv.start.numpy()
            np.testing.assert_allclose(widths, det.cfg.eps_width)

    def test_anchor_times_align_across_levels(self):
        det = make_detector(num_levels=3)
        fwd = det.forward_clip(random_features(T=32, fps=4.0))
        for lower, upper in zip(fwd.levels, fwd.levels[1:]):
            for i in range(0, len(lower.anchor_times) - 1, 2):
                assert lower.anchor_times[i] == upper.anchor_times[i // 2]

    def test_eq1_width_identity(self):
        # xi - psi = d_s + d_e for nondegenerate distances
        det = make_detector()
        feat = random_features(T=16, seed=3)
        levels = det.build_pyramid(feat)
        _, _, _, anchors, start, end, _ = det.predict_coarse(levels[0], 0)
        d_s = anchors - start.numpy()
        d_e_raw = end.numpy() - anchors
        mask = (d_s + d_e_raw) > det.cfg.eps_width + 1e-9
        np.testing.assert_allclose(
            (end.numpy() - start.numpy())[mask], (d_s + d_e_raw)[mask])


class TestBoundaryRegions:
    def proposal(self, start, end):
        return CoarseProposal(0, 0, start, end, np.zeros(3), (start + end) / 2)

    def test_substitution_fixture(self):
        regions = boundary_regions(self.proposal(10, 20), delta_a=4, delta_b=10)
        assert regions.start_region == (7.5, 11.0)
        assert regions.end_region == (19.0, 22.5)

    def test_symmetric_when_deltas_equal(self):
        regions = boundary_regions(self.proposal(10, 20), delta_a=5, delta_b=5)
        s_lo, s_hi = regions.start_region
        assert 10 - s_lo == pytest.approx(s_hi - 10)
        e_lo, e_hi = regions.end_region
        assert 20 - e_lo == pytest.approx(e_hi - 20)

    def test_nonpositive_deltas_rejected(self):
        with pytest.raises(ValueError):
            boundary_regions(self.proposal(0, 10), delta_a=0, delta_b=10)


class TestRefinement:
    def test_pooling_composition_max(self):
        # a planted spike inside the start region must surface in the pooled
        # feature that feeds refinement
        det = make_detector()
        feat = random_features(T=16, seed=4)
        levels = det.build_pyramid(feat)
        f_loc, _, _, _, start, end, _ = det.predict_coarse(levels[0], 0)
        sens = det.sens_loc_start(f_loc)
        s_lo, s_hi, _, _ = __import__("aftal.model.network", fromlist=["region_arrays"]).region_arrays(
            start.numpy(), end.numpy(), det.cfg.delta_a, det.cfg.delta_b)
        from aftal.tensorcore import region_max_pool_batch
        seq = levels[0].with_values(sens)
        pooled = region_max_pool_batch(sens, seq.frame_to_index(s_lo), seq.frame_to_index(s_hi))
        for i in range(pooled.shape[0]):
            lo = int(np.clip(np.floor(seq.frame_to_index(s_lo[i])), 0, 15))
            hi = int(np.clip(np.ceil(seq.frame_to_index(s_hi[i])), 0, 15))
            np.testing.assert_allclose(pooled.numpy()[i],
                                       sens.numpy()[lo:hi + 1].max(axis=0))

    def test_output_shapes_invariant_to_pooling_kind(self):
        shapes = {}
        for kind in ("max", "mean", "conv", "stack"):
            det = make_detector(pooling=kind)
            fwd = det.forward_clip(random_features(T=32, seed=5))
            shapes[kind] = [(lv.offsets.shape, lv.refined_logits.shape,
                             lv.quality_logits.shape) for lv in fwd.levels]
        assert len({tuple(map(tuple, s)) for s in map(tuple, shapes.values())}) == 1

    def test_enlarged_region_never_decreases_max_pool(self):
        rng = np.random.default_rng(6)
        from aftal.tensorcore import region_max_pool
        x = Tensor(rng.normal(size=(20, 5)))
        base = region_max_pool(x, (5, 9)).numpy()
        for grow in (1, 3, 5):
            bigger = region_max_pool(x, (5 - grow, 9 + grow)).numpy()
            assert np.all(bigger >= base)

    def test_forward_finite_and_backward_finite(self):
        det = make_detector(num_levels=4)
        fwd = det.forward_clip(random_features(T=32, seed=7))
        total = None
        for lv in fwd.levels:
            s = (lv.coarse_logits.sum() + lv.offsets.sum()
                 + lv.refined_logits.sum() + lv.quality_logits.sum()
                 + lv.start.sum() + lv.end.sum())
            total = s if total is None else total + s
        assert np.isfinite(total.item())
        total.backward()
        for name, p in det.parameters().items():
            if p.grad is not None:
                assert np.isfinite(p.grad).all(), name


class TestFrameFeature:
    def test_length_is_step_count_times_stride(self):
        det = make_detector()
        level0 = det.build_pyramid(random_features(T=32, fps=4.0))[0]
        f_frame = det.frame_level_feature(level0)
        assert f_frame.num_steps == 32 * 4
        assert f_frame.frames_per_step == 1.0

    def test_constant_preserved_through_upsample(self):
        from aftal.tensorcore import linear_upsample
        const = Tensor(np.full((8, 3), 2.5))
        up = linear_upsample(const, 4)
        np.testing.assert_allclose(up.numpy(), 2.5)

    def test_shared_across_proposals(self):
        # forward_clip computes one frame feature object used by every level
        det = make_detector()
        fwd = det.forward_clip(random_features(T=32))
        assert fwd.frame_feature.num_steps == 32 * 4

    def test_fractional_stride_rejected(self):
        det = make_detector()
        bad = random_features(T=32, fps=2.5)
        level0 = det.build_pyramid(bad)[0]
        with pytest.raises(ValueError):
            det.frame_level_feature(level0)


class TestCheckpoint:
    def test_round_trip_bitwise(self, tmp_path):
        det = make_detector(seed=11)
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, det.parameters())
        arrays = load_checkpoint(path)
        assert set(arrays) == set(det.parameters())
        for name, p in det.parameters().items():
            np.testing.assert_array_equal(arrays[name], p.data)
        save_checkpoint(tmp_path / "again.ckpt", det.parameters())
        assert (tmp_path / "model.ckpt").read_bytes() == (tmp_path / "again.ckpt").read_bytes()

    def test_restore_reproduces_forward(self, tmp_path):
        det = make_detector(seed=12)
        feat = random_features(T=32, seed=12)
        before = det.forward_clip(feat).levels[0].coarse_logits.numpy().copy()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, det.parameters())
        other = make_detector(seed=99)
        restore_into(other.parameters(), load_checkpoint(path))
        after = other.forward_clip(feat).levels[0].coarse_logits.numpy()
        np.testing.assert_array_equal(before, after)

    def test_mismatch_rejected(self, tmp_path):
        det = make_detector()
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, det.parameters())
        other = make_detector(channels=16)
        from aftal.model import CheckpointError
        with pytest.raises(CheckpointError):
            restore_into(other.parameters(), load_checkpoint(path))

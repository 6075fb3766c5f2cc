"""Boundary consistency learning: signals, rearrangement, triplet fixtures."""

import math

import numpy as np
import pytest

from aftal.losses import (
    Annotation,
    FragmentSpans,
    Instance,
    activation_guided_loss,
    boundary_contrastive_loss,
    boundary_indicator_signals,
    rearrange_clip,
)
from aftal.losses.consistency import _confidence
from aftal.model import FeatureSequence
from aftal.tensorcore import Tensor, check_gradients


class TestIndicatorSignals:
    def test_no_actions_all_zero(self):
        g_s, g_e = boundary_indicator_signals(50, Annotation([]), radius=2)
        assert not g_s.any() and not g_e.any()

    def test_single_action_neighborhood(self):
        g_s, g_e = boundary_indicator_signals(40, Annotation([Instance(10, 20, 1)]), radius=2)
        np.testing.assert_array_equal(np.nonzero(g_s)[0], [8, 9, 10, 11, 12])
        np.testing.assert_array_equal(np.nonzero(g_e)[0], [18, 19, 20, 21, 22])

    def test_binary_and_pure(self):
        ann = Annotation([Instance(5, 9, 1), Instance(20, 33, 2)])
        a = boundary_indicator_signals(64, ann, radius=3)
        b = boundary_indicator_signals(64, ann, radius=3)
        for g in a:
            assert set(np.unique(g)) <= {0.0, 1.0}
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])


class TestActivationGuidedLoss:
    def features(self, values):
        return FeatureSequence(Tensor(values), frames_per_step=1.0)

    def test_minmax_normalization_definition(self):
        vals = np.array([[1.0], [3.0], [2.0]])
        p = _confidence(Tensor(vals), "minmax").numpy()
        np.testing.assert_allclose(p, [1e-7, 1 - 1e-7, 0.5], atol=1e-6)

    def test_tanh_confidence_in_unit_interval(self):
        rng = np.random.default_rng(0)
        p = _confidence(Tensor(rng.normal(size=(20, 6)) * 4), "tanh").numpy()
        assert np.all(p > 0) and np.all(p < 1)

    def test_clip01_matches_manual(self):
        vals = np.array([[0.5, 2.0], [-1.0, 0.25]])
        p = _confidence(Tensor(vals), "clip01").numpy()
        np.testing.assert_allclose(p, [(0.5 + 1.0) / 2, (0.0 + 0.25) / 2], atol=1e-6)

    @pytest.mark.parametrize("norm", ["tanh", "clip01", "minmax"])
    def test_loss_finite_and_nonnegative(self, norm):
        rng = np.random.default_rng(1)
        f_s = self.features(rng.normal(size=(32, 4)))
        f_e = self.features(rng.normal(size=(32, 4)))
        ann = Annotation([Instance(8, 20, 1)])
        loss = activation_guided_loss(f_s, f_e, ann, radius=2, norm=norm)
        assert np.isfinite(loss.item()) and loss.item() >= 0.0

    def test_matched_activation_beats_mismatched(self):
        # high activation exactly at boundaries scores lower loss
        T = 40
        ann = Annotation([Instance(10, 25, 1)])
        good = np.full((T, 2), -3.0)
        good[8:13] = 3.0
        good_e = np.full((T, 2), -3.0)
        good_e[23:28] = 3.0
        flat = np.zeros((T, 2))
        loss_good = activation_guided_loss(self.features(good), self.features(good_e),
                                           ann, radius=2, norm="tanh").item()
        loss_flat = activation_guided_loss(self.features(flat), self.features(flat),
                                           ann, radius=2, norm="tanh").item()
        assert loss_good < loss_flat

    def test_gradients(self):
        rng = np.random.default_rng(2)
        ann = Annotation([Instance(3, 9, 1)])
        for norm in ("tanh", "clip01", "minmax"):
            x = Tensor(rng.normal(size=(12, 3)))
            y = Tensor(rng.normal(size=(12, 3)))
            report = check_gradients(
                lambda a, b: activation_guided_loss(
                    FeatureSequence(a, 1.0), FeatureSequence(b, 1.0), ann, 2, norm),
                [x, y])
            assert report.passed, f"{norm}: {report.summary()}"


class TestRearrangeClip:
    def test_single_action_ineligible(self):
        # only action has length w_min, so nothing exceeds 2 * w_min
        rng = np.random.default_rng(0)
        values = rng.normal(size=(100, 4))
        ann = Annotation([Instance(20, 50, 1)])
        assert rearrange_clip(values, 1.0, ann, rng) is None

    def test_no_background_ineligible(self):
        rng = np.random.default_rng(1)
        values = rng.normal(size=(30, 2))
        ann = Annotation([Instance(0, 8, 1), Instance(8, 30, 1)])
        assert rearrange_clip(values, 1.0, ann, rng) is None

    def test_eligible_split_bounds(self):
        # w_min = 10, action of 25 eligible, split leaves both halves >= 10
        rng = np.random.default_rng(2)
        values = rng.normal(size=(100, 3))
        ann = Annotation([Instance(5, 15, 1), Instance(40, 65, 2)])
        for _ in range(50):
            out = rearrange_clip(values, 1.0, ann, rng)
            assert out is not None
            f0, f1 = out.spans.first
            s0, s1 = out.spans.second
            assert f1 - f0 >= 10 and s1 - s0 >= 10
            split = f1
            assert 40 + 10 <= split <= 65 - 10

    def test_length_preserved_plus_wmin(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(80, 2))
        ann = Annotation([Instance(10, 18, 1), Instance(30, 60, 2)])
        out = rearrange_clip(values, 1.0, ann, rng)
        assert out is not None
        w_min = 8
        assert out.values.shape[0] == 80 + w_min
        bg0, bg1 = out.spans.background
        assert bg1 - bg0 == w_min
        # |A1| + |Bg| + |A2| = |A| + w_min
        total = (out.spans.first[1] - out.spans.first[0]) + (bg1 - bg0) \
            + (out.spans.second[1] - out.spans.second[0])
        assert total == (60 - 30) + w_min

    def test_fragment_content_comes_from_source(self):
        rng = np.random.default_rng(4)
        values = np.arange(60, dtype=np.float64)[:, None]
        ann = Annotation([Instance(5, 10, 1), Instance(20, 45, 2)])
        out = rearrange_clip(values, 1.0, ann, rng)
        assert out is not None
        split = int(out.spans.first[1])
        bg_len = int(out.spans.background[1] - out.spans.background[0])
        np.testing.assert_array_equal(out.values[:split], values[:split])
        np.testing.assert_array_equal(out.values[split + bg_len:], values[split:])
        # inserted block is a contiguous background slice
        bg = out.values[split:split + bg_len, 0]
        start = int(bg[0])
        np.testing.assert_array_equal(bg, np.arange(start, start + bg_len))
        assert start + bg_len <= 20 or start >= 45  # background region only

    def test_annotation_shifted_after_split(self):
        rng = np.random.default_rng(5)
        values = rng.normal(size=(100, 2))
        ann = Annotation([Instance(10, 16, 1), Instance(30, 70, 2), Instance(80, 90, 3)])
        out = rearrange_clip(values, 1.0, ann, rng)
        assert out is not None
        labels = sorted(i.label for i in out.annotation.instances)
        assert labels == [1, 2, 2, 3]
        late = [i for i in out.annotation.instances if i.label == 3][0]
        assert late.start == 80 + 6 and late.end == 90 + 6

    def test_row_units_respected(self):
        rng = np.random.default_rng(6)
        values = rng.normal(size=(50, 2))
        # frames at fps 4: rows 5..30 (25 rows) and rows 22->26 would overlap,
        # so keep the short action clear of the long one
        ann = Annotation([Instance(20, 120, 1), Instance(160, 176, 2)])
        out = rearrange_clip(values, 4.0, ann, rng)
        assert out is not None
        # background insert of w_min = 4 rows
        assert out.values.shape[0] == 54


class TestTripletLoss:
    def features(self, values):
        return FeatureSequence(Tensor(values), frames_per_step=1.0)

    def spans(self):
        return FragmentSpans(first=(10, 30), background=(30, 40), second=(40, 60))

    def constant_features(self, T, vec):
        return np.tile(np.asarray(vec, dtype=np.float64), (T, 1))

    def test_all_equal_features_give_margin(self):
        f = self.features(self.constant_features(70, [0.5, 0.25]))
        loss = boundary_contrastive_loss(f, f, self.spans())
        assert loss.item() == pytest.approx(1.0, abs=1e-12)

    def test_margin_satisfied_gives_zero(self):
        # saliency spikes at the true boundary moments: anchor == positive,
        # background pools stay at zero, so every margin is satisfied
        T = 70
        e_vals = np.zeros((T, 2))
        e_vals[29] = [10.0, 0.0]        # end signature of the first fragment
        s_vals = np.zeros((T, 2))
        s_vals[40] = [10.0, 0.0]        # start signature of the second fragment
        loss = boundary_contrastive_loss(
            self.features(s_vals), self.features(e_vals), self.spans())
        assert loss.item() == 0.0

    def test_substitution_fixtures(self):
        # direct Eq-style check: distances (0, 2) -> 0 and (1, 0.5) -> 1.5
        def trip(pos_d, neg_d):
            return max(pos_d - neg_d + 1.0, 0.0)

        assert trip(0.0, 2.0) == 0.0
        assert trip(1.0, 0.5) == 1.5

    def test_pooled_distances_match_formula(self):
        rng = np.random.default_rng(7)
        T = 70
        s_vals = rng.normal(size=(T, 3))
        e_vals = rng.normal(size=(T, 3))
        f_s, f_e = self.features(s_vals), self.features(e_vals)
        spans = self.spans()
        loss = boundary_contrastive_loss(f_s, f_e, spans, delta_a=4.0, delta_b=100.0)

        def pool(vals, lo, hi):
            a = max(int(np.floor(lo)), 0)
            b = min(int(np.ceil(hi)), T - 1)
            return vals[a:b + 1].max(axis=0)

        w1 = spans.first[1] - spans.first[0]
        w2 = spans.second[1] - spans.second[0]
        wb = spans.background[1] - spans.background[0]
        anchor = pool(e_vals, spans.first[1] - w1 / 100.0, spans.first[1] + w1 / 4.0)
        positive = pool(s_vals, spans.second[0] - w2 / 4.0, spans.second[0] + w2 / 100.0)
        neg_s = pool(s_vals, spans.background[0] - wb / 4.0, spans.background[0] + wb / 100.0)
        neg_e = pool(e_vals, spans.background[1] - wb / 100.0, spans.background[1] + wb / 4.0)
        pos_d = ((anchor - positive) ** 2).sum()
        expect = np.mean([
            max(pos_d - ((anchor - neg_s) ** 2).sum() + 1.0, 0.0),
            max(pos_d - ((anchor - neg_e) ** 2).sum() + 1.0, 0.0),
        ])
        assert loss.item() == pytest.approx(expect, rel=1e-12)

    def test_confused_background_pays_margin(self):
        # background indistinguishable from the fragments: all pooled
        # features coincide, so the loss sits exactly at the margin
        T = 70
        base = np.ones((T, 2)) * 0.3
        loss = boundary_contrastive_loss(
            self.features(base), self.features(base.copy()), self.spans())
        assert loss.item() == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_flag_adds_terms(self):
        rng = np.random.default_rng(8)
        vals_s = rng.normal(size=(70, 3))
        vals_e = rng.normal(size=(70, 3))
        f_s, f_e = self.features(vals_s), self.features(vals_e)
        plain = boundary_contrastive_loss(f_s, f_e, self.spans(), symmetric=False)
        sym = boundary_contrastive_loss(f_s, f_e, self.spans(), symmetric=True)
        assert np.isfinite(plain.item()) and np.isfinite(sym.item())

    def test_gradients_flow_to_features(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.normal(size=(70, 3)))
        y = Tensor(rng.normal(size=(70, 3)))
        spans = self.spans()
        report = check_gradients(
            lambda a, b: boundary_contrastive_loss(
                FeatureSequence(a, 1.0), FeatureSequence(b, 1.0), spans),
            [x, y])
        assert report.passed, report.summary()

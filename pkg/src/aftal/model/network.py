"""Anchor-free temporal detector: pyramid, coarse heads, saliency refinement.

The network maps a feature sequence to, per pyramid level, coarse boundary
distances and class logits, then refines each coarse proposal using boundary
max pooling over start/end regions of start- and end-sensitive projections,
both on the level feature and on a shared frame-level feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tensorcore import (
    Tensor,
    concat,
    conv1d,
    group_norm,
    linear_upsample,
    parameter,
    region_conv_pool_batch,
    region_max_pool_batch,
    region_mean_pool_batch,
    region_stack_pool_batch,
)
from .sequence import FeatureSequence

POOLING_KINDS = ("max", "mean", "conv", "stack")


@dataclass
class ModelConfig:
    in_channels: int
    channels: int = 64
    num_classes: int = 3            # foreground classes; background is logit 0
    num_levels: int = 4
    groups: int = 8
    pooling: str = "max"
    delta_a: float = 4.0
    delta_b: float = 10.0
    eps_width: float = 1.0          # minimum proposal width, frames
    seed: int = 0
    dtype: str = "f64"

    def __post_init__(self):
        if self.pooling not in POOLING_KINDS:
            raise ValueError(f"pooling must be one of {POOLING_KINDS}")
        if self.channels % self.groups != 0:
            raise ValueError("channels must be divisible by groups")
        if self.delta_a <= 0 or self.delta_b <= 0:
            raise ValueError("region proportions delta_a/delta_b must be positive")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64


@dataclass
class CoarseProposal:
    level: int
    index: int
    start: float                    # frames
    end: float                      # frames
    class_logits: np.ndarray
    anchor_time: float = 0.0        # frame time of the emitting location


@dataclass
class Refinement:
    d_start: float                  # width-relative offset
    d_end: float
    class_logits: np.ndarray
    quality_logit: float


@dataclass
class BoundaryRegions:
    start_region: tuple[float, float]
    end_region: tuple[float, float]


def boundary_regions(p: CoarseProposal, delta_a: float, delta_b: float) -> BoundaryRegions:
    """Start/end pooling regions around a proposal's boundaries.

    With width w = end - start, the start region spans
    [start - w/delta_a, start + w/delta_b] and the end region mirrors it;
    delta_a scales the part outside the proposal, delta_b the part inside.
    """
    if delta_a <= 0 or delta_b <= 0:
        raise ValueError("delta_a and delta_b must be positive")
    w = p.end - p.start
    return BoundaryRegions(
        start_region=(p.start - w / delta_a, p.start + w / delta_b),
        end_region=(p.end - w / delta_b, p.end + w / delta_a),
    )


def region_arrays(starts: np.ndarray, ends: np.ndarray,
                  delta_a: float, delta_b: float) -> tuple[np.ndarray, ...]:
    """Vectorized boundary_regions over proposal arrays (frames)."""
    w = ends - starts
    return (starts - w / delta_a, starts + w / delta_b,
            ends - w / delta_b, ends + w / delta_a)


class _Conv:
    def __init__(self, store, name, k, c_in, c_out, stride=1, rng=None, bias_fill=0.0):
        scale = np.sqrt(2.0 / (k * c_in))
        self.w = store.add(f"{name}.w", rng.normal(0.0, scale, size=(k, c_in, c_out)))
        self.b = store.add(f"{name}.b", np.full(c_out, bias_fill))
        self.stride = stride
        self.pad = k // 2

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d(x, self.w, self.b, stride=self.stride, pad=self.pad)


class _Norm:
    def __init__(self, store, name, channels, groups):
        self.gamma = store.add(f"{name}.gamma", np.ones(channels))
        self.beta = store.add(f"{name}.beta", np.zeros(channels))
        self.groups = groups

    def __call__(self, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, self.gamma, self.beta)


class _ConvNormRelu:
    def __init__(self, store, name, k, c_in, c_out, groups, stride=1, rng=None):
        self.conv = _Conv(store, name, k, c_in, c_out, stride=stride, rng=rng)
        self.norm = _Norm(store, f"{name}.norm", c_out, groups)

    def __call__(self, x: Tensor) -> Tensor:
        return self.norm(self.conv(x)).relu()


class _ParamStore:
    def __init__(self, dtype):
        self.params: dict[str, Tensor] = {}
        self.dtype = dtype

    def add(self, name: str, array) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        p = parameter(np.asarray(array, dtype=self.dtype))
        self.params[name] = p
        return p


@dataclass
class LevelForward:
    """Everything the losses and the decoder need for one pyramid level."""

    level: int
    anchor_times: np.ndarray        # [T_l] frames
    frames_per_step: float
    start: Tensor                   # [T_l] coarse start, frames
    end: Tensor                     # [T_l] coarse end, frames (width clamped)
    coarse_logits: Tensor           # [T_l x (num_classes + 1)]
    regions: tuple[np.ndarray, ...]  # start_lo, start_hi, end_lo, end_hi (frames)
    offsets: Tensor                 # [T_l x 2] refined offsets (d_start, d_end)
    refined_logits: Tensor          # [T_l x (num_classes + 1)]
    quality_logits: Tensor          # [T_l]


@dataclass
class ClipForward:
    levels: list[LevelForward]
    frame_feature: FeatureSequence
    frame_start_sensitive: FeatureSequence
    frame_end_sensitive: FeatureSequence

    def coarse_proposals(self) -> list[CoarseProposal]:
        out = []
        for lv in self.levels:
            logits = lv.coarse_logits.numpy()
            starts = lv.start.numpy()
            ends = lv.end.numpy()
            for i in range(len(starts)):
                out.append(CoarseProposal(lv.level, i, float(starts[i]), float(ends[i]),
                                          logits[i].copy(), float(lv.anchor_times[i])))
        return out

    def refinements(self) -> list[Refinement]:
        out = []
        for lv in self.levels:
            offs = lv.offsets.numpy()
            logits = lv.refined_logits.numpy()
            quality = lv.quality_logits.numpy()
            for i in range(offs.shape[0]):
                out.append(Refinement(float(offs[i, 0]), float(offs[i, 1]),
                                      logits[i].copy(), float(quality[i])))
        return out


class Detector:
    """Pyramid + coarse prediction + boundary-pooling refinement."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        self.store = _ParamStore(cfg.np_dtype)
        rng = np.random.default_rng(cfg.seed)
        c = cfg.channels
        g = cfg.groups
        kc = cfg.num_classes + 1

        self.proj = _ConvNormRelu(self.store, "pyramid.proj", 3, cfg.in_channels, c, g, rng=rng)
        self.downs = [
            _ConvNormRelu(self.store, f"pyramid.down{l}", 3, c, c, g, stride=2, rng=rng)
            for l in range(1, cfg.num_levels)
        ]

        self.loc_branch = [_ConvNormRelu(self.store, f"branch.loc{i}", 3, c, c, g, rng=rng)
                           for i in range(2)]
        self.cls_branch = [_ConvNormRelu(self.store, f"branch.cls{i}", 3, c, c, g, rng=rng)
                           for i in range(2)]

        # distance head bias > 0 keeps early proposals non-degenerate; class
        # head bias favors background so the focal loss starts calm
        self.dist_head = _Conv(self.store, "head.dist", 3, c, 2, rng=rng, bias_fill=1.0)
        self.cls_head = _Conv(self.store, "head.cls", 3, c, kc, rng=rng)
        self.cls_head.b.data[1:] = -4.0

        self.sens_loc_start = _ConvNormRelu(self.store, "sens.loc_start", 3, c, c, g, rng=rng)
        self.sens_loc_end = _ConvNormRelu(self.store, "sens.loc_end", 3, c, c, g, rng=rng)
        self.sens_cls_start = _ConvNormRelu(self.store, "sens.cls_start", 3, c, c, g, rng=rng)
        self.sens_cls_end = _ConvNormRelu(self.store, "sens.cls_end", 3, c, c, g, rng=rng)

        self.frame_convs = [_ConvNormRelu(self.store, f"frame.conv{i}", 3, c, c, g, rng=rng)
                            for i in range(2)]
        self.frame_start = _ConvNormRelu(self.store, "frame.start", 3, c, c, g, rng=rng)
        self.frame_end = _ConvNormRelu(self.store, "frame.end", 3, c, c, g, rng=rng)

        pooled_c = 3 * c if cfg.pooling == "stack" else c
        reduce_in = c + 4 * pooled_c
        self.loc_reduce = _ConvNormRelu(self.store, "refine.loc_reduce", 3, reduce_in, c, g, rng=rng)
        self.cls_reduce = _ConvNormRelu(self.store, "refine.cls_reduce", 3, reduce_in, c, g, rng=rng)
        self.offset_head = _Conv(self.store, "refine.offset", 3, c, 2, rng=rng)
        self.quality_head = _Conv(self.store, "refine.quality", 3, c, 1, rng=rng)
        self.refined_cls_head = _Conv(self.store, "refine.cls", 3, c, kc, rng=rng)
        self.cls_head_refined_bias_init()

        if cfg.pooling == "conv":
            self.pool_taps = self.store.add("pool.taps", np.full(3, 1.0 / 3.0))
        else:
            self.pool_taps = None

    def cls_head_refined_bias_init(self):
        self.refined_cls_head.b.data[1:] = -4.0

    def parameters(self) -> dict[str, Tensor]:
        return self.store.params

    def zero_grad(self) -> None:
        for p in self.store.params.values():
            p.zero_grad()

    # -- pyramid ---------------------------------------------------------------

    def build_pyramid(self, base: FeatureSequence) -> list[FeatureSequence]:
        """Level 0 projects the base; each deeper level halves the length."""
        need = 2 ** (self.cfg.num_levels - 1)
        if base.num_steps < need:
            raise ValueError(
                f"base sequence of {base.num_steps} steps too short for "
                f"{self.cfg.num_levels} levels (needs >= {need})")
        levels = [base.with_values(self.proj(base.values))]
        for down in self.downs:
            prev = levels[-1]
            levels.append(FeatureSequence(
                values=down(prev.values),
                frames_per_step=prev.frames_per_step * 2,
                origin_frame=prev.origin_frame,
            ))
        return levels

    # -- frame-level feature -----------------------------------------------------

    def frame_level_feature(self, level0: FeatureSequence) -> FeatureSequence:
        """Upsample the bottom level to the frame grid, then refine with convs."""
        factor = int(round(level0.frames_per_step))
        if factor < 1 or abs(factor - level0.frames_per_step) > 1e-9:
            raise ValueError("frame-level feature needs an integer frames_per_step")
        x = linear_upsample(level0.values, factor)
        for conv in self.frame_convs:
            x = conv(x)
        return FeatureSequence(values=x, frames_per_step=1.0,
                               origin_frame=level0.origin_frame)

    def forward_frame_path(self, features: FeatureSequence) -> tuple[FeatureSequence, FeatureSequence]:
        """Frame-level sensitive features only (used by consistency learning)."""
        level0 = features.with_values(self.proj(features.values))
        f_frame = self.frame_level_feature(level0)
        return (f_frame.with_values(self.frame_start(f_frame.values)),
                f_frame.with_values(self.frame_end(f_frame.values)))

    # -- coarse prediction ---------------------------------------------------------

    def predict_coarse(self, level_feat: FeatureSequence, level: int):
        """Coarse boundaries and class logits for one level.

        Returns (f_loc, f_cls, proposals).  Distances come from a shared head
        via relu, scaled by the level stride, so start <= anchor <= end always
        holds; widths are clamped below eps_width frames by extending the end.
        """
        f_loc = level_feat.values
        for conv in self.loc_branch:
            f_loc = conv(f_loc)
        f_cls = level_feat.values
        for conv in self.cls_branch:
            f_cls = conv(f_cls)

        dist = self.dist_head(f_loc).relu() * level_feat.frames_per_step
        anchors = level_feat.step_times()
        anchors_t = Tensor(anchors.astype(dist.dtype))
        n = len(anchors)
        d_start = dist.gather_cols(np.zeros(n, dtype=np.intp))
        d_end = dist.gather_cols(np.ones(n, dtype=np.intp))
        start = anchors_t - d_start
        width = (d_start + d_end).maximum(self.cfg.eps_width)
        end = start + width
        coarse_logits = self.cls_head(f_cls)

        proposals = [
            CoarseProposal(level, i, float(start.data[i]), float(end.data[i]),
                           coarse_logits.data[i].copy(), float(anchors[i]))
            for i in range(n)
        ]
        return f_loc, f_cls, proposals, anchors, start, end, coarse_logits

    # -- refinement ------------------------------------------------------------------

    def _pool(self, feat: FeatureSequence, lo_frames, hi_frames) -> Tensor:
        lo = feat.frame_to_index(lo_frames)
        hi = feat.frame_to_index(hi_frames)
        kind = self.cfg.pooling
        if kind == "max":
            return region_max_pool_batch(feat.values, lo, hi)
        if kind == "mean":
            return region_mean_pool_batch(feat.values, lo, hi)
        if kind == "stack":
            return region_stack_pool_batch(feat.values, lo, hi)
        return region_conv_pool_batch(feat.values, lo, hi, self.pool_taps)

    def refine_level(self, level_feat: FeatureSequence, f_loc: Tensor, f_cls: Tensor,
                     start_np: np.ndarray, end_np: np.ndarray,
                     frame_start: FeatureSequence, frame_end: FeatureSequence):
        """Boundary-pooled refinement for one level's proposals.

        Regions are constants of this pass (no gradient into the coarse
        boundaries); both branch paths pool the shared frame-level
        sensitive features.
        """
        s_lo, s_hi, e_lo, e_hi = region_arrays(
            start_np, end_np, self.cfg.delta_a, self.cfg.delta_b)

        loc_seq = level_feat.with_values(f_loc)
        cls_seq = level_feat.with_values(f_cls)
        s_loc = loc_seq.with_values(self.sens_loc_start(f_loc))
        e_loc = loc_seq.with_values(self.sens_loc_end(f_loc))
        s_cls = cls_seq.with_values(self.sens_cls_start(f_cls))
        e_cls = cls_seq.with_values(self.sens_cls_end(f_cls))

        loc_cat = concat([
            f_loc,
            self._pool(s_loc, s_lo, s_hi),
            self._pool(e_loc, e_lo, e_hi),
            self._pool(frame_start, s_lo, s_hi),
            self._pool(frame_end, e_lo, e_hi),
        ], axis=1)
        cls_cat = concat([
            f_cls,
            self._pool(s_cls, s_lo, s_hi),
            self._pool(e_cls, e_lo, e_hi),
            self._pool(frame_start, s_lo, s_hi),
            self._pool(frame_end, e_lo, e_hi),
        ], axis=1)

        loc_refined = self.loc_reduce(loc_cat)
        cls_refined = self.cls_reduce(cls_cat)
        offsets = self.offset_head(loc_refined)
        n = offsets.shape[0]
        quality = self.quality_head(loc_refined).gather_cols(np.zeros(n, dtype=np.intp))
        refined_logits = self.refined_cls_head(cls_refined)
        return offsets, refined_logits, quality, (s_lo, s_hi, e_lo, e_hi)

    # -- full forward pass ----------------------------------------------------------

    def forward_clip(self, features: FeatureSequence) -> ClipForward:
        levels = self.build_pyramid(features)
        f_frame = self.frame_level_feature(levels[0])
        frame_start = f_frame.with_values(self.frame_start(f_frame.values))
        frame_end = f_frame.with_values(self.frame_end(f_frame.values))

        level_outputs = []
        for l, level_feat in enumerate(levels):
            f_loc, f_cls, _, anchors, start, end, coarse_logits = \
                self.predict_coarse(level_feat, l)
            offsets, refined_logits, quality, regions = self.refine_level(
                level_feat, f_loc, f_cls, start.data, end.data,
                frame_start, frame_end)
            level_outputs.append(LevelForward(
                level=l,
                anchor_times=anchors,
                frames_per_step=level_feat.frames_per_step,
                start=start,
                end=end,
                coarse_logits=coarse_logits,
                regions=regions,
                offsets=offsets,
                refined_logits=refined_logits,
                quality_logits=quality,
            ))
        return ClipForward(
            levels=level_outputs,
            frame_feature=f_frame,
            frame_start_sensitive=frame_start,
            frame_end_sensitive=frame_end,
        )

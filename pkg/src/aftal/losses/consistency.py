"""Boundary consistency learning: activation guidance and fragment contrast.

The activation term pushes the channel mean of the start/end sensitive
features toward binary indicators of annotated boundaries.  The contrastive
term splits one action, inserts background between the halves, and demands
that the pooled end feature of the first half stays closer to the pooled
start feature of the second half than to the background's pooled features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import FeatureSequence, region_arrays
from ..tensorcore import Tensor, region_max_pool
from .assignment import Annotation, Instance
from .detection import bce_with_logits

NORM_KINDS = ("tanh", "clip01", "minmax")
_EPS = 1e-7


def boundary_indicator_signals(num_steps: int, ann: Annotation,
                               radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Binary start/end signals: 1 within ``radius`` steps of a boundary."""
    g_s = np.zeros(num_steps)
    g_e = np.zeros(num_steps)
    idx = np.arange(num_steps)
    for inst in ann.instances:
        g_s[np.abs(idx - inst.start) <= radius] = 1.0
        g_e[np.abs(idx - inst.end) <= radius] = 1.0
    return g_s, g_e


def _confidence(values: Tensor, norm: str) -> Tensor:
    """Per-step confidence in (0, 1) from a [T x C] feature block.

    The sensitive features are rectified, so the channel mean of tanh already
    lies in [0, 1); negative inputs are absorbed by the final clamp.
    """
    if norm == "tanh":
        p = values.tanh().mean(axis=1)
    elif norm == "clip01":
        p = values.maximum(0.0).minimum(1.0).mean(axis=1)
    elif norm == "minmax":
        m = values.mean(axis=1)
        lo = m.take_rows(np.array([int(np.argmin(m.data))]))
        hi = m.take_rows(np.array([int(np.argmax(m.data))]))
        span = (hi - lo).maximum(_EPS)
        p = (m - lo) / span
    else:
        raise ValueError(f"norm must be one of {NORM_KINDS}")
    return p.maximum(_EPS).minimum(1.0 - _EPS)


def activation_guided_loss(f_s: FeatureSequence, f_e: FeatureSequence,
                           ann: Annotation, radius: int = 2,
                           norm: str = "tanh") -> Tensor:
    """BCE between boundary indicators and normalized channel-mean activations."""
    if f_s.num_steps != f_e.num_steps:
        raise ValueError("start/end sensitive features must share a grid")
    steps = f_s.num_steps
    step_ann = Annotation([
        Instance(start=f_s.frame_to_index(i.start), end=f_s.frame_to_index(i.end),
                 label=i.label)
        for i in ann.instances
    ])
    g_s, g_e = boundary_indicator_signals(steps, step_ann, radius)
    p_s = _confidence(f_s.values, norm)
    p_e = _confidence(f_e.values, norm)

    def bce(p: Tensor, g: np.ndarray) -> Tensor:
        gt = Tensor(g)
        return -(gt * p.log() + (1.0 - gt) * (1.0 - p).log()).mean()

    return bce(p_s, g_s) + bce(p_e, g_e)


@dataclass
class FragmentSpans:
    """Frame spans of the rearranged pieces (first half, background, second half)."""
    first: tuple[float, float]
    background: tuple[float, float]
    second: tuple[float, float]


@dataclass
class RearrangedClip:
    values: np.ndarray              # [T' x C] raw feature rows
    frames_per_step: float
    annotation: Annotation
    spans: FragmentSpans


def _background_blocks(num_rows: int, instances_rows: list[tuple[int, int]]) -> list[tuple[int, int]]:
    covered = np.zeros(num_rows, dtype=bool)
    for a, b in instances_rows:
        covered[max(a, 0):min(b, num_rows)] = True
    blocks = []
    start = None
    for i in range(num_rows):
        if not covered[i] and start is None:
            start = i
        elif covered[i] and start is not None:
            blocks.append((start, i))
            start = None
    if start is not None:
        blocks.append((start, num_rows))
    return blocks


def rearrange_clip(values: np.ndarray, frames_per_step: float, ann: Annotation,
                   rng: np.random.Generator) -> RearrangedClip | None:
    """Split one action and insert a background block between the halves.

    Eligibility follows the minimal action length w_min of the clip: some
    action must be strictly longer than 2 * w_min and a contiguous background
    block of at least w_min must exist.  Returns None when ineligible.
    Lengths are handled in feature rows so the feature matrix can be
    rearranged without resampling.
    """
    if not ann.instances:
        return None
    num_rows = values.shape[0]
    fps = frames_per_step

    inst_rows = []
    for inst in ann.instances:
        a = int(np.floor(inst.start / fps))
        b = int(np.ceil(inst.end / fps))
        inst_rows.append((max(a, 0), min(b, num_rows)))
    widths = [(b - a) for a, b in inst_rows]
    if min(widths) < 1:
        return None
    w_min = min(widths)

    eligible = [k for k, w in enumerate(widths) if w > 2 * w_min]
    blocks = [blk for blk in _background_blocks(num_rows, inst_rows)
              if blk[1] - blk[0] >= w_min]
    if not eligible or not blocks:
        return None

    k = int(rng.choice(eligible))
    a, b = inst_rows[k]
    # uniform split leaving both fragments at least w_min rows
    split = int(rng.integers(a + w_min, b - w_min + 1))

    blk = blocks[int(rng.integers(len(blocks)))]
    bg_start = int(rng.integers(blk[0], blk[1] - w_min + 1))
    bg = values[bg_start:bg_start + w_min]

    new_values = np.concatenate([values[:split], bg, values[split:]], axis=0)

    chosen = ann.instances[k]
    new_instances = []
    shift = w_min * fps
    for m, inst in enumerate(ann.instances):
        if m == k:
            continue
        if inst.start >= split * fps:
            new_instances.append(Instance(inst.start + shift, inst.end + shift, inst.label))
        else:
            new_instances.append(Instance(inst.start, inst.end, inst.label))
    first = Instance(a * fps, split * fps, chosen.label)
    second = Instance((split + w_min) * fps, (b + w_min) * fps, chosen.label)
    new_instances.extend([first, second])
    new_instances.sort(key=lambda i: i.start)

    spans = FragmentSpans(
        first=(first.start, first.end),
        background=(split * fps, (split + w_min) * fps),
        second=(second.start, second.end),
    )
    return RearrangedClip(
        values=new_values,
        frames_per_step=frames_per_step,
        annotation=Annotation(new_instances),
        spans=spans,
    )


def _pool_region(feat: FeatureSequence, region: tuple[float, float]) -> Tensor:
    lo, hi = feat.frame_to_index(region[0]), feat.frame_to_index(region[1])
    return region_max_pool(feat.values, (float(lo), float(hi)))


def boundary_contrastive_loss(f_s: FeatureSequence, f_e: FeatureSequence,
                              spans: FragmentSpans, delta_a: float = 4.0,
                              delta_b: float = 100.0, margin: float = 1.0,
                              symmetric: bool = False) -> Tensor:
    """Triplet margin over pooled boundary features of the rearranged clip.

    Anchor: pooled end feature of the first fragment.  Positive: pooled
    start feature of the second fragment.  Negatives: the background's
    pooled start and end features; the loss averages over both.
    """
    def regions(span):
        s_lo, s_hi, e_lo, e_hi = region_arrays(
            np.array([span[0]]), np.array([span[1]]), delta_a, delta_b)
        return (float(s_lo[0]), float(s_hi[0])), (float(e_lo[0]), float(e_hi[0]))

    _, first_end_region = regions(spans.first)
    second_start_region, _ = regions(spans.second)
    bg_start_region, bg_end_region = regions(spans.background)

    anchor = _pool_region(f_e, first_end_region)
    positive = _pool_region(f_s, second_start_region)
    negatives = [
        _pool_region(f_s, bg_start_region),
        _pool_region(f_e, bg_end_region),
    ]

    def sq_dist(u: Tensor, v: Tensor) -> Tensor:
        return ((u - v) ** 2.0).sum()

    terms = []
    pos_d = sq_dist(anchor, positive)
    for neg in negatives:
        terms.append((pos_d - sq_dist(anchor, neg) + margin).maximum(0.0))
    if symmetric:
        for neg in negatives:
            terms.append((pos_d - sq_dist(positive, neg) + margin).maximum(0.0))
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))

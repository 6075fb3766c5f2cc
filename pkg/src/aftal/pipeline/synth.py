"""Seeded synthetic feature datasets with plantable boundary structure.

Each action imprints three things on a noisy feature matrix: a sustained
class-specific body pattern, a shared onset signature in a short window after
the start, and a shared offset signature before the end.  Row weights follow
fractional overlap with the feature grid, so boundaries carry sub-row
information.  Unannotated confuser segments copy a weak body pattern without
boundary signatures, giving the quality and consistency terms something to
reject.  With signal_to_noise 0 the features are pure noise.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field

import numpy as np

from ..losses import Annotation, Instance
from .records import VideoRecord


@dataclass
class SynthSpec:
    num_train: int = 20
    num_test: int = 5
    num_classes: int = 3
    channels: int = 16
    frames_per_step: int = 4
    fps: float = 10.0
    min_frames: int = 320
    max_frames: int = 640
    min_actions: int = 2
    max_actions: int = 4
    min_action: int = 32            # frames
    max_action: int = 144
    min_gap: int = 24
    boundary_frames: int = 6
    boundary_strength: float = 0.6  # onset/offset amplitude vs body
    ramp_frames: int = 16           # body fade-in/out; blurs the boundary
    signal_to_noise: float = 2.0
    confusers_per_video: int = 1
    confuser_strength: float = 0.5  # relative to signal_to_noise

    def __post_init__(self):
        if self.num_classes < 1 or self.num_classes > 26:
            raise ValueError("1..26 classes supported")
        if self.min_action <= 2 * self.boundary_frames:
            raise ValueError("actions must be longer than both boundary windows")


def class_labels(num_classes: int) -> list[str]:
    return [f"class_{string.ascii_lowercase[k]}" for k in range(num_classes)]


def _coverage(length_rows: int, start: float, end: float, s: float) -> np.ndarray:
    """Fraction of each feature row covered by the frame interval [start, end)."""
    edges = np.arange(length_rows + 1) * s
    lo = np.maximum(edges[:-1], start)
    hi = np.minimum(edges[1:], end)
    return np.clip(hi - lo, 0.0, None) / s


def _ramped_profile(length_rows: int, start: float, end: float, s: float,
                    ramp: float) -> np.ndarray:
    """Row weights of a trapezoid: 0 at the boundaries, 1 after `ramp` frames."""
    if ramp <= 0:
        return _coverage(length_rows, start, end, s)
    frames = np.arange(length_rows * int(s)) + 0.5
    up = np.clip((frames - start) / ramp, 0.0, 1.0)
    down = np.clip((end - frames) / ramp, 0.0, 1.0)
    profile = np.minimum(up, down) * ((frames >= start) & (frames < end))
    return profile.reshape(length_rows, int(s)).mean(axis=1)


def _place_segments(rng, total: int, lengths: list[int], min_gap: int) -> list[int]:
    """Random non-overlapping placement; returns start frames (or fewer)."""
    starts = []
    n = len(lengths)
    while n > 0:
        slack = total - sum(lengths[:n]) - (n + 1) * min_gap
        if slack >= 0:
            break
        n -= 1
    if n == 0:
        return starts
    cuts = np.sort(rng.integers(0, slack + 1, size=n))
    cursor = min_gap
    prev_cut = 0
    for i in range(n):
        cursor += int(cuts[i] - prev_cut)
        prev_cut = int(cuts[i])
        starts.append(cursor)
        cursor += lengths[i] + min_gap
    return starts


def synth_dataset(seed: int, spec: SynthSpec) -> tuple[list[VideoRecord], list[str], dict[str, list[str]]]:
    """Deterministic dataset of train/test video records plus split lists."""
    rng = np.random.default_rng(seed)
    labels = class_labels(spec.num_classes)
    c = spec.channels

    def unit(v):
        return v / np.linalg.norm(v)

    body = np.stack([unit(rng.normal(size=c)) for _ in range(spec.num_classes)])
    onset = unit(rng.normal(size=c))
    offset = unit(rng.normal(size=c))

    label_cycle = 0
    records = []
    splits = {"train": [], "test": []}
    plan = [("train", i) for i in range(spec.num_train)] + \
           [("test", i) for i in range(spec.num_test)]
    for split, i in plan:
        video_id = f"{split}_{i:04d}"
        s = spec.frames_per_step
        frames = int(rng.integers(spec.min_frames, spec.max_frames + 1)) // s * s
        rows = frames // s
        values = rng.normal(size=(rows, c))

        n_act = int(rng.integers(spec.min_actions, spec.max_actions + 1))
        lengths = [int(rng.integers(spec.min_action, spec.max_action + 1))
                   for _ in range(n_act)]
        starts = _place_segments(rng, frames, lengths, spec.min_gap)

        amp = spec.signal_to_noise
        b_amp = amp * spec.boundary_strength
        instances = []
        for start, length in zip(starts, lengths):
            end = start + length
            label = label_cycle % spec.num_classes + 1
            label_cycle += 1
            instances.append(Instance(float(start), float(end), label))
            ramp = min(spec.ramp_frames, length / 2)
            values += amp * _ramped_profile(rows, start, end, s, ramp)[:, None] * body[label - 1]
            values += b_amp * _coverage(rows, start, start + spec.boundary_frames, s)[:, None] * onset
            values += b_amp * _coverage(rows, end - spec.boundary_frames, end, s)[:, None] * offset

        # confusers sit in leftover background and mimic a body pattern only
        taken = [(inst.start - spec.min_gap, inst.end + spec.min_gap)
                 for inst in instances]
        for _ in range(spec.confusers_per_video):
            width = int(rng.integers(spec.min_action // 2, spec.min_action + 1))
            candidates = [probe for probe in range(0, frames - width, s)
                          if all(probe + width <= lo or probe >= hi for lo, hi in taken)]
            if not candidates:
                continue
            probe = int(candidates[int(rng.integers(len(candidates)))])
            pattern = body[int(rng.integers(spec.num_classes))]
            values += (amp * spec.confuser_strength
                       * _coverage(rows, probe, probe + width, s)[:, None] * pattern)
            taken.append((float(probe), float(probe + width)))

        records.append(VideoRecord(
            id=video_id,
            features={"rgb": values},
            frames_per_step=float(s),
            annotation=Annotation(instances),
            fps=spec.fps,
            duration_frames=float(frames),
        ))
        splits[split].append(video_id)
    return records, labels, splits

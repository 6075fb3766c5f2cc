"""Video records, clip specifications and detection records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..losses import Annotation


@dataclass
class VideoRecord:
    id: str
    features: dict[str, np.ndarray]     # stream name -> [T x C] rows
    frames_per_step: float
    annotation: Annotation
    fps: float                          # video frames per second
    duration_frames: float

    def __post_init__(self):
        for inst in self.annotation.instances:
            if inst.start < 0 or inst.end > self.duration_frames + 1e-6:
                raise ValueError(
                    f"{self.id}: instance [{inst.start}, {inst.end}] outside "
                    f"[0, {self.duration_frames}]")


@dataclass
class ClipSpec:
    clip_length: int = 256              # frames
    train_overlap: int = 30             # frames
    test_overlap: int = 128             # frames
    single_clip_frames: int | None = None   # resample whole video, one clip

    def __post_init__(self):
        for overlap in (self.train_overlap, self.test_overlap):
            if not (0 <= overlap < self.clip_length):
                raise ValueError("overlap must satisfy 0 <= overlap < clip_length")

    def overlap(self, mode: str) -> int:
        if mode == "train":
            return self.train_overlap
        if mode == "test":
            return self.test_overlap
        raise ValueError(f"mode must be train or test, got {mode!r}")


@dataclass
class ClipSample:
    video_id: str
    clip_start: float                   # frames, video coordinates
    values: np.ndarray                  # [rows x C], zero padded to full length
    frames_per_step: float
    annotation: Annotation              # clip coordinates
    clip_length: float                  # frames

    @property
    def num_rows(self) -> int:
        return self.values.shape[0]


@dataclass
class Detection:
    video_id: str
    start: float                        # frames
    end: float                          # frames
    label: int                          # foreground class index >= 1
    score: float

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError("detection start must precede end")
        if not (0.0 <= self.score <= 1.0):
            raise ValueError("detection score must lie in [0, 1]")

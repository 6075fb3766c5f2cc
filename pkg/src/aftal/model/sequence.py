"""Temporal feature sequences with grid metadata."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..tensorcore import Tensor


@dataclass
class FeatureSequence:
    """A [T x C] feature matrix on a uniform temporal grid.

    Step i sits at frame ``origin_frame + i * frames_per_step``.
    """

    values: Tensor
    frames_per_step: float
    origin_frame: float = 0.0

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("feature sequence must be [T x C]")
        if self.num_steps < 1 or self.num_channels < 1:
            raise ValueError("feature sequence must be non-empty")
        if self.frames_per_step <= 0:
            raise ValueError("frames_per_step must be positive")

    @property
    def num_steps(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    def step_times(self) -> np.ndarray:
        """Frame time of every step."""
        return self.origin_frame + np.arange(self.num_steps) * self.frames_per_step

    def frame_to_index(self, frame) -> np.ndarray:
        """Convert frame coordinates to (fractional) step indices."""
        return (np.asarray(frame, dtype=np.float64) - self.origin_frame) / self.frames_per_step

    def with_values(self, values: Tensor, frames_per_step: float | None = None) -> "FeatureSequence":
        return FeatureSequence(
            values=values,
            frames_per_step=self.frames_per_step if frames_per_step is None else frames_per_step,
            origin_frame=self.origin_frame,
        )

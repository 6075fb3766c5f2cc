"""Ground-truth annotations and label assignment for coarse/refined heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import CoarseProposal

REFINED_TIOU_THRESHOLD = 0.5


@dataclass
class Instance:
    start: float        # frames
    end: float          # frames
    label: int          # >= 1; 0 is background

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"instance [{self.start}, {self.end}] must have start < end")
        if self.label < 1:
            raise ValueError("instance labels start at 1")

    @property
    def width(self) -> float:
        return self.end - self.start


@dataclass
class Annotation:
    instances: list[Instance] = field(default_factory=list)

    def shifted(self, delta: float) -> "Annotation":
        return Annotation([Instance(i.start + delta, i.end + delta, i.label)
                           for i in self.instances])


def tiou(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Temporal intersection over union of two intervals."""
    a_start, a_end = a
    b_start, b_end = b
    if a_start > a_end or b_start > b_end:
        raise ValueError("interval start must not exceed end")
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0:
        return 0.0
    union = (a_end - a_start) + (b_end - b_start) - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass
class CoarseTarget:
    gt_index: int
    start: float
    end: float
    label: int


@dataclass
class RefinedTarget:
    d_start: float      # width-relative offset label
    d_end: float
    label: int
    tiou: float


@dataclass
class AssignmentResult:
    coarse: dict[tuple[int, int], CoarseTarget]
    refined: dict[tuple[int, int], RefinedTarget]

    @property
    def n_coarse(self) -> int:
        return len(self.coarse)

    @property
    def n_refined(self) -> int:
        return len(self.refined)


def offset_labels(p_start: float, p_end: float,
                  gt_start: float, gt_end: float) -> tuple[float, float]:
    """Width-relative offsets whose decode recovers the ground truth exactly.

    The decoder applies start + w/2 * d_start (and symmetrically for the
    end), so the labels are 2 * (gt - coarse) / w.
    """
    w = p_end - p_start
    return 2.0 * (gt_start - p_start) / w, 2.0 * (gt_end - p_end) / w


def assign(proposals: list[CoarseProposal], ann: Annotation) -> AssignmentResult:
    """Containment-based coarse assignment plus tIoU-gated refined assignment.

    A location is a coarse positive when its anchor time lies inside a
    ground-truth instance (ties go to the smallest instance); it is a refined
    positive when additionally the coarse interval overlaps that instance
    with tIoU above 0.5.
    """
    coarse: dict[tuple[int, int], CoarseTarget] = {}
    refined: dict[tuple[int, int], RefinedTarget] = {}
    for p in proposals:
        containing = [(j, inst) for j, inst in enumerate(ann.instances)
                      if inst.start <= p.anchor_time <= inst.end]
        if not containing:
            continue
        j, inst = min(containing, key=lambda ji: (ji[1].width, ji[0]))
        key = (p.level, p.index)
        coarse[key] = CoarseTarget(j, inst.start, inst.end, inst.label)
        overlap = tiou((p.start, p.end), (inst.start, inst.end))
        if overlap > REFINED_TIOU_THRESHOLD:
            d_start, d_end = offset_labels(p.start, p.end, inst.start, inst.end)
            refined[key] = RefinedTarget(d_start, d_end, inst.label, overlap)
    return AssignmentResult(coarse=coarse, refined=refined)


def decode_offsets(p_start, p_end, d_start, d_end):
    """Apply width-relative offsets to coarse boundaries (numpy-friendly)."""
    w = np.asarray(p_end) - np.asarray(p_start)
    return (np.asarray(p_start) + 0.5 * w * np.asarray(d_start),
            np.asarray(p_end) + 0.5 * w * np.asarray(d_end))

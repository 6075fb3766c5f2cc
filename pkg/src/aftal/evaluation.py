"""Detection metrics: per-class average precision and mean AP over thresholds."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .losses import Annotation, tiou
from .pipeline.records import Detection

THUMOS_THRESHOLDS = (0.3, 0.4, 0.5, 0.6, 0.7)
ACTIVITYNET_THRESHOLDS = tuple(np.round(np.arange(0.5, 0.96, 0.05), 2))


@dataclass
class EvalSpec:
    thresholds: tuple[float, ...] = THUMOS_THRESHOLDS
    classes: tuple[str, ...] = ()

    def __post_init__(self):
        t = list(self.thresholds)
        if any(not (0 < x <= 1) for x in t) or any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly increasing within (0, 1]")


@dataclass
class PRCurve:
    recall: list[float] = field(default_factory=list)
    precision: list[float] = field(default_factory=list)


def average_precision(dets: list[Detection], gts: dict[str, Annotation],
                      class_id: int, threshold: float) -> tuple[float, PRCurve]:
    """Greedy-matched AP for one class at one tIoU threshold.

    Detections are visited in score order; each matches its best-overlap
    unmatched instance of the same class in the same video, counting as a
    true positive when that overlap exceeds the threshold.  AP integrates
    the all-point interpolated precision over recall.
    """
    gt_spans: dict[str, list[tuple[float, float]]] = {}
    for video_id, ann in gts.items():
        spans = [(i.start, i.end) for i in ann.instances if i.label == class_id]
        if spans:
            gt_spans[video_id] = spans
    n_pos = sum(len(v) for v in gt_spans.values())
    if n_pos == 0:
        warnings.warn(f"no ground truth for class {class_id}; AP defined as 0")
        return 0.0, PRCurve()

    cls_dets = sorted((d for d in dets if d.label == class_id),
                      key=lambda d: (-d.score, d.video_id, d.start, d.end))
    matched: dict[str, list[bool]] = {v: [False] * len(s) for v, s in gt_spans.items()}
    tp = np.zeros(len(cls_dets))
    for k, det in enumerate(cls_dets):
        spans = gt_spans.get(det.video_id)
        if spans is None:
            continue  # video absent from the ground-truth set: FP
        best, best_j = 0.0, -1
        for j, span in enumerate(spans):
            if matched[det.video_id][j]:
                continue
            overlap = tiou((det.start, det.end), span)
            if overlap > best:
                best, best_j = overlap, j
        if best_j >= 0 and best > threshold:
            matched[det.video_id][best_j] = True
            tp[k] = 1.0

    cum_tp = np.cumsum(tp)
    ranks = np.arange(1, len(cls_dets) + 1)
    precision = cum_tp / ranks if len(cls_dets) else np.zeros(0)
    recall = cum_tp / n_pos if len(cls_dets) else np.zeros(0)
    curve = PRCurve(recall=list(map(float, recall)),
                    precision=list(map(float, precision)))

    if len(cls_dets) == 0:
        return 0.0, curve
    # all-point interpolation: envelope the precision, integrate over recall
    mrec = np.concatenate(([0.0], recall, [recall[-1]]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    change = np.nonzero(mrec[1:] != mrec[:-1])[0]
    ap = float(np.sum((mrec[change + 1] - mrec[change]) * mpre[change + 1]))
    return ap, curve


@dataclass
class EvalReport:
    thresholds: tuple[float, ...]
    class_names: tuple[str, ...]
    ap: dict[str, dict[float, float]]            # class -> threshold -> AP
    map_per_threshold: dict[float, float]
    average_map: float
    pr_curves: dict[str, dict[float, PRCurve]]

    def as_dict(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "classes": list(self.class_names),
            "ap": {c: {f"{t:g}": v for t, v in th.items()} for c, th in self.ap.items()},
            "map_per_threshold": {f"{t:g}": v for t, v in self.map_per_threshold.items()},
            "average_map": self.average_map,
            "pr_curves": {
                c: {f"{t:g}": {"recall": pc.recall, "precision": pc.precision}
                    for t, pc in th.items()}
                for c, th in self.pr_curves.items()
            },
        }

    def table(self) -> str:
        header = ["metric"] + [f"{t:g}" for t in self.thresholds] + ["Avg."]
        rows = [header]
        for name in self.class_names:
            rows.append([f"AP {name}"]
                        + [f"{self.ap[name][t]:.4f}" for t in self.thresholds]
                        + [f"{np.mean([self.ap[name][t] for t in self.thresholds]):.4f}"])
        rows.append(["mAP"]
                    + [f"{self.map_per_threshold[t]:.4f}" for t in self.thresholds]
                    + [f"{self.average_map:.4f}"])
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
                 for row in rows]
        return "\n".join(lines)

    def write(self, json_path, table_path=None) -> None:
        Path(json_path).write_text(
            json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        if table_path is not None:
            Path(table_path).write_text(self.table() + "\n")


def mean_ap(dets: list[Detection], gts: dict[str, Annotation],
            spec: EvalSpec) -> EvalReport:
    """Per-threshold mean AP over classes plus the cross-threshold average."""
    names = spec.classes or tuple(
        f"class_{k}" for k in sorted({i.label for a in gts.values() for i in a.instances}))
    ap: dict[str, dict[float, float]] = {}
    curves: dict[str, dict[float, PRCurve]] = {}
    for k, name in enumerate(names, start=1):
        ap[name] = {}
        curves[name] = {}
        for t in spec.thresholds:
            value, curve = average_precision(dets, gts, k, t)
            ap[name][t] = value
            curves[name][t] = curve
    map_per_threshold = {
        t: float(np.mean([ap[name][t] for name in names])) if names else 0.0
        for t in spec.thresholds
    }
    average = float(np.mean(list(map_per_threshold.values())))
    return EvalReport(
        thresholds=tuple(spec.thresholds),
        class_names=tuple(names),
        ap=ap,
        map_per_threshold=map_per_threshold,
        average_map=average,
        pr_curves=curves,
    )

"""Decoding predictions into detections: offsets, score fusion, Soft-NMS."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..model import ClipForward, Detector, FeatureSequence
from ..tensorcore import Tensor
from .records import ClipSample, Detection


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.clip(x, 0, None))),
                    np.exp(np.clip(x, None, 0)) / (1.0 + np.exp(np.clip(x, None, 0))))


@dataclass
class LocationPrediction:
    """Per-location decoded output, before per-class expansion and NMS."""
    video_id: str
    clip_start: float
    level: int
    index: int
    start: float                 # frames, video coordinates
    end: float
    scores: np.ndarray           # per foreground class, quality fused

    @property
    def key(self) -> tuple:
        return (self.video_id, self.clip_start, self.level, self.index)


def decode_clip(fwd: ClipForward, video_id: str, clip_start: float,
                use_quality: bool = True) -> list[LocationPrediction]:
    """Fuse coarse and refined outputs into per-location boundaries and scores.

    Refined boundaries move each coarse boundary by half the proposal width
    times the predicted offset; scores average the coarse and refined softmax
    probabilities of the foreground classes and scale by the quality estimate.
    """
    out = []
    for lv in fwd.levels:
        psi = lv.start.numpy()
        xi = lv.end.numpy()
        w = xi - psi
        offs = lv.offsets.numpy()
        r_start = psi + 0.5 * w * offs[:, 0]
        r_end = xi + 0.5 * w * offs[:, 1]
        p_coarse = _softmax(lv.coarse_logits.numpy())
        p_refined = _softmax(lv.refined_logits.numpy())
        eta = _sigmoid(lv.quality_logits.numpy()) if use_quality else np.ones(len(psi))
        scores = 0.5 * (p_coarse[:, 1:] + p_refined[:, 1:]) * eta[:, None]
        lo = np.minimum(r_start, r_end)
        hi = np.maximum(r_start, r_end)
        for i in range(len(psi)):
            out.append(LocationPrediction(
                video_id=video_id,
                clip_start=clip_start,
                level=lv.level,
                index=i,
                start=clip_start + float(lo[i]),
                end=clip_start + float(hi[i]),
                scores=scores[i].copy(),
            ))
    return out


def fuse_streams(preds_a: list[LocationPrediction] | None,
                 preds_b: list[LocationPrediction] | None) -> list[LocationPrediction]:
    """Average boundaries and class scores of two location-aligned runs."""
    if preds_a is None or preds_b is None:
        warnings.warn("fusing a single stream: passing predictions through")
        present = preds_a if preds_a is not None else preds_b
        if present is None:
            raise ValueError("fuse_streams needs at least one stream")
        return list(present)
    if len(preds_a) != len(preds_b):
        raise ValueError("stream prediction grids differ in size")
    fused = []
    for a, b in zip(preds_a, preds_b):
        if a.key != b.key:
            raise ValueError(f"stream grids misaligned at {a.key} vs {b.key}")
        fused.append(LocationPrediction(
            video_id=a.video_id,
            clip_start=a.clip_start,
            level=a.level,
            index=a.index,
            start=0.5 * (a.start + b.start),
            end=0.5 * (a.end + b.end),
            scores=0.5 * (a.scores + b.scores),
        ))
    return fused


MIN_DETECTION_WIDTH = 0.01  # frames; narrower spans cannot round-trip the file


def expand_to_detections(preds: list[LocationPrediction], top_k: int | None = None,
                         score_floor: float = 0.0) -> list[Detection]:
    """Per-class detections from location predictions, optionally top-k capped."""
    dets = []
    for p in preds:
        if p.end - p.start < MIN_DETECTION_WIDTH:
            continue
        for k, s in enumerate(p.scores, start=1):
            if s > score_floor:
                dets.append(Detection(p.video_id, p.start, p.end, k, float(s)))
    dets.sort(key=lambda d: (-d.score, d.start, d.end, d.label))
    if top_k is not None:
        dets = dets[:top_k]
    return dets


def _interval_tiou(a_start, a_end, b_start, b_end):
    inter = min(a_end, b_end) - max(a_start, b_start)
    if inter <= 0:
        return 0.0
    union = (a_end - a_start) + (b_end - b_start) - inter
    return inter / union if union > 0 else 0.0


def soft_nms(dets: list[Detection], tiou_threshold: float = 0.5,
             score_floor: float = 1e-4, variant: str = "linear",
             sigma: float = 0.5) -> list[Detection]:
    """Score-decay suppression over one video's single-class detections.

    Linear decay multiplies overlapping scores by (1 - tIoU) once overlap
    exceeds the threshold; the gaussian variant decays every overlap by
    exp(-tIoU^2 / sigma).  Detections falling below score_floor are dropped.
    Input order never matters: candidates are sorted by (score, start, end)
    before processing.
    """
    if variant not in ("linear", "gaussian"):
        raise ValueError(f"unknown soft-nms variant {variant!r}")
    pool = [(d, d.score) for d in dets]
    pool.sort(key=lambda item: (-item[1], item[0].start, item[0].end))
    kept: list[Detection] = []
    while pool:
        best_i = max(range(len(pool)),
                     key=lambda i: (pool[i][1], -pool[i][0].start, -pool[i][0].end))
        best, best_score = pool.pop(best_i)
        if best_score < score_floor:
            break
        kept.append(Detection(best.video_id, best.start, best.end, best.label,
                              best_score))
        survivors = []
        for d, s in pool:
            overlap = _interval_tiou(best.start, best.end, d.start, d.end)
            if variant == "linear":
                if overlap > tiou_threshold:
                    s = s * (1.0 - overlap)
            else:
                if overlap > 0:
                    s = s * float(np.exp(-(overlap * overlap) / sigma))
            if s >= score_floor:
                survivors.append((d, s))
        pool = survivors
    return kept


def nms_all(dets: list[Detection], tiou_threshold: float, score_floor: float,
            variant: str = "linear", sigma: float = 0.5) -> list[Detection]:
    """Per-(video, class) Soft-NMS over a mixed detection list."""
    groups: dict[tuple, list[Detection]] = {}
    for d in dets:
        groups.setdefault((d.video_id, d.label), []).append(d)
    out = []
    for key in sorted(groups):
        out.extend(soft_nms(groups[key], tiou_threshold, score_floor,
                            variant=variant, sigma=sigma))
    out.sort(key=lambda d: (d.video_id, -d.score, d.start, d.end, d.label))
    return out


def predict_clip(model: Detector, clip: ClipSample,
                 use_quality: bool = True) -> list[LocationPrediction]:
    feat = FeatureSequence(
        Tensor(clip.values.astype(model.cfg.np_dtype)),
        frames_per_step=clip.frames_per_step,
    )
    fwd = model.forward_clip(feat)
    return decode_clip(fwd, clip.video_id, clip.clip_start, use_quality=use_quality)


def infer_video_clips(model: Detector, clips: list[ClipSample],
                      duration_frames: dict[str, float],
                      top_k: int = 2000, use_quality: bool = True,
                      flow_model: Detector | None = None,
                      flow_clips: list[ClipSample] | None = None) -> list[Detection]:
    """Raw (pre-NMS) detections for a batch of clips, clamped to each video."""
    dets = []
    for i, clip in enumerate(clips):
        preds = predict_clip(model, clip, use_quality=use_quality)
        if flow_model is not None and flow_clips is not None:
            preds = fuse_streams(preds, predict_clip(flow_model, flow_clips[i],
                                                     use_quality=use_quality))
        clip_dets = expand_to_detections(preds, top_k=top_k)
        duration = duration_frames[clip.video_id]
        for d in clip_dets:
            start = min(max(d.start, 0.0), duration)
            end = min(max(d.end, 0.0), duration)
            if end - start >= MIN_DETECTION_WIDTH:
                dets.append(Detection(d.video_id, start, end, d.label, d.score))
    return dets

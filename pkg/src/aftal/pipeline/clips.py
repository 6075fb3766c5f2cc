"""Clip splitting and whole-video resampling."""

from __future__ import annotations

import numpy as np

from ..losses import Annotation, Instance
from .records import ClipSample, ClipSpec, VideoRecord


def _window_annotation(ann: Annotation, w0: float, w1: float) -> Annotation:
    """Translate instances into [w0, w1) clip coordinates, dropping slivers."""
    kept = []
    for inst in ann.instances:
        vis_start = max(inst.start, w0)
        vis_end = min(inst.end, w1)
        if vis_end - vis_start >= 1.0:
            kept.append(Instance(vis_start - w0, vis_end - w0, inst.label))
    return Annotation(kept)


def resample_record(record: VideoRecord, target_frames: int) -> VideoRecord:
    """Linearly resample every stream so the video spans target_frames."""
    scale = target_frames / record.duration_frames
    s = record.frames_per_step
    target_rows = int(round(target_frames / s))
    features = {}
    for stream, values in record.features.items():
        t = values.shape[0]
        src = np.linspace(0, t - 1, target_rows)
        i0 = np.floor(src).astype(int)
        i1 = np.minimum(i0 + 1, t - 1)
        frac = (src - i0)[:, None]
        features[stream] = (1 - frac) * values[i0] + frac * values[i1]
    instances = [Instance(inst.start * scale, inst.end * scale, inst.label)
                 for inst in record.annotation.instances]
    return VideoRecord(
        id=record.id,
        features=features,
        frames_per_step=s,
        annotation=Annotation(instances),
        fps=record.fps * scale,
        duration_frames=float(target_frames),
    )


def split_clips(record: VideoRecord, spec: ClipSpec, mode: str,
                stream: str = "rgb") -> list[ClipSample]:
    """Overlapping fixed-length clips covering the whole video.

    Clip starts advance by (clip_length - overlap); the final clip is zero
    padded.  When the spec pins a single-clip frame count, the video is
    resampled to that length first and yields exactly one clip.
    """
    if spec.single_clip_frames is not None:
        record = resample_record(record, spec.single_clip_frames)
        clip_length = spec.single_clip_frames
    else:
        clip_length = spec.clip_length

    values = record.features[stream]
    s = record.frames_per_step
    if abs(s - round(s)) > 1e-9:
        raise ValueError(f"{record.id}: frames_per_step {s} must be integral")
    s = int(round(s))
    if clip_length % s != 0:
        raise ValueError(f"clip_length {clip_length} not divisible by stride {s}")
    clip_rows = clip_length // s
    overlap_rows = int(round(spec.overlap(mode) / s)) if spec.single_clip_frames is None else 0
    stride_rows = clip_rows - overlap_rows
    if stride_rows < 1:
        raise ValueError("clip overlap leaves no stride")

    total_rows = values.shape[0]
    starts = [0]
    while starts[-1] + clip_rows < total_rows:
        starts.append(starts[-1] + stride_rows)

    samples = []
    for start_row in starts:
        w0 = start_row * s
        w1 = w0 + clip_length
        chunk = values[start_row:start_row + clip_rows]
        if chunk.shape[0] < clip_rows:
            padded = np.zeros((clip_rows, values.shape[1]), dtype=values.dtype)
            padded[:chunk.shape[0]] = chunk
            chunk = padded
        samples.append(ClipSample(
            video_id=record.id,
            clip_start=float(w0),
            values=chunk.copy(),
            frames_per_step=float(s),
            annotation=_window_annotation(record.annotation, w0, w1),
            clip_length=float(clip_length),
        ))
    return samples

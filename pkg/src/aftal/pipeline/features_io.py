"""Dataset serialization: binary feature files and the annotation document.

Feature file layout (little endian):

    magic   4 bytes  b"AFSD"
    version u16      currently 1
    T       u32      number of feature steps
    C       u32      channels
    fps     f32      video frame rate
    payload T*C float32 values, row major

One file per (video, stream), named ``<video_id>.<stream>.feat`` under
``<dataset>/features/``.  Annotations live in ``<dataset>/annotations.json``:
a label vocabulary list plus, per video, duration in frames, frame rate and
instance triples.  Class index k corresponds to ``labels[k-1]``; 0 is
background.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..losses import Annotation, Instance
from .records import VideoRecord

FEATURE_MAGIC = b"AFSD"
FEATURE_VERSION = 1


class DatasetError(RuntimeError):
    pass


def save_features(path, values: np.ndarray, fps: float) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise DatasetError("feature payload must be [T x C]")
    t, c = values.shape
    header = FEATURE_MAGIC + struct.pack("<HIIf", FEATURE_VERSION, t, c, float(fps))
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    Path(path).write_bytes(header + payload)


def load_features(path) -> tuple[np.ndarray, float]:
    raw = Path(path).read_bytes()
    if raw[:4] != FEATURE_MAGIC:
        raise DatasetError(f"{path}: bad magic, not a feature file")
    version, t, c, fps = struct.unpack_from("<HIIf", raw, 4)
    if version != FEATURE_VERSION:
        raise DatasetError(f"{path}: unsupported feature version {version}")
    expected = 18 + 4 * t * c
    if len(raw) != expected:
        raise DatasetError(f"{path}: truncated payload ({len(raw)} != {expected} bytes)")
    values = np.frombuffer(raw, dtype="<f4", offset=18).reshape(t, c)
    return values.astype(np.float64), float(fps)


def _feature_path(root: Path, video_id: str, stream: str) -> Path:
    return root / "features" / f"{video_id}.{stream}.feat"


DETECTIONS_HEADER = "video,start_sec,end_sec,label,score"


def save_detections(path, detections, labels: list[str], fps_by_video: dict[str, float]) -> None:
    """Line-oriented detections file, one record per line, times in seconds."""
    lines = [DETECTIONS_HEADER]
    for d in detections:
        fps = fps_by_video[d.video_id]
        lines.append(f"{d.video_id},{d.start / fps:.6f},{d.end / fps:.6f},"
                     f"{labels[d.label - 1]},{d.score:.6f}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_detections(path, labels: list[str]):
    """Detections in seconds, as (video, start_sec, end_sec, label_id, score)."""
    from .records import Detection

    label_index = {name: k + 1 for k, name in enumerate(labels)}
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != DETECTIONS_HEADER:
        raise DatasetError(f"{path}: missing detections header")
    out = []
    for line in lines[1:]:
        video, start, end, label, score = line.split(",")
        if label not in label_index:
            raise DatasetError(f"{path}: unknown label {label!r}")
        out.append(Detection(video, float(start), float(end),
                             label_index[label], float(score)))
    return out


def save_dataset(root, records: list[VideoRecord], labels: list[str],
                 splits: dict[str, list[str]] | None = None) -> None:
    root = Path(root)
    (root / "features").mkdir(parents=True, exist_ok=True)
    doc = {"labels": list(labels), "videos": {}}
    if splits is not None:
        doc["splits"] = {name: sorted(ids) for name, ids in splits.items()}
    for rec in records:
        doc["videos"][rec.id] = {
            "duration_frames": rec.duration_frames,
            "fps": rec.fps,
            "instances": [
                {"start": inst.start, "end": inst.end, "label": labels[inst.label - 1]}
                for inst in rec.annotation.instances
            ],
        }
        for stream, values in rec.features.items():
            save_features(_feature_path(root, rec.id, stream), values, rec.fps)
    (root / "annotations.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")


def load_annotation_doc(root) -> dict:
    path = Path(root) / "annotations.json"
    if not path.exists():
        raise DatasetError(f"missing annotation document {path}")
    return json.loads(path.read_text())


def load_splits(root) -> dict[str, list[str]]:
    doc = load_annotation_doc(root)
    return doc.get("splits", {"train": sorted(doc["videos"])})


def load_dataset(root, streams: tuple[str, ...] = ("rgb",)) -> tuple[list[VideoRecord], list[str]]:
    root = Path(root)
    doc = load_annotation_doc(root)
    labels = list(doc["labels"])
    label_index = {name: k + 1 for k, name in enumerate(labels)}
    records = []
    for video_id in sorted(doc["videos"]):
        meta = doc["videos"][video_id]
        features = {}
        frames_per_step = None
        for stream in streams:
            path = _feature_path(root, video_id, stream)
            if not path.exists():
                raise DatasetError(f"missing feature file {path}")
            values, fps = load_features(path)
            if abs(fps - meta["fps"]) > 1e-3:
                raise DatasetError(f"{path}: fps {fps} disagrees with annotations")
            features[stream] = values
            step = meta["duration_frames"] / values.shape[0]
            if frames_per_step is None:
                frames_per_step = step
            elif abs(frames_per_step - step) > 1e-6:
                raise DatasetError(f"{video_id}: streams disagree on temporal stride")
        instances = [
            Instance(item["start"], item["end"], label_index[item["label"]])
            for item in meta["instances"]
        ]
        records.append(VideoRecord(
            id=video_id,
            features=features,
            frames_per_step=float(frames_per_step),
            annotation=Annotation(instances),
            fps=float(meta["fps"]),
            duration_frames=float(meta["duration_frames"]),
        ))
    return records, labels

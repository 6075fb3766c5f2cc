"""Data handling, training loop and inference."""

from .clips import resample_record, split_clips
from .features_io import (
    DatasetError,
    FEATURE_MAGIC,
    FEATURE_VERSION,
    load_annotation_doc,
    load_dataset,
    load_detections,
    load_features,
    load_splits,
    save_dataset,
    save_detections,
    save_features,
)
from .inference import (
    LocationPrediction,
    decode_clip,
    expand_to_detections,
    fuse_streams,
    infer_video_clips,
    nms_all,
    predict_clip,
    soft_nms,
)
from .records import ClipSample, ClipSpec, Detection, VideoRecord
from .synth import SynthSpec, class_labels, synth_dataset
from .training import LOG_COLUMNS, AdamW, TrainingError, TrainSettings, train

__all__ = [
    "VideoRecord",
    "ClipSpec",
    "ClipSample",
    "Detection",
    "split_clips",
    "resample_record",
    "save_features",
    "load_features",
    "save_dataset",
    "load_dataset",
    "load_splits",
    "load_annotation_doc",
    "save_detections",
    "load_detections",
    "DatasetError",
    "FEATURE_MAGIC",
    "FEATURE_VERSION",
    "SynthSpec",
    "synth_dataset",
    "class_labels",
    "AdamW",
    "TrainSettings",
    "TrainingError",
    "train",
    "LOG_COLUMNS",
    "LocationPrediction",
    "decode_clip",
    "predict_clip",
    "expand_to_detections",
    "fuse_streams",
    "soft_nms",
    "nms_all",
    "infer_video_clips",
]

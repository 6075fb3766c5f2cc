"""Anchor-free temporal action localization toolkit."""

from .config import Config, ConfigError, load_config
from .evaluation import EvalSpec, average_precision, mean_ap
from .losses import Annotation, Instance, assign, tiou
from .model import Detector, FeatureSequence, ModelConfig
from .pipeline import ClipSpec, Detection, SynthSpec, soft_nms, split_clips, synth_dataset
from .tensorcore import Tensor

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Detector",
    "ModelConfig",
    "FeatureSequence",
    "Annotation",
    "Instance",
    "assign",
    "tiou",
    "ClipSpec",
    "Detection",
    "SynthSpec",
    "split_clips",
    "synth_dataset",
    "soft_nms",
    "EvalSpec",
    "average_precision",
    "mean_ap",
    "Config",
    "ConfigError",
    "load_config",
]

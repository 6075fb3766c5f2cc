"""Label assignment, detection objective and boundary consistency learning."""

from .assignment import (
    Annotation,
    AssignmentResult,
    CoarseTarget,
    Instance,
    RefinedTarget,
    assign,
    decode_offsets,
    offset_labels,
    tiou,
)
from .consistency import (
    FragmentSpans,
    RearrangedClip,
    activation_guided_loss,
    boundary_contrastive_loss,
    boundary_indicator_signals,
    rearrange_clip,
)
from .detection import (
    DetectionLossConfig,
    LossReport,
    bce_with_logits,
    centerness_targets,
    detection_loss,
    focal_cls_loss,
    focal_loss_sum,
    tiou_loss_terms,
)

__all__ = [
    "Annotation",
    "Instance",
    "AssignmentResult",
    "CoarseTarget",
    "RefinedTarget",
    "assign",
    "tiou",
    "offset_labels",
    "decode_offsets",
    "LossReport",
    "DetectionLossConfig",
    "detection_loss",
    "focal_cls_loss",
    "focal_loss_sum",
    "bce_with_logits",
    "tiou_loss_terms",
    "centerness_targets",
    "activation_guided_loss",
    "boundary_contrastive_loss",
    "boundary_indicator_signals",
    "rearrange_clip",
    "RearrangedClip",
    "FragmentSpans",
]

"""Detection network, feature sequences and checkpoint I/O."""

from .checkpoint import CheckpointError, load_checkpoint, restore_into, save_checkpoint
from .network import (
    BoundaryRegions,
    ClipForward,
    CoarseProposal,
    Detector,
    LevelForward,
    ModelConfig,
    Refinement,
    boundary_regions,
    region_arrays,
)
from .sequence import FeatureSequence

__all__ = [
    "FeatureSequence",
    "ModelConfig",
    "Detector",
    "ClipForward",
    "LevelForward",
    "CoarseProposal",
    "Refinement",
    "BoundaryRegions",
    "boundary_regions",
    "region_arrays",
    "save_checkpoint",
    "load_checkpoint",
    "restore_into",
    "CheckpointError",
]

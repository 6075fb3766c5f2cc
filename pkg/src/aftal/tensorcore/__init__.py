"""Minimal reverse-mode autodiff engine for temporal detection heads."""

from .gradcheck import GradCheckReport, check_gradients
from .kernels import (
    conv1d,
    group_norm,
    linear_upsample,
    pointwise,
    region_conv_pool,
    region_conv_pool_batch,
    region_max_pool,
    region_max_pool_batch,
    region_mean_pool,
    region_mean_pool_batch,
    region_stack_pool,
    region_stack_pool_batch,
)
from .tensor import (
    DimensionError,
    GraphError,
    Tensor,
    concat,
    parameter,
    stack,
    where_scalar,
)

__all__ = [
    "Tensor",
    "DimensionError",
    "GraphError",
    "concat",
    "stack",
    "parameter",
    "where_scalar",
    "conv1d",
    "group_norm",
    "pointwise",
    "linear_upsample",
    "region_max_pool",
    "region_max_pool_batch",
    "region_mean_pool",
    "region_mean_pool_batch",
    "region_stack_pool",
    "region_stack_pool_batch",
    "region_conv_pool",
    "region_conv_pool_batch",
    "check_gradients",
    "GradCheckReport",
]

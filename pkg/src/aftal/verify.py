"""Finite-difference verification entry points used by the CLI and tests."""

from __future__ import annotations

import numpy as np

from .model import Detector, FeatureSequence, ModelConfig
from .tensorcore import (
    GradCheckReport,
    Tensor,
    check_gradients,
    conv1d,
    group_norm,
    linear_upsample,
    pointwise,
    region_conv_pool,
    region_max_pool,
    region_mean_pool,
    region_stack_pool,
)


def kernel_gradcheck_reports(seed: int = 0) -> dict[str, GradCheckReport]:
    """One finite-difference report per differentiable kernel."""
    rng = np.random.default_rng(seed)
    reports: dict[str, GradCheckReport] = {}

    x = Tensor(rng.normal(size=(10, 3)))
    w = Tensor(rng.normal(size=(3, 3, 4)))
    b = Tensor(rng.normal(size=4))
    mixer = rng.normal(size=(5, 4))
    reports["conv1d"] = check_gradients(
        lambda x_, w_, b_: (conv1d(x_, w_, b_, stride=2, pad=1) * Tensor(mixer)).sum(),
        [x, w, b])

    gx = Tensor(rng.normal(size=(8, 6)))
    gamma = Tensor(rng.normal(size=6))
    beta = Tensor(rng.normal(size=6))
    gmix = rng.normal(size=(8, 6))
    reports["group_norm"] = check_gradients(
        lambda x_, g_, b_: (group_norm(x_, 3, g_, b_) * Tensor(gmix)).sum(),
        [gx, gamma, beta])

    for kind in ("relu", "tanh", "sigmoid"):
        px = Tensor(rng.normal(size=(6, 3)) + 0.25)
        pmix = rng.normal(size=(6, 3))
        reports[f"pointwise_{kind}"] = check_gradients(
            lambda x_, k=kind: (pointwise(x_, k) * Tensor(pmix)).sum(), [px])

    mx = Tensor(rng.normal(size=(9, 4)))
    mmix = rng.normal(size=4)
    reports["region_max_pool"] = check_gradients(
        lambda x_: (region_max_pool(x_, (1.3, 6.8)) * Tensor(mmix)).sum(), [mx])
    reports["region_mean_pool"] = check_gradients(
        lambda x_: (region_mean_pool(x_, (0.0, 5.5)) * Tensor(mmix)).sum(), [mx])
    smix = rng.normal(size=12)
    reports["region_stack_pool"] = check_gradients(
        lambda x_: (region_stack_pool(x_, (2.0, 7.0)) * Tensor(smix)).sum(), [mx])
    taps = Tensor(np.array([0.2, 0.5, 0.3]))
    reports["region_conv_pool"] = check_gradients(
        lambda x_, t_: (region_conv_pool(x_, (1.0, 8.0), t_) * Tensor(mmix)).sum(),
        [mx, taps])

    ux = Tensor(rng.normal(size=(6, 3)))
    umix = rng.normal(size=(18, 3))
    reports["linear_upsample"] = check_gradients(
        lambda x_: (linear_upsample(x_, 3) * Tensor(umix)).sum(), [ux])

    # composite of the kernels chained the way the head chains them
    cx = Tensor(rng.normal(size=(16, 8)))
    cw = Tensor(rng.normal(size=(3, 8, 8)) * 0.4)
    cgamma = Tensor(np.ones(8) + 0.1 * rng.normal(size=8))
    cbeta = Tensor(0.1 * rng.normal(size=8))
    cmix = rng.normal(size=8)

    def composite(x_, w_, g_, b_):
        h = pointwise(group_norm(conv1d(x_, w_, stride=1, pad=1), 2, g_, b_), "relu")
        h = linear_upsample(h, 2)
        pooled = region_max_pool(h, (3.2, 20.0))
        return (pooled * Tensor(cmix)).sum()

    reports["composite_kernels"] = check_gradients(composite, [cx, cw, cgamma, cbeta])
    return reports


def composed_head_report(seed: int = 0, T: int = 32, C: int = 16,
                         max_coords_per_param: int = 40) -> GradCheckReport:
    """Finite-difference check through the full network forward pass.

    Verifies the input clip exhaustively plus a deterministic sample of
    coordinates from parameters along every distinct path (pyramid, branch,
    heads, sensitive projections, frame path, refinement).
    """
    cfg = ModelConfig(in_channels=C, channels=8, num_classes=2, num_levels=3,
                      groups=2, seed=seed)
    det = Detector(cfg)
    rng = np.random.default_rng(seed)
    clip = Tensor(rng.normal(size=(T, C)))

    mixers = {}

    def readout(fwd) -> Tensor:
        total = None
        for lv in fwd.levels:
            for tag, tensor in (("start", lv.start), ("end", lv.end),
                                ("coarse", lv.coarse_logits), ("off", lv.offsets),
                                ("ref", lv.refined_logits), ("q", lv.quality_logits)):
                key = (lv.level, tag)
                if key not in mixers:
                    mixers[key] = Tensor(rng.normal(size=tensor.shape) * 0.1)
                term = (tensor * mixers[key]).sum()
                total = term if total is None else total + term
        key = ("frame", "s")
        if key not in mixers:
            mixers[key] = Tensor(rng.normal(size=fwd.frame_start_sensitive.values.shape) * 0.01)
        total = total + (fwd.frame_start_sensitive.values * mixers[key]).sum()
        return total

    checked_params = [
        ("pyramid.proj.w", det.proj.conv, "w"),
        ("head.dist.w", det.dist_head, "w"),
        ("head.cls.w", det.cls_head, "w"),
        ("sens.loc_start.w", det.sens_loc_start.conv, "w"),
        ("frame.conv0.w", det.frame_convs[0].conv, "w"),
        ("refine.loc_reduce.norm.gamma", det.loc_reduce.norm, "gamma"),
        ("refine.offset.w", det.offset_head, "w"),
    ]

    def f(x_, *param_tensors):
        for (name, owner, attr), tensor in zip(checked_params, param_tensors):
            setattr(owner, attr, tensor)
        fwd = det.forward_clip(FeatureSequence(x_, frames_per_step=4.0))
        return readout(fwd)

    inputs = [clip] + [Tensor(getattr(owner, attr).data.copy())
                       for _, owner, attr in checked_params]
    # the input clip is checked exhaustively; parameters are sampled
    budgets = [None] + [max_coords_per_param] * len(checked_params)
    return check_gradients(f, inputs, max_coords_per_input=budgets,
                           rng=np.random.default_rng(seed + 1))

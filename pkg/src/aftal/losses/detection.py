"""Detection objective: focal classification, boundary/offset regression, quality."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..model import ClipForward
from ..tensorcore import Tensor
from .assignment import Annotation, AssignmentResult, assign, decode_offsets, tiou

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25

QUALITY_MODES = ("tiou", "centerness", "off")


@dataclass
class LossReport:
    cls_coarse: float = 0.0
    loc_coarse: float = 0.0
    cls_refined: float = 0.0
    loc_refined: float = 0.0
    quality: float = 0.0
    act: float = 0.0
    trip: float = 0.0
    total: float = 0.0

    @property
    def consistency(self) -> float:
        return self.act + self.trip

    def as_dict(self) -> dict[str, float]:
        return {
            "cls_coarse": self.cls_coarse,
            "loc_coarse": self.loc_coarse,
            "cls_refined": self.cls_refined,
            "loc_refined": self.loc_refined,
            "quality": self.quality,
            "act": self.act,
            "trip": self.trip,
            "total": self.total,
        }


def _zero() -> Tensor:
    return Tensor(np.zeros(()))


def focal_loss_sum(logits: Tensor, targets: np.ndarray,
                   gamma_f: float = FOCAL_GAMMA, alpha_f: float = FOCAL_ALPHA) -> Tensor:
    """Sum over locations of the alpha-balanced softmax focal loss.

    Positives (label >= 1) are weighted alpha_f, background 1 - alpha_f.
    """
    targets = np.asarray(targets, dtype=np.intp)
    logp = logits.log_softmax(axis=1)
    logp_t = logp.gather_cols(targets)
    p_t = logp_t.exp()
    alpha_t = np.where(targets >= 1, alpha_f, 1.0 - alpha_f)
    focus = (1.0 - p_t) ** gamma_f
    return -(focus * logp_t * Tensor(alpha_t)).sum()


def focal_cls_loss(logits: Tensor, targets: np.ndarray, n_pos: int,
                   gamma_f: float = FOCAL_GAMMA, alpha_f: float = FOCAL_ALPHA) -> Tensor:
    """Focal loss over all locations normalized by the positive count."""
    if n_pos <= 0:
        return _zero()
    return focal_loss_sum(logits, targets, gamma_f, alpha_f) * (1.0 / n_pos)


def bce_with_logits(logits: Tensor, targets: Tensor | np.ndarray) -> Tensor:
    """Elementwise stable binary cross entropy from logits."""
    if not isinstance(targets, Tensor):
        targets = Tensor(np.asarray(targets, dtype=np.float64))
    neg_abs = -logits.abs()
    return logits.relu() - logits * targets + (neg_abs.exp() + 1.0).log()


def tiou_loss_terms(start: Tensor, end: Tensor, gt_start: np.ndarray,
                    gt_end: np.ndarray) -> Tensor:
    """1 - tIoU per proposal, differentiable in the predicted boundaries."""
    gs = Tensor(np.asarray(gt_start, dtype=np.float64))
    ge = Tensor(np.asarray(gt_end, dtype=np.float64))
    inter = (end.minimum(ge) - start.maximum(gs)).maximum(0.0)
    union = (end - start) + (ge - gs) - inter
    return 1.0 - inter / union


def centerness_targets(anchor_times: np.ndarray, gt_start: np.ndarray,
                       gt_end: np.ndarray) -> np.ndarray:
    """Distance-balance quality target: sqrt(min(dl, dr) / max(dl, dr))."""
    dl = np.maximum(anchor_times - gt_start, 0.0)
    dr = np.maximum(gt_end - anchor_times, 0.0)
    lo = np.minimum(dl, dr)
    hi = np.maximum(dl, dr)
    out = np.zeros_like(lo)
    mask = hi > 0
    out[mask] = np.sqrt(lo[mask] / hi[mask])
    return out


@dataclass
class DetectionLossConfig:
    lambda_loc: float = 10.0
    gamma_quality: float = 1.0
    focal_gamma: float = FOCAL_GAMMA
    focal_alpha: float = FOCAL_ALPHA
    quality_mode: str = "tiou"

    def __post_init__(self):
        if self.quality_mode not in QUALITY_MODES:
            raise ValueError(f"quality_mode must be one of {QUALITY_MODES}")


def detection_loss(fwd: ClipForward, ann: Annotation,
                   cfg: DetectionLossConfig,
                   assignment: AssignmentResult | None = None) -> tuple[Tensor, LossReport]:
    """Weighted per-clip objective over every pyramid location.

    Classification terms are focal losses over all locations normalized by
    the positive counts; localization uses 1 - tIoU on coarse positives and
    L1 offsets on refined positives; the quality head regresses (through a
    BCE) the tIoU of the decoded refinement against its matched instance.
    """
    if assignment is None:
        assignment = assign(fwd.coarse_proposals(), ann)

    n_c = assignment.n_coarse
    n_r = assignment.n_refined

    cls_coarse_sum = _zero()
    cls_refined_sum = _zero()
    loc_coarse_sum = _zero()
    loc_refined_sum = _zero()
    quality_sum = _zero()

    for lv in fwd.levels:
        n = len(lv.anchor_times)
        labels_c = np.zeros(n, dtype=np.intp)
        labels_r = np.zeros(n, dtype=np.intp)
        pos_rows, pos_gs, pos_ge = [], [], []
        ref_rows, ref_targets, ref_tious, ref_gs, ref_ge = [], [], [], [], []
        for i in range(n):
            key = (lv.level, i)
            ct = assignment.coarse.get(key)
            if ct is not None:
                labels_c[i] = ct.label
                pos_rows.append(i)
                pos_gs.append(ct.start)
                pos_ge.append(ct.end)
            rt = assignment.refined.get(key)
            if rt is not None:
                labels_r[i] = rt.label
                ref_rows.append(i)
                ref_targets.append((rt.d_start, rt.d_end))
                ref_tious.append(rt.tiou)
                if ct is not None:
                    ref_gs.append(ct.start)
                    ref_ge.append(ct.end)

        if n_c > 0:
            cls_coarse_sum = cls_coarse_sum + focal_loss_sum(
                lv.coarse_logits, labels_c, cfg.focal_gamma, cfg.focal_alpha)
        if n_r > 0:
            cls_refined_sum = cls_refined_sum + focal_loss_sum(
                lv.refined_logits, labels_r, cfg.focal_gamma, cfg.focal_alpha)

        if pos_rows:
            rows = np.asarray(pos_rows, dtype=np.intp)
            terms = tiou_loss_terms(lv.start.take_rows(rows), lv.end.take_rows(rows),
                                    np.asarray(pos_gs), np.asarray(pos_ge))
            loc_coarse_sum = loc_coarse_sum + terms.sum()

        if ref_rows:
            rows = np.asarray(ref_rows, dtype=np.intp)
            pred = lv.offsets.take_rows(rows)
            target = Tensor(np.asarray(ref_targets, dtype=np.float64))
            loc_refined_sum = loc_refined_sum + (pred - target).abs().sum()

            if cfg.quality_mode != "off":
                p_start = lv.start.data[rows]
                p_end = lv.end.data[rows]
                d_pred = lv.offsets.data[rows]
                r_start, r_end = decode_offsets(p_start, p_end, d_pred[:, 0], d_pred[:, 1])
                if cfg.quality_mode == "tiou":
                    q_target = np.array([
                        tiou((min(rs, re_), max(rs, re_)), (gs, ge))
                        for rs, re_, gs, ge in zip(r_start, r_end, ref_gs, ref_ge)
                    ])
                else:
                    q_target = centerness_targets(lv.anchor_times[rows],
                                                  np.asarray(ref_gs), np.asarray(ref_ge))
                q_logits = lv.quality_logits.take_rows(rows)
                quality_sum = quality_sum + bce_with_logits(q_logits, q_target).sum()

    report = LossReport()
    if n_c > 0:
        cls_coarse = cls_coarse_sum * (1.0 / n_c)
        loc_coarse = loc_coarse_sum * (1.0 / n_c)
    else:
        cls_coarse = _zero()
        loc_coarse = _zero()
    if n_r > 0:
        cls_refined = cls_refined_sum * (1.0 / n_r)
        loc_refined = loc_refined_sum * (1.0 / n_r)
        quality = quality_sum * (1.0 / n_r)
    else:
        cls_refined = _zero()
        loc_refined = _zero()
        quality = _zero()

    total = (cls_coarse + cfg.lambda_loc * loc_coarse
             + cls_refined + cfg.lambda_loc * loc_refined
             + cfg.gamma_quality * quality)

    report.cls_coarse = cls_coarse.item()
    report.loc_coarse = loc_coarse.item()
    report.cls_refined = cls_refined.item()
    report.loc_refined = loc_refined.item()
    report.quality = quality.item()
    report.total = total.item()
    return total, report

"""Optimizer and the two-phase training loop (detection step, then BCL step)."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..losses import (
    Annotation,
    DetectionLossConfig,
    LossReport,
    activation_guided_loss,
    boundary_contrastive_loss,
    detection_loss,
    rearrange_clip,
)
from ..model import Detector, FeatureSequence, save_checkpoint
from ..tensorcore import Tensor
from .records import ClipSample


class TrainingError(RuntimeError):
    pass


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: dict[str, "Tensor"], lr: float = 1e-5,
                 weight_decay: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * update + self.lr * self.weight_decay * p.data

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()


@dataclass
class TrainSettings:
    epochs: int = 16
    learning_rate: float = 1e-5
    weight_decay: float = 1e-3
    max_steps: int | None = None
    lambda_loc: float = 10.0
    gamma_quality: float = 1.0
    quality_mode: str = "tiou"
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    bcl: bool = True
    bcl_act: bool = True
    bcl_trip: bool = True
    bcl_delta_a: float = 4.0
    bcl_delta_b: float = 100.0
    bcl_radius: int = 2
    bcl_norm: str = "tanh"
    bcl_symmetric: bool = False
    seed: int = 0
    log_every: int = 1
    checkpoint_every_epoch: bool = True


LOG_COLUMNS = ("step", "epoch", "cls_coarse", "loc_coarse", "cls_refined",
               "loc_refined", "quality", "act", "trip", "total", "bcl_eligible")


def _log_row(step: int, epoch: int, report: LossReport, eligible: bool) -> str:
    values = [str(step), str(epoch)]
    values += [f"{v:.6f}" for v in (report.cls_coarse, report.loc_coarse,
                                    report.cls_refined, report.loc_refined,
                                    report.quality, report.act, report.trip,
                                    report.total)]
    values.append("1" if eligible else "0")
    return ",".join(values)


def _dump_diagnostics(out_dir: Path, step: int, clip: ClipSample,
                      report: LossReport) -> Path:
    path = out_dir / f"diagnostic_step{step}.npz"
    np.savez(path, values=clip.values,
             instances=np.array([(i.start, i.end, i.label)
                                 for i in clip.annotation.instances]))
    (out_dir / f"diagnostic_step{step}.json").write_text(
        json.dumps({"step": step, "video": clip.video_id,
                    "losses": report.as_dict()}, indent=2))
    return path


def consistency_step(model: Detector, clip: ClipSample, settings: TrainSettings,
                     rng: np.random.Generator) -> tuple[Tensor, float, float] | None:
    """Rearrange the clip and build the consistency objective, if eligible."""
    if not settings.bcl or not (settings.bcl_act or settings.bcl_trip):
        return None
    re = rearrange_clip(clip.values, clip.frames_per_step, clip.annotation, rng)
    if re is None:
        return None
    feat = FeatureSequence(Tensor(re.values.astype(model.cfg.np_dtype)),
                           frames_per_step=re.frames_per_step)
    f_s, f_e = model.forward_frame_path(feat)
    act_val = trip_val = 0.0
    loss = None
    if settings.bcl_act:
        act = activation_guided_loss(f_s, f_e, re.annotation,
                                     radius=settings.bcl_radius,
                                     norm=settings.bcl_norm)
        act_val = act.item()
        loss = act
    if settings.bcl_trip:
        trip = boundary_contrastive_loss(f_s, f_e, re.spans,
                                         delta_a=settings.bcl_delta_a,
                                         delta_b=settings.bcl_delta_b,
                                         symmetric=settings.bcl_symmetric)
        trip_val = trip.item()
        loss = trip if loss is None else loss + trip
    return loss, act_val, trip_val


def train(model: Detector, clips: list[ClipSample], settings: TrainSettings,
          out_dir) -> dict:
    """Batch-size-1 training: a detection step, then a consistency step when
    the sample admits rearrangement.  Writes per-epoch checkpoints and a
    CSV loss log; aborts with a diagnostic dump on a non-finite loss."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    optimizer = AdamW(model.parameters(), lr=settings.learning_rate,
                      weight_decay=settings.weight_decay)
    loss_cfg = DetectionLossConfig(
        lambda_loc=settings.lambda_loc,
        gamma_quality=settings.gamma_quality if settings.quality_mode != "off" else 0.0,
        focal_gamma=settings.focal_gamma,
        focal_alpha=settings.focal_alpha,
        quality_mode=settings.quality_mode,
    )
    order_rng = np.random.default_rng(settings.seed)
    bcl_rng = np.random.default_rng(settings.seed + 1)

    log_lines = [",".join(LOG_COLUMNS)]
    step = 0
    eligible_count = 0
    stop = False
    for epoch in range(settings.epochs):
        order = order_rng.permutation(len(clips))
        for idx in order:
            clip = clips[idx]
            feat = FeatureSequence(Tensor(clip.values.astype(model.cfg.np_dtype)),
                                   frames_per_step=clip.frames_per_step)
            fwd = model.forward_clip(feat)
            total, report = detection_loss(fwd, clip.annotation, loss_cfg)
            if not np.isfinite(report.total):
                _dump_diagnostics(out_dir, step, clip, report)
                raise TrainingError(
                    f"non-finite loss at step {step} on {clip.video_id}; "
                    f"diagnostics written to {out_dir}")
            if total.requires_grad:
                total.backward()
                optimizer.step()
                optimizer.zero_grad()

            con = consistency_step(model, clip, settings, bcl_rng)
            eligible = con is not None
            if eligible:
                con_loss, report.act, report.trip = con
                if not np.isfinite(report.act + report.trip):
                    _dump_diagnostics(out_dir, step, clip, report)
                    raise TrainingError(f"non-finite consistency loss at step {step}")
                if con_loss.requires_grad:
                    con_loss.backward()
                    optimizer.step()
                    optimizer.zero_grad()
                eligible_count += 1

            if step % settings.log_every == 0:
                log_lines.append(_log_row(step, epoch, report, eligible))
            step += 1
            if settings.max_steps is not None and step >= settings.max_steps:
                stop = True
                break
        if settings.checkpoint_every_epoch:
            save_checkpoint(ckpt_dir / f"epoch_{epoch:03d}.ckpt", model.parameters())
        if stop:
            break

    final_path = ckpt_dir / "final.ckpt"
    save_checkpoint(final_path, model.parameters())
    log_path = out_dir / "train_log.csv"
    log_path.write_text("\n".join(log_lines) + "\n")
    return {
        "steps": step,
        "bcl_eligible": eligible_count,
        "checkpoint": str(final_path),
        "log": str(log_path),
    }

"""Command-line entry point: synth, train, infer, eval, gradcheck, bench, report."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import Config, ConfigError, load_config, parse_overrides
from .evaluation import EvalSpec, mean_ap
from .losses import Annotation, Instance
from .model import Detector, ModelConfig, load_checkpoint, restore_into
from .pipeline import (
    ClipSpec,
    SynthSpec,
    TrainSettings,
    infer_video_clips,
    load_annotation_doc,
    load_dataset,
    load_detections,
    load_splits,
    nms_all,
    save_dataset,
    save_detections,
    split_clips,
    synth_dataset,
    train,
)
from .report import render_all

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


def _clip_spec(cfg: Config) -> ClipSpec:
    return ClipSpec(
        clip_length=cfg.clip_length,
        train_overlap=cfg.train_overlap,
        test_overlap=cfg.test_overlap,
        single_clip_frames=cfg.single_clip_frames,
    )


def _build_model(cfg: Config, in_channels: int, num_classes: int) -> Detector:
    return Detector(ModelConfig(
        in_channels=in_channels,
        channels=cfg.channels,
        num_classes=num_classes,
        num_levels=cfg.num_levels,
        groups=cfg.groups,
        pooling=cfg.pooling,
        delta_a=cfg.delta_a,
        delta_b=cfg.delta_b,
        eps_width=cfg.eps_width,
        seed=cfg.seed,
        dtype=cfg.dtype,
    ))


def _train_settings(cfg: Config) -> TrainSettings:
    return TrainSettings(
        epochs=cfg.epochs,
        learning_rate=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        max_steps=cfg.max_steps,
        lambda_loc=cfg.lambda_loc,
        gamma_quality=cfg.gamma_quality,
        quality_mode=cfg.quality_mode,
        focal_gamma=cfg.focal_gamma,
        focal_alpha=cfg.focal_alpha,
        bcl=cfg.bcl,
        bcl_act=cfg.bcl_act,
        bcl_trip=cfg.bcl_trip,
        bcl_delta_a=cfg.delta_a,
        bcl_delta_b=cfg.bcl_delta_b,
        bcl_radius=cfg.bcl_radius,
        bcl_norm=cfg.bcl_norm,
        bcl_symmetric=cfg.bcl_symmetric,
        seed=cfg.seed,
        log_every=cfg.log_every,
    )


def _synth_spec(cfg: Config) -> SynthSpec:
    return SynthSpec(
        num_train=cfg.synth_train,
        num_test=cfg.synth_test,
        num_classes=cfg.synth_classes,
        channels=cfg.synth_channels,
        frames_per_step=cfg.synth_frames_per_step,
        fps=cfg.sample_fps,
        min_frames=cfg.synth_min_frames,
        max_frames=cfg.synth_max_frames,
        min_actions=cfg.synth_min_actions,
        max_actions=cfg.synth_max_actions,
        min_action=cfg.synth_min_action,
        max_action=cfg.synth_max_action,
        min_gap=cfg.synth_min_gap,
        boundary_frames=cfg.synth_boundary,
        boundary_strength=cfg.synth_boundary_strength,
        ramp_frames=cfg.synth_ramp,
        signal_to_noise=cfg.synth_snr,
        confusers_per_video=cfg.synth_confusers,
        confuser_strength=cfg.synth_confuser_strength,
    )


def cmd_synth(cfg: Config, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, labels, splits = synth_dataset(cfg.seed, _synth_spec(cfg))
    save_dataset(out_dir, records, labels, splits)
    cfg.dump(out_dir / "resolved_config.json")
    n_instances = sum(len(r.annotation.instances) for r in records)
    print(f"wrote {len(records)} videos ({n_instances} instances, "
          f"{len(labels)} classes) to {out_dir}")
    return EXIT_OK


def _records_for_split(data_dir, split: str, streams):
    records, labels = load_dataset(data_dir, streams=streams)
    splits = load_splits(data_dir)
    if split not in splits:
        raise ConfigError(f"split {split!r} not present in {data_dir}")
    wanted = set(splits[split])
    return [r for r in records if r.id in wanted], labels


def _train_one_stream(cfg: Config, records, labels, stream: str, out_dir: Path) -> dict:
    clips = []
    spec = _clip_spec(cfg)
    for record in records:
        clips.extend(split_clips(record, spec, mode="train", stream=stream))
    in_channels = records[0].features[stream].shape[1]
    model = _build_model(cfg, in_channels, len(labels))
    result = train(model, clips, _train_settings(cfg), out_dir)
    print(f"[{stream}] {result['steps']} steps, {result['bcl_eligible']} BCL-eligible, "
          f"checkpoint {result['checkpoint']}")
    return result


def cmd_train(cfg: Config, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    streams = ("rgb", "flow") if args.stream == "both" else (args.stream,)
    records, labels = _records_for_split(args.data, args.split, streams)
    if not records:
        raise ConfigError(f"no videos in split {args.split!r}")
    cfg.dump(out_dir / "resolved_config.json")
    for stream in streams:
        stream_dir = out_dir / stream if len(streams) > 1 else out_dir
        _train_one_stream(cfg, records, labels, stream, stream_dir)
    return EXIT_OK


def _load_model(cfg: Config, checkpoint, in_channels: int, num_classes: int) -> Detector:
    model = _build_model(cfg, in_channels, num_classes)
    restore_into(model.parameters(), load_checkpoint(checkpoint))
    return model


def cmd_infer(cfg: Config, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    streams = ("rgb", "flow") if args.stream == "both" else (args.stream,)
    records, labels = _records_for_split(args.data, args.split, streams)
    if not records:
        raise ConfigError(f"no videos in split {args.split!r}")
    cfg.dump(out_dir / "resolved_config.json")

    in_channels = records[0].features[streams[0]].shape[1]
    model = _load_model(cfg, args.checkpoint, in_channels, len(labels))
    flow_model = None
    if args.stream == "both":
        if not args.checkpoint_flow:
            raise ConfigError("--stream both needs --checkpoint-flow")
        flow_model = _load_model(cfg, args.checkpoint_flow,
                                 records[0].features["flow"].shape[1], len(labels))

    spec = _clip_spec(cfg)
    durations = {r.id: r.duration_frames for r in records}
    raw = []
    for record in records:
        clips = split_clips(record, spec, mode="test", stream=streams[0])
        flow_clips = (split_clips(record, spec, mode="test", stream="flow")
                      if flow_model is not None else None)
        raw.extend(infer_video_clips(
            model, clips, durations, top_k=cfg.top_k,
            use_quality=cfg.quality_mode != "off",
            flow_model=flow_model, flow_clips=flow_clips))
    final = nms_all(raw, tiou_threshold=cfg.nms_tiou, score_floor=cfg.score_floor,
                    variant=cfg.nms_variant, sigma=cfg.nms_sigma)
    fps_by_video = {r.id: r.fps for r in records}
    out_path = out_dir / "detections.csv"
    save_detections(out_path, final, labels, fps_by_video)
    print(f"wrote {len(final)} detections for {len(records)} videos to {out_path}")
    return EXIT_OK


def _ground_truth_seconds(data_dir, split: str) -> tuple[dict[str, Annotation], list[str]]:
    doc = load_annotation_doc(data_dir)
    labels = list(doc["labels"])
    label_index = {name: k + 1 for k, name in enumerate(labels)}
    wanted = set(load_splits(data_dir).get(split, doc["videos"]))
    gts = {}
    for video_id, meta in doc["videos"].items():
        if video_id not in wanted:
            continue
        fps = meta["fps"]
        gts[video_id] = Annotation([
            Instance(item["start"] / fps, item["end"] / fps, label_index[item["label"]])
            for item in meta["instances"]
        ])
    return gts, labels


def cmd_eval(cfg: Config, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gts, labels = _ground_truth_seconds(args.data, args.split)
    dets = load_detections(args.detections, labels)
    cfg.dump(out_dir / "resolved_config.json")
    report = mean_ap(dets, gts, EvalSpec(thresholds=tuple(cfg.eval_thresholds),
                                         classes=tuple(labels)))
    report.write(out_dir / "report.json", out_dir / "report_table.txt")
    print(report.table())
    print(f"average mAP {report.average_map:.4f}")
    return EXIT_OK


def cmd_gradcheck(cfg: Config, args) -> int:
    from .verify import composed_head_report, kernel_gradcheck_reports

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = kernel_gradcheck_reports(seed=cfg.seed)
    reports["composed_head"] = composed_head_report(seed=cfg.seed)
    lines = []
    worst = 0.0
    ok = True
    for name, report in reports.items():
        lines.append(f"{name:24s} {report.summary()}")
        worst = max(worst, report.max_rel_err)
        ok = ok and report.passed
    lines.append(f"{'overall':24s} max rel err {worst:.3e}")
    text = "\n".join(lines)
    print(text)
    (out_dir / "gradcheck.txt").write_text(text + "\n")
    cfg.dump(out_dir / "resolved_config.json")
    return EXIT_OK if ok else EXIT_RUNTIME


def cmd_bench(cfg: Config, args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    rows = cfg.clip_length // cfg.synth_frames_per_step
    model = _build_model(cfg, cfg.synth_channels, cfg.synth_classes)
    from .model import FeatureSequence
    from .tensorcore import Tensor

    clip = FeatureSequence(
        Tensor(rng.normal(size=(rows, cfg.synth_channels)).astype(model.cfg.np_dtype)),
        frames_per_step=float(cfg.synth_frames_per_step))
    model.forward_clip(clip)  # warm up
    n = args.iterations
    t0 = time.perf_counter()
    for _ in range(n):
        model.forward_clip(clip)
    elapsed = time.perf_counter() - t0
    result = {
        "clips": n,
        "seconds": elapsed,
        "clips_per_second": n / elapsed,
        "clip_rows": rows,
        "channels": cfg.channels,
        "levels": cfg.num_levels,
    }
    (out_dir / "bench.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    cfg.dump(out_dir / "resolved_config.json")
    print(f"{result['clips_per_second']:.1f} clips/s "
          f"({rows} rows, C={cfg.channels}, {cfg.num_levels} levels)")
    return EXIT_OK


def cmd_report(cfg: Config, args) -> int:
    written = render_all(args.out_dir)
    if not written:
        print(f"nothing to render in {args.out_dir} "
              "(no train_log.csv or report.json found)", file=sys.stderr)
        return EXIT_VALIDATION
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aftal",
        description="Anchor-free temporal action localization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", default=None,
                       help="config file path or shipped profile name "
                            "(thumos, activitynet)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out-dir", required=out_required,
                       help="directory for outputs")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)

    p = sub.add_parser("train", help="train a detector")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--stream", choices=("rgb", "flow", "both"), default="rgb")
    p.add_argument("--split", default="train")

    p = sub.add_parser("infer", help="run inference and write detections")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--checkpoint-flow", default=None)
    p.add_argument("--stream", choices=("rgb", "flow", "both"), default="rgb")
    p.add_argument("--split", default="test")

    p = sub.add_parser("eval", help="score a detections file")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    common(p)

    p = sub.add_parser("bench", help="forward-pass throughput")
    common(p)
    p.add_argument("--iterations", type=int, default=20)

    p = sub.add_parser("report", help="render figures for a run directory")
    common(p)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = parse_overrides(args.set)
        if args.seed is not None:
            overrides["seed"] = args.seed
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    handlers = {
        "synth": cmd_synth,
        "train": cmd_train,
        "infer": cmd_infer,
        "eval": cmd_eval,
        "gradcheck": cmd_gradcheck,
        "bench": cmd_bench,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

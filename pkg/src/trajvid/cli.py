"""Command-line entry points: synth, train, generate, evaluate, serve."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from trajvid import __version__
from trajvid.config import (
    RunConfig,
    load_config,
    pipeline_config_from_run,
    scene_distribution_from_run,
)
from trajvid.errors import ConfigError, NonFiniteLossError, TrajvidError

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_NONFINITE = 3


def _load_run_config(args) -> RunConfig:
    if args.config:
        return load_config(args.config)
    return RunConfig()


def cmd_synth(args) -> int:
    from trajvid.data import make_dataset, save_clip

    cfg = _load_run_config(args)
    if args.seed is not None:
        cfg.seed = args.seed
    count = args.count if args.count is not None else cfg.data.count
    if count < 1:
        print("synth: --count must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out or cfg.data.root)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        dataset = make_dataset(count, scene_distribution_from_run(cfg), seed=cfg.seed,
                               val_fraction=cfg.data.val_fraction)
        for i in range(count):
            clip_dir = out_dir / f"clip_{i:04d}"
            if clip_dir.exists():
                print(f"synth: {clip_dir} already exists", file=sys.stderr)
                return EXIT_FAILURE
            save_clip(dataset.record(i), clip_dir)
            dataset._cache.clear()
        split = {"train": dataset.train_indices, "val": dataset.val_indices, "seed": cfg.seed}
        (out_dir / "split.json").write_text(json.dumps(split, indent=2))
    except OSError as e:
        print(f"synth: I/O failure: {e}", file=sys.stderr)
        return EXIT_FAILURE
    print(f"synth: wrote {count} clips to {out_dir} (seed {cfg.seed})")
    return EXIT_OK


def _load_records(root: Path):
    from trajvid.data import load_clip

    clip_dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name.startswith("clip_"))
    if not clip_dirs:
        raise ConfigError(f"no clip_* directories under {root}")
    return [load_clip(p) for p in clip_dirs]


def cmd_train(args) -> int:
    from trajvid.pipeline import GenerationPipeline, records_to_batch

    cfg = _load_run_config(args)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.iterations is not None:
        cfg.train.iterations = args.iterations
    if args.pretrain_iterations is not None:
        cfg.train.pretrain_iterations = args.pretrain_iterations
    data_root = Path(args.data or cfg.data.root)
    if not data_root.exists():
        print(f"train: dataset directory {data_root} not found", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out or cfg.train.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = _load_records(data_root)
    split_file = data_root / "split.json"
    if split_file.exists():
        train_idx = json.loads(split_file.read_text())["train"]
        records = [records[i] for i in train_idx if i < len(records)]
    pcfg = pipeline_config_from_run(cfg)
    pipe = GenerationPipeline(pcfg, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    log_path = out_dir / "training_log.jsonl"
    ckpt_step = 0

    def run_stage(steps: int, scope: str, conditioned: bool, stage: str, start: int) -> int:
        nonlocal ckpt_step
        if steps <= 0:
            return start
        opt = pipe.make_optimizer(scope)
        step = start
        with open(log_path, "a") as log:
            for _ in range(steps):
                idx = rng.integers(0, len(records), size=cfg.train.batch_size)
                batch = records_to_batch([records[i] for i in idx], pcfg.seg_channels)
                t0 = time.monotonic()
                loss = pipe.train_step(batch, opt, rng, conditioned=conditioned)
                wall_ms = (time.monotonic() - t0) * 1000.0
                step += 1
                log.write(json.dumps({
                    "step": step, "stage": stage, "loss": loss,
                    "lr": opt.lr, "wall_ms": round(wall_ms, 3),
                }) + "\n")
                if step % cfg.train.checkpoint_every == 0:
                    pipe.save(out_dir / f"ckpt_{step:06d}.zip", extra_meta={"step": step})
                    ckpt_step = step
        return step

    try:
        step = run_stage(cfg.train.pretrain_iterations, "core", False, "pretrain", 0)
        step = run_stage(cfg.train.iterations, "conditioning" if cfg.train.frozen_core else "all",
                         True, "conditioned", step)
    except NonFiniteLossError as e:
        print(f"train: aborted: {e}", file=sys.stderr)
        return EXIT_NONFINITE
    pipe.save(out_dir / "ckpt_final.zip", extra_meta={"step": step, "seed": cfg.seed})
    print(f"train: {step} steps done (seed {cfg.seed}), checkpoints in {out_dir}")
    return EXIT_OK


def cmd_generate(args) -> int:
    from trajvid.core import Frame
    from trajvid.data import load_clip
    from trajvid.floio import write_flow_sequence
    from trajvid.pipeline import GenerationPipeline
    from trajvid.pngio import read_png_rgb, write_png_rgb
    from trajvid.providers import LuminanceBandProvider
    from trajvid.trajectory import complete_flow, trajectory_from_json, tracks_to_sparse_flow
    from trajvid.viz import motion_heatmap

    cfg = _load_run_config(args)
    seed = args.seed if args.seed is not None else cfg.seed
    try:
        pipe = GenerationPipeline.from_checkpoint(args.checkpoint)
    except Exception as e:
        print(f"generate: cannot load checkpoint {args.checkpoint}: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        frame0 = Frame(read_png_rgb(args.image))
    except Exception as e:
        print(f"generate: cannot read image {args.image}: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        payload = json.loads(Path(args.trajectory).read_text())
        traj = trajectory_from_json(payload, frame0.width, frame0.height)
    except (OSError, json.JSONDecodeError, ValueError) as e:
        print(f"generate: invalid trajectory JSON: {e}", file=sys.stderr)
        return EXIT_USAGE
    if traj.num_frames != pipe.config.num_frames:
        print(
            f"generate: trajectory frames {traj.num_frames} != model frames "
            f"{pipe.config.num_frames}",
            file=sys.stderr,
        )
        return EXIT_USAGE

    sparse = tracks_to_sparse_flow(traj)
    flow = complete_flow(sparse, sigma=cfg.trajectory.sigma,
                         support_radius=cfg.trajectory.support_radius)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    video = pipe.generate(frame0, flow, LuminanceBandProvider(), seed=seed, steps=args.steps)
    for t in range(video.num_frames):
        write_png_rgb(out_dir / f"gen_{t:04d}.png", video.data[t])
    write_flow_sequence(out_dir, flow.data)
    # the heatmap contract is against the emitted 8-bit frames, so quantize first
    quant = np.round(np.clip(video.data, 0, 1) * 255.0) / 255.0
    heat = motion_heatmap(quant[0], quant[-1])
    write_png_rgb(out_dir / "heatmap.png", heat)
    print(f"generate: {video.num_frames} frames, flow and heatmap written to {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from trajvid.core import VideoTensor
    from trajvid.floio import read_flow_sequence
    from trajvid.metrics import (
        LuminanceHistogramClassifier,
        MetricReport,
        Pix16Embedder,
        evaluate_pair,
        frechet_distance,
        gaussian_stats,
        inception_score,
    )
    from trajvid.pngio import read_png_rgb

    gen_root, ref_root = Path(args.generated), Path(args.reference)
    if not gen_root.exists() or not ref_root.exists():
        print("evaluate: --generated and --reference must exist", file=sys.stderr)
        return EXIT_USAGE

    def read_video(clip_dir: Path):
        frames = sorted(clip_dir.glob("gen_*.png")) or sorted(clip_dir.glob("frame_*.png"))
        if not frames:
            return None
        return VideoTensor(np.stack([read_png_rgb(f) for f in frames]))

    gen_clips = sorted(p for p in gen_root.iterdir() if p.is_dir()) or [gen_root]
    ref_clips = {p.name: p for p in ref_root.iterdir() if p.is_dir()}
    if not ref_clips and (ref_root / "meta.json").exists():
        ref_clips = {gen_clips[0].name: ref_root}

    embedder = Pix16Embedder()
    classifier = LuminanceHistogramClassifier()
    merged = MetricReport()
    psnr_all, ssim_all, fc_all, epe_all, outlier_all = [], [], [], [], []
    gen_embs, ref_embs, gen_probs = [], [], []
    pairs = 0
    for clip_dir in gen_clips:
        ref_dir = ref_clips.get(clip_dir.name)
        gen_video = read_video(clip_dir)
        if gen_video is None:
            continue
        for t in range(gen_video.num_frames):
            gen_embs.append(embedder(gen_video.data[t]))
            gen_probs.append(classifier(gen_video.data[t]))
        if ref_dir is None:
            continue
        ref_video = read_video(ref_dir)
        if ref_video is None or ref_video.data.shape != gen_video.data.shape:
            continue
        for t in range(ref_video.num_frames):
            ref_embs.append(embedder(ref_video.data[t]))
        report = evaluate_pair(gen_video, ref_video, embedder=embedder)
        psnr_all.append(report.values["psnr_db"])
        ssim_all.append(report.values["ssim"])
        fc_all.append(report.values["frame_consistency_pct"])
        gen_flow_files = sorted(clip_dir.glob("flow_*.flo"))
        ref_flow_files = sorted(ref_dir.glob("flow_*.flo"))
        if gen_flow_files and len(gen_flow_files) == len(ref_flow_files):
            from trajvid.metrics import flow_error

            epe, outliers = flow_error(
                read_flow_sequence(clip_dir), read_flow_sequence(ref_dir)
            )
            epe_all.append(epe)
            outlier_all.append(outliers)
        pairs += 1

    if psnr_all:
        merged.add("psnr_db", float(np.mean(psnr_all)), psnr_all, samples=pairs)
        merged.add("ssim", float(np.mean(ssim_all)), ssim_all, samples=pairs)
        merged.add("frame_consistency_pct", float(np.mean(fc_all)), fc_all,
                   embedder=embedder.spec.id, samples=pairs)
    if epe_all:
        merged.add("flow_epe_px", float(np.mean(epe_all)), epe_all, samples=len(epe_all))
        merged.add("flow_outlier_fraction", float(np.mean(outlier_all)), outlier_all)
    if gen_embs and ref_embs:
        fd = frechet_distance(gaussian_stats(np.stack(gen_embs)), gaussian_stats(np.stack(ref_embs)))
        merged.add("frechet_pix16", fd, embedder=embedder.spec.id,
                   samples=len(gen_embs))
    if gen_probs:
        merged.add("inception_score_luma8", inception_score(np.stack(gen_probs)),
                   embedder=classifier.id, samples=len(gen_probs))

    problems = merged.verify()
    if problems:
        print(f"evaluate: internal inconsistency: {problems}", file=sys.stderr)
        return EXIT_FAILURE
    text = json.dumps(merged.to_json(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from trajvid.service import build_app

    cfg = _load_run_config(args)
    checkpoint = args.checkpoint or cfg.service.checkpoint
    if not checkpoint or not Path(checkpoint).exists():
        print("serve: --checkpoint (or service.checkpoint) must point to a file", file=sys.stderr)
        return EXIT_USAGE
    app = build_app(checkpoint, run_config=cfg)
    port = args.port or cfg.service.port
    try:
        uvicorn.run(app, host=cfg.service.host, port=port, log_level="warning")
    except SystemExit as e:
        return int(e.code or EXIT_FAILURE)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajvid",
        description="Trajectory-controllable image-to-video generation at desk scale.",
    )
    parser.add_argument("--version", action="version", version=f"trajvid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration file")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--verbose", action="store_true", help="chatty logging")

    p = sub.add_parser("synth", parents=[common], help="render synthetic clips to disk")
    p.add_argument("--count", type=int, help="number of clips")
    p.add_argument("--out", help="output dataset directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the pipeline")
    p.add_argument("--data", help="dataset directory (from synth)")
    p.add_argument("--out", help="checkpoint/log directory")
    p.add_argument("--iterations", type=int, help="conditioned training steps")
    p.add_argument("--pretrain-iterations", type=int, dest="pretrain_iterations",
                   help="unconditional warmup steps")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("generate", parents=[common], help="generate a video from clicks")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="input frame PNG")
    p.add_argument("--trajectory", required=True, help="trajectory JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--steps", type=int, help="sampler steps")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="score generated clips")
    p.add_argument("--generated", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--out", help="write the JSON report here as well")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP generation service")
    p.add_argument("--checkpoint")
    p.add_argument("--port", type=int)
    p.set_defaults(fn=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"{args.command}: config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TrajvidError as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())

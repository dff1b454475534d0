"""Command-line entry points: synth, train, mat, eval, ablate-interval, bench.

All reports are JSON, all images PNG, checkpoints in the package tensor
format. Exit codes: 0 success, 2 config error, 3 dependency error,
4 input/geometry error.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time

import click
import numpy as np

from . import metrics as metrics_mod
from .config import PipelineConfig, load_config
from .dataset import load_clip, make_bmn_pairs, save_clip, synth_toy_clip
from .errors import (AbmatError, ConfigError, DependencyError, GeometryError,
                     InputError, ShapeError)
from .imaging import VideoSequence, load_video_dir, save_png
from .matching import (BmnModel, BmnScorer, OracleScorer,
                       estimate_inference_cost, train_bmn)
from .pipeline import mat_video
from .refinement import AenModel, train_aen
from .semantic import RenModel, ren_forward, train_ren


def _exit_code(err: AbmatError) -> int:
    if isinstance(err, ConfigError):
        return 2
    if isinstance(err, DependencyError):
        return 3
    return 4


class _Group(click.Group):
    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except AbmatError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(_exit_code(err))


@click.group(cls=_Group)
def main():
    """Adaptive background matting over dynamic background videos."""


def _load_cfg(config_path, seed) -> PipelineConfig:
    cfg = load_config(config_path) if config_path else PipelineConfig().validate()
    if seed is not None:
        cfg.seed = seed
    return cfg


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        h.update(f.read())
    return h.hexdigest()


def _write_manifest(out_dir, command, cfg, timings, checkpoints=None, reports=None):
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "timings_s": timings,
        "checkpoint_hashes": {k: _sha256(v) for k, v in (checkpoints or {}).items()
                              if os.path.exists(v)},
        "reports": reports or [],
    }
    path = os.path.join(out_dir, f"manifest-{command}.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
    return path


def _clip_dirs(clips_root: str) -> list:
    if not os.path.isdir(clips_root):
        raise DependencyError(f"clip directory not found: {clips_root}")
    dirs = sorted(os.path.join(clips_root, d) for d in os.listdir(clips_root)
                  if os.path.isdir(os.path.join(clips_root, d)))
    if not dirs:
        raise DependencyError(f"no clips under {clips_root}")
    return dirs


def _ckpt(cfg, out, name) -> str:
    return os.path.join(out, cfg.paths.checkpoints, f"{name}.ckpt")


def _require(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise DependencyError(f"missing {what}: {path}")
    return path


def _load_models(cfg, out):
    bmn = BmnModel.create(*cfg.bmn_resolution, seed=cfg.seed)
    bmn.load(_require(_ckpt(cfg, out, "bmn"), "BMN checkpoint"))
    ren = RenModel.create(*cfg.ren_resolution, seed=cfg.seed)
    ren.load(_require(_ckpt(cfg, out, "ren"), "REN checkpoint"))
    aen = AenModel.create(cfg.crop_size, seed=cfg.seed)
    aen.load(_require(_ckpt(cfg, out, "aen"), "AEN checkpoint"))
    return bmn, ren, aen


config_opt = click.option("--config", "config_path", type=click.Path(), default=None,
                          help="JSON config file (defaults are full-scale).")
seed_opt = click.option("--seed", type=int, default=None, help="Override config seed.")
out_opt = click.option("--out", type=click.Path(), default=".",
                       help="Base directory for config-relative paths.")


@main.command()
@config_opt
@seed_opt
@out_opt
def synth(config_path, seed, out):
    """Generate toy dynamic-background clips in the clip directory layout."""
    cfg = _load_cfg(config_path, seed)
    t0 = time.perf_counter()
    clips_root = os.path.join(out, cfg.paths.clips)
    os.makedirs(clips_root, exist_ok=True)
    for i in range(cfg.synth.n_clips):
        clip = synth_toy_clip(cfg.seed + i, cfg.synth.n_frames,
                              cfg.synth.height, cfg.synth.width)
        save_clip(clip, os.path.join(clips_root, f"clip{i:03d}"))
    _write_manifest(out, "synth", cfg, {"synth": time.perf_counter() - t0})
    click.echo(f"wrote {cfg.synth.n_clips} clip(s) to {clips_root}")


@main.command()
@click.option("--stage", type=click.Choice(["bmn", "ren", "aen", "cotrain"]),
              required=True)
@config_opt
@seed_opt
@out_opt
def train(stage, config_path, seed, out):
    """Run one training stage; order: bmn, ren, aen, cotrain."""
    cfg = _load_cfg(config_path, seed)
    clips = [load_clip(d) for d in _clip_dirs(os.path.join(out, cfg.paths.clips))]
    ckpt_dir = os.path.join(out, cfg.paths.checkpoints)
    os.makedirs(ckpt_dir, exist_ok=True)
    t0 = time.perf_counter()
    tr = cfg.train

    if stage == "bmn":
        model = BmnModel.create(*cfg.bmn_resolution, seed=cfg.seed)
        pairs = []
        for i, clip in enumerate(clips):
            extra = [s.bgr_gt for c in clips if c is not clip for s in c.samples[::4]]
            pairs += make_bmn_pairs(clip, tr.bmn_negatives,
                                    tr.bmn_transform_magnitude,
                                    seed=cfg.seed + i, extra_backgrounds=extra)
        trace = train_bmn(model, pairs, tr.steps_bmn, lr=tr.lr,
                          batch=tr.batch, seed=cfg.seed)
        model.save(_ckpt(cfg, out, "bmn"))
        extra_cfg = {"resolution": list(cfg.bmn_resolution)}
    elif stage == "ren":
        model = RenModel.create(*cfg.ren_resolution, seed=cfg.seed)
        trace = train_ren(model, clips, tr.steps_ren, lr=tr.lr,
                          batch=tr.batch, seed=cfg.seed)
        model.save(_ckpt(cfg, out, "ren"))
        extra_cfg = {"resolution": list(cfg.ren_resolution), "seed": cfg.seed,
                     "channel_widths": [16, 32, 64, 128]}
        with open(os.path.join(ckpt_dir, "ren-config.json"), "w") as f:
            json.dump(extra_cfg, f, indent=2)
    elif stage == "aen":
        ren_model = RenModel.create(*cfg.ren_resolution, seed=cfg.seed)
        ren_model.load(_require(_ckpt(cfg, out, "ren"), "REN checkpoint"))
        model = AenModel.create(cfg.crop_size, seed=cfg.seed)
        trace = train_aen(model, clips, ren_model, tr.steps_aen, lr=tr.lr,
                          batch=min(tr.batch, 2), seed=cfg.seed,
                          crop_threshold=cfg.crop_threshold,
                          margin_frac=cfg.crop_margin)
        model.save(_ckpt(cfg, out, "aen"))
        extra_cfg = {"crop_size": cfg.crop_size, "seed": cfg.seed,
                     "crop_threshold": cfg.crop_threshold,
                     "crop_margin": cfg.crop_margin,
                     "channel_widths": [16, 32, 64, 128]}
        with open(os.path.join(ckpt_dir, "aen-config.json"), "w") as f:
            json.dump(extra_cfg, f, indent=2)
    else:  # cotrain
        ren_model = RenModel.create(*cfg.ren_resolution, seed=cfg.seed)
        ren_model.load(_require(_ckpt(cfg, out, "ren"), "REN checkpoint"))
        model = AenModel.create(cfg.crop_size, seed=cfg.seed)
        model.load(_require(_ckpt(cfg, out, "aen"), "AEN checkpoint"))
        trace = train_aen(model, clips, ren_model, tr.steps_cotrain, lr=tr.lr,
                          batch=min(tr.batch, 2), seed=cfg.seed, cotrain=True,
                          crop_threshold=cfg.crop_threshold,
                          margin_frac=cfg.crop_margin)
        model.save(_ckpt(cfg, out, "aen"))
        ren_model.save(_ckpt(cfg, out, "ren"))
        extra_cfg = {}

    with open(os.path.join(ckpt_dir, f"{stage}-loss.json"), "w") as f:
        json.dump(trace, f)
    if stage == "bmn":
        with open(os.path.join(ckpt_dir, "bmn-config.json"), "w") as f:
            json.dump({"resolution": list(cfg.bmn_resolution), "seed": cfg.seed,
                       "channel_widths": [16, 32, 64, 128, 128]}, f, indent=2)
    _write_manifest(out, f"train-{stage}", cfg,
                    {stage: time.perf_counter() - t0},
                    checkpoints={n: _ckpt(cfg, out, n) for n in ("bmn", "ren", "aen")})
    click.echo(f"{stage}: {len(trace)} steps, final loss {trace[-1]:.4f}")


@main.command()
@click.option("--video", "video_dir", type=click.Path(), required=True,
              help="Directory of input frame PNGs.")
@click.option("--background", "bg_dir", type=click.Path(), required=True,
              help="Directory of captured background PNGs.")
@config_opt
@seed_opt
@out_opt
def mat(video_dir, bg_dir, config_path, seed, out):
    """Mat a video: per-frame alpha and foreground plus a match report."""
    cfg = _load_cfg(config_path, seed)
    bmn, ren, aen = _load_models(cfg, out)
    video = load_video_dir(video_dir, "frame")
    bg_video = load_video_dir(bg_dir, "frame")
    t0 = time.perf_counter()
    alphas, fgrs, _, records = mat_video(
        BmnScorer(bmn), ren, aen, video, bg_video, cfg.interval,
        crop_threshold=cfg.crop_threshold, margin_frac=cfg.crop_margin)
    out_dir = os.path.join(out, cfg.paths.outputs)
    for sub in ("alpha", "fgr"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    for i, (a, fg) in enumerate(zip(alphas, fgrs)):
        save_png(a, os.path.join(out_dir, "alpha", f"{i:06d}.png"))
        save_png(fg, os.path.join(out_dir, "fgr", f"{i:06d}.png"))
    report_path = os.path.join(out_dir, "match-report.json")
    with open(report_path, "w") as f:
        json.dump(records, f, indent=2)
    _write_manifest(out, "mat", cfg, {"mat": time.perf_counter() - t0},
                    checkpoints={n: _ckpt(cfg, out, n) for n in ("bmn", "ren", "aen")},
                    reports=[report_path])
    click.echo(f"matted {len(video)} frames -> {out_dir}")


@main.command("eval")
@click.option("--pred", "pred_dir", type=click.Path(), required=True,
              help="Directory of predicted alpha PNGs.")
@click.option("--clip", "clip_dir", type=click.Path(), required=True,
              help="Ground-truth clip directory.")
@config_opt
@seed_opt
@out_opt
def eval_cmd(pred_dir, clip_dir, config_path, seed, out):
    """Evaluate predicted mattes against a clip's ground truth."""
    cfg = _load_cfg(config_path, seed)
    preds = list(load_video_dir(pred_dir, "matte"))
    clip = load_clip(clip_dir)
    gts = [s.alpha_gt for s in clip.samples]
    report, rows = metrics_mod.evaluate_frames(preds, gts)
    os.makedirs(out, exist_ok=True)
    report_path = os.path.join(out, "eval-report.json")
    with open(report_path, "w") as f:
        json.dump({**report.to_dict(), "frames": rows}, f, indent=2)
    _write_manifest(out, "eval", cfg, {}, reports=[report_path])
    click.echo(json.dumps(report.to_dict()))


@main.command("ablate-interval")
@click.option("--clip", "clip_dir", type=click.Path(), required=True)
@click.option("--intervals", default="1,2,4,8,16,32,64",
              help="Comma-separated sampling intervals.")
@click.option("--matcher", type=click.Choice(["bmn", "oracle"]), default="bmn",
              help="Candidate scorer: trained BMN or the exact oracle.")
@config_opt
@seed_opt
@out_opt
def ablate_interval(clip_dir, intervals, matcher, config_path, seed, out):
    """Sweep the sampling interval; report background mismatch and metrics."""
    cfg = _load_cfg(config_path, seed)
    interval_list = [int(s) for s in intervals.split(",") if s.strip()]
    if not interval_list or any(i < 1 for i in interval_list):
        raise InputError("intervals must be positive integers")
    bmn, ren, aen = _load_models(cfg, out)
    clip = load_clip(clip_dir)
    video = VideoSequence([s.frame for s in clip.samples])
    bg_video = clip.captured_background
    gts = [s.alpha_gt for s in clip.samples]
    t0 = time.perf_counter()
    table = []
    out_dir = os.path.join(out, cfg.paths.outputs)
    for interval in interval_list:
        if matcher == "oracle":
            scorer = [OracleScorer(s.alpha_gt) for s in clip.samples]
        else:
            scorer = BmnScorer(bmn)
        alphas, _, matched, _ = mat_video(
            scorer, ren, aen, video, bg_video, interval,
            crop_threshold=cfg.crop_threshold, margin_frac=cfg.crop_margin)
        diffs = [metrics_mod.bg_difference(m, s.bgr_gt)
                 for m, s in zip(matched, clip.samples)]
        diff_dir = os.path.join(out_dir, f"interval_{interval:03d}", "bg-diff")
        os.makedirs(diff_dir, exist_ok=True)
        for i, (m, s) in enumerate(zip(matched, clip.samples)):
            save_png(np.abs(m - s.bgr_gt).mean(axis=2),
                     os.path.join(diff_dir, f"{i:06d}.png"))
        report, _ = metrics_mod.evaluate_frames(alphas, gts)
        table.append({"interval": interval,
                      "bg_difference": float(np.mean(diffs)),
                      "sad": report.sad, "mse": report.mse,
                      "gradient": report.gradient,
                      "connectivity": report.connectivity})
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, "ablate-report.json")
    with open(report_path, "w") as f:
        json.dump({"matcher": matcher, "rows": table}, f, indent=2)
    _write_manifest(out, "ablate-interval", cfg,
                    {"ablate": time.perf_counter() - t0}, reports=[report_path])
    for row in table:
        click.echo(json.dumps(row))


@main.command()
@click.option("--n-bg", type=int, default=64, help="Background frames to search.")
@click.option("--intervals", default="1,8")
@config_opt
@seed_opt
@out_opt
def bench(n_bg, intervals, config_path, seed, out):
    """Measure matching/matting time and print the analytic cost estimate."""
    cfg = _load_cfg(config_path, seed)
    interval_list = [int(s) for s in intervals.split(",") if s.strip()]
    if not interval_list or any(i < 1 for i in interval_list):
        raise InputError("intervals must be positive integers")
    if n_bg < 1:
        raise InputError("n_bg must be >= 1")
    bmn, ren, aen = _load_models(cfg, out)
    clip = synth_toy_clip(cfg.seed, max(2, min(n_bg, 8)),
                          cfg.synth.height, cfg.synth.width)
    frame = clip.samples[0].frame
    rng = np.random.default_rng(cfg.seed)
    bg_frames = [np.clip(clip.samples[i % len(clip)].bgr_gt
                         + rng.uniform(-0.02, 0.02), 0.0, 1.0)
                 for i in range(n_bg)]
    bg_video = VideoSequence(bg_frames)
    scorer = BmnScorer(bmn)
    scorer.prepare(bg_video)

    t0 = time.perf_counter()
    coarse = ren_forward(ren, frame, bg_video[0])
    from .refinement import refine
    refine(aen, frame, bg_video[0], coarse,
           crop_threshold=cfg.crop_threshold, margin_frac=cfg.crop_margin)
    t_mat_ms = (time.perf_counter() - t0) * 1e3

    rows = []
    for interval in interval_list:
        from .matching import find_best_background
        t0 = time.perf_counter()
        result = find_best_background(scorer, frame, bg_video, interval)
        measured_ms = (time.perf_counter() - t0) * 1e3
        t_match_ms = measured_ms / result.candidates_evaluated
        rows.append({
            "interval": interval,
            "candidates_evaluated": result.candidates_evaluated,
            "measured_match_ms": measured_ms,
            "per_candidate_ms": t_match_ms,
            "estimate_ms": estimate_inference_cost(n_bg, interval,
                                                   t_match_ms, t_mat_ms),
        })
    reference_row = {"n_bg": 344, "interval": 8, "t_match_ms": 2.83,
                 "t_mat_ms": 34.8,
                 "estimate_ms": estimate_inference_cost(344, 8, 2.83, 34.8)}
    os.makedirs(out, exist_ok=True)
    report_path = os.path.join(out, "bench-report.json")
    with open(report_path, "w") as f:
        json.dump({"n_bg": n_bg, "t_mat_ms": t_mat_ms, "rows": rows,
                   "reference_estimate": reference_row}, f, indent=2)
    _write_manifest(out, "bench", cfg, {}, reports=[report_path])
    for row in rows:
        click.echo(json.dumps(row))
    click.echo(json.dumps({"reference_estimate": reference_row}))


if __name__ == "__main__":
    main()

"""Dynamic-background matting dataset synthesis.

Composes foreground/alpha tracks over drifting background tracks, keeps the
frame-reversed background video as the "captured background" stream, and
emits labeled training pairs for the background matching network. All
generation is deterministic given a seed.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ShapeError
from .imaging import (VideoSequence, composite, load_video_dir, resize_bilinear,
                      save_png)

__all__ = [
    "CompositeSample",
    "SyntheticClip",
    "BmnPair",
    "compose_clip",
    "synth_toy_clip",
    "make_bmn_pairs",
    "translate_replicate",
    "save_clip",
    "load_clip",
]


@dataclass(frozen=True)
class CompositeSample:
    """One supervised unit: composed frame plus its ground-truth factors."""

    frame: np.ndarray
    alpha_gt: np.ndarray
    fgr_gt: np.ndarray
    bgr_gt: np.ndarray


@dataclass(frozen=True)
class SyntheticClip:
    samples: list = field(default_factory=list)
    captured_background: VideoSequence = None
    seed: int = 0

    def __len__(self):
        return len(self.samples)

    @property
    def height(self):
        return self.samples[0].frame.shape[0]

    @property
    def width(self):
        return self.samples[0].frame.shape[1]


@dataclass(frozen=True)
class BmnPair:
    frame: np.ndarray
    candidate_bg: np.ndarray
    label: float


def _quantize(a: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit grid so PNG round trips are lossless."""
    return np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5) / 255.0


def compose_clip(fgr_video: VideoSequence, alpha_video: list,
                 bgr_video: VideoSequence, seed: int = 0) -> SyntheticClip:
    """Composite track triples frame by frame; reversed background is kept
    as the captured-background stream."""
    if len(fgr_video) != len(alpha_video) or len(fgr_video) != len(bgr_video):
        raise InputError("all tracks must have equal frame counts")
    if len(fgr_video) == 0:
        raise InputError("empty tracks")
    h, w = bgr_video.height, bgr_video.width
    samples = []
    for fgr, alpha, bgr in zip(fgr_video, alpha_video, bgr_video):
        if fgr.shape[:2] != (h, w):
            fgr = np.clip(resize_bilinear(fgr, h, w), 0.0, 1.0)
        if alpha.shape != (h, w):
            alpha = np.clip(resize_bilinear(alpha, h, w), 0.0, 1.0)
        samples.append(CompositeSample(frame=composite(fgr, bgr, alpha),
                                       alpha_gt=alpha, fgr_gt=fgr, bgr_gt=bgr))
    captured = VideoSequence(list(reversed(list(bgr_video))))
    return SyntheticClip(samples=samples, captured_background=captured, seed=seed)


def _smooth_texture(rng: np.random.Generator, h: int, w: int, lo: float,
                    hi: float, cell: int = 8) -> np.ndarray:
    """Low-frequency RGB texture: coarse noise upsampled bilinearly."""
    gh, gw = max(2, h // cell + 2), max(2, w // cell + 2)
    coarse = rng.uniform(lo, hi, size=(gh, gw, 3))
    return np.clip(resize_bilinear(coarse, h, w), 0.0, 1.0)


def synth_toy_clip(seed: int, n_frames: int, h: int, w: int) -> SyntheticClip:
    """Procedural desk-scale clip: a moving soft-edged blob over a drifting
    textured background."""
    if n_frames < 1:
        raise InputError("n_frames must be >= 1")
    if h < 8 or w < 8:
        raise ShapeError("toy clips need at least 8x8 frames")
    rng = np.random.default_rng(seed)

    # Background: window sliding across a larger texture, one pixel-ish of
    # drift per frame so neighboring frames stay similar but distinct.
    span_y = max(4, int(0.75 * n_frames)) + 4
    span_x = n_frames + 4
    # cell size ~ drift span so mismatch keeps growing over long intervals
    big = _smooth_texture(rng, h + span_y, w + span_x, 0.0, 0.85,
                          cell=max(10, (w + span_x) // 6))
    fgr_tex = _smooth_texture(rng, h, w, 0.35, 1.0, cell=6)

    radius = 0.27 * min(h, w)
    edge = 2.5
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    phase = rng.uniform(0.0, 2.0 * np.pi)

    fgr_frames, alpha_frames, bgr_frames = [], [], []
    for i in range(n_frames):
        oy = int(round(0.7 * i)) + 2
        ox = i + 2
        bgr = _quantize(big[oy:oy + h, ox:ox + w])

        ti = i / max(1, n_frames - 1)
        cy = h * (0.5 + 0.18 * np.sin(2.0 * np.pi * ti + phase))
        cx = w * (0.5 + 0.22 * np.cos(2.0 * np.pi * ti + phase))
        dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
        alpha = _quantize(np.clip((radius - dist) / edge + 0.5, 0.0, 1.0))

        fgr_frames.append(_quantize(fgr_tex))
        alpha_frames.append(alpha)
        bgr_frames.append(bgr)

    return compose_clip(VideoSequence(fgr_frames), alpha_frames,
                        VideoSequence(bgr_frames), seed=seed)


def translate_replicate(img: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer translation with edge-replicate fill."""
    h, w = img.shape[:2]
    ay, ax = abs(dy), abs(dx)
    pad = ((ay, ay), (ax, ax)) + (((0, 0),) if img.ndim == 3 else ())
    padded = np.pad(img, pad, mode="edge")
    return padded[ay - dy:ay - dy + h, ax - dx:ax - dx + w]


def make_bmn_pairs(clip: SyntheticClip, n_negatives: int = 7,
                   transform_magnitude: int = 4, seed: int = 0,
                   extra_backgrounds: list | None = None) -> list:
    """Positive and negative (frame, candidate background) pairs.

    Every label is computed by the exact similarity oracle under the GT
    alpha, never assumed. Negatives alternate between backgrounds taken
    from other frames/clips and perturbed (translated, brightness-shifted)
    copies of the GT background.
    """
    from .matching import oracle_similarity

    if len(clip) == 0:
        raise InputError("clip is empty")
    rng = np.random.default_rng(seed)
    others = [s.bgr_gt for s in clip.samples] + list(extra_backgrounds or [])
    pairs = []
    for idx, s in enumerate(clip.samples):
        pairs.append(BmnPair(
            frame=s.frame, candidate_bg=s.bgr_gt,
            label=oracle_similarity(s.frame, s.bgr_gt, s.alpha_gt)))
        for k in range(n_negatives):
            if k % 2 == 0 and len(others) > 1:
                j = int(rng.integers(len(others)))
                while j == idx and len(others) > 1:
                    j = int(rng.integers(len(others)))
                cand = others[j]
            else:
                dy = int(rng.integers(-transform_magnitude, transform_magnitude + 1))
                dx = int(rng.integers(-transform_magnitude, transform_magnitude + 1))
                shift = rng.uniform(-0.1, 0.1)
                cand = np.clip(translate_replicate(s.bgr_gt, dy, dx) + shift, 0.0, 1.0)
            pairs.append(BmnPair(
                frame=s.frame, candidate_bg=cand,
                label=oracle_similarity(s.frame, cand, s.alpha_gt)))
    return pairs


# ---------------------------------------------------------------------------
# clip directory layout: clip/{frame,alpha,fgr,bgr,captured_bg}/%06d.png + meta.json

_TRACKS = ("frame", "alpha", "fgr", "bgr", "captured_bg")


def save_clip(clip: SyntheticClip, path: str) -> None:
    for track in _TRACKS:
        os.makedirs(os.path.join(path, track), exist_ok=True)
    for i, s in enumerate(clip.samples):
        name = f"{i:06d}.png"
        save_png(s.frame, os.path.join(path, "frame", name))
        save_png(s.alpha_gt, os.path.join(path, "alpha", name))
        save_png(s.fgr_gt, os.path.join(path, "fgr", name))
        save_png(s.bgr_gt, os.path.join(path, "bgr", name))
    # the captured track is saved on its own: it may have a different
    # length than the sample list (it is a track of the scene, not a
    # per-sample annotation)
    for i, f in enumerate(clip.captured_background):
        save_png(f, os.path.join(path, "captured_bg", f"{i:06d}.png"))
    meta = {"n_frames": len(clip), "height": clip.height, "width": clip.width,
            "seed": clip.seed}
    with open(os.path.join(path, "meta.json"), "w") as f:
        json.dump(meta, f, indent=2)


def load_clip(path: str) -> SyntheticClip:
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    frames = load_video_dir(os.path.join(path, "frame"), "frame")
    alphas = load_video_dir(os.path.join(path, "alpha"), "matte")
    fgrs = load_video_dir(os.path.join(path, "fgr"), "frame")
    bgrs = load_video_dir(os.path.join(path, "bgr"), "frame")
    captured = load_video_dir(os.path.join(path, "captured_bg"), "frame")
    samples = [CompositeSample(frame=f, alpha_gt=a, fgr_gt=fg, bgr_gt=bg)
               for f, a, fg, bg in zip(frames, alphas, fgrs, bgrs)]
    return SyntheticClip(samples=samples, captured_background=captured,
                         seed=meta.get("seed", 0))

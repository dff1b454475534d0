"""End-to-end matting of a video against a captured background video."""

from __future__ import annotations

import time

import numpy as np

from .imaging import VideoSequence
from .matching import BmnScorer, OracleScorer, find_best_background
from .refinement import AenModel, refine
from .semantic import RenModel, ren_forward

__all__ = ["mat_video"]


def mat_video(bmn_scorer, ren_model: RenModel, aen_model: AenModel,
              video: VideoSequence, bg_video: VideoSequence, interval: int,
              crop_threshold: float = 0.1, margin_frac: float = 0.1):
    """Match, coarse-estimate, and refine every frame.

    ``bmn_scorer`` is a BmnScorer (trained matching network) or, for
    studies with known alpha, a per-frame list of OracleScorers. Returns
    (alphas, foregrounds, matched background frames, match records).
    """
    bmn_scorer.prepare(bg_video) if not isinstance(bmn_scorer, list) else None
    alphas, fgrs, matched_bgs, records = [], [], [], []
    for i, frame in enumerate(video):
        scorer = bmn_scorer[i] if isinstance(bmn_scorer, list) else bmn_scorer
        t0 = time.perf_counter()
        match = find_best_background(scorer, frame, bg_video, interval)
        matched_bg = bg_video[match.best_index]
        coarse = ren_forward(ren_model, frame, matched_bg)
        out = refine(aen_model, frame, matched_bg, coarse,
                     crop_threshold=crop_threshold, margin_frac=margin_frac)
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        alphas.append(out.full_alpha)
        fgrs.append(out.full_fgr)
        matched_bgs.append(matched_bg)
        records.append({
            "frame_index": i,
            "matched_bg_index": match.best_index,
            "score": match.score,
            "candidates_evaluated": match.candidates_evaluated,
            "elapsed_ms": elapsed_ms,
        })
    return alphas, fgrs, matched_bgs, records

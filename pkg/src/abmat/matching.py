"""Background matching: exact similarity oracle, the BMN similarity
regressor, its training loop, and best-match search with fixed-interval
sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor
from .errors import DegenerateRegionError, InputError, ShapeError
from .imaging import VideoSequence, resize_bilinear
from .nets import add_conv, add_dense, conv_block, fc, frames_to_nchw
from . import tensorio

__all__ = [
    "oracle_similarity",
    "BmnModel",
    "bmn_forward",
    "bmn_loss",
    "train_bmn",
    "OracleScorer",
    "BmnScorer",
    "MatchResult",
    "find_best_background",
    "estimate_inference_cost",
]

BMN_CONV_CHANNELS = (16, 32, 64, 128, 128)
BMN_FC_WIDTH = 64


def oracle_similarity(frame: np.ndarray, candidate_bg: np.ndarray,
                      alpha: np.ndarray) -> float:
    """One minus the mean L1 difference over the background region.

    The per-pixel difference is averaged across channels so the score lies
    in [0, 1]; pixels are weighted by (1 - alpha).
    """
    if frame.shape != candidate_bg.shape:
        raise ShapeError(f"frame {frame.shape} vs candidate {candidate_bg.shape}")
    if alpha.shape != frame.shape[:2]:
        raise ShapeError(f"alpha {alpha.shape} vs frame {frame.shape[:2]}")
    weight = 1.0 - alpha
    denom = weight.sum()
    if denom <= 0.0:
        raise DegenerateRegionError("alpha is 1 everywhere; no background region")
    per_pixel = np.abs(frame - candidate_bg).mean(axis=2)
    return float(1.0 - (per_pixel * weight).sum() / denom)


@dataclass
class BmnModel:
    """Similarity regressor over a 6-channel (frame, background) stack."""

    store: ParameterStore
    h_b: int
    w_b: int

    @classmethod
    def create(cls, h_b: int, w_b: int, seed: int = 0) -> "BmnModel":
        rng = np.random.default_rng(seed)
        store = ParameterStore()
        cin = 6
        for i, cout in enumerate(BMN_CONV_CHANNELS):
            add_conv(store, rng, f"conv{i}", cin, cout)
            cin = cout
        add_dense(store, rng, "fc0", BMN_CONV_CHANNELS[-1], BMN_FC_WIDTH)
        add_dense(store, rng, "fc1", BMN_FC_WIDTH, 1)
        return cls(store=store, h_b=h_b, w_b=w_b)

    def forward_t(self, x: Tensor) -> Tensor:
        """Tape forward over an (N, 6, h_b, w_b) batch -> (N, 1) in (0, 1)."""
        h = x
        for i in range(len(BMN_CONV_CHANNELS)):
            h = conv_block(self.store, f"conv{i}", h, stride=2, padding=1)
        h = ad.global_avg_pool(h)
        h = ad.leaky_relu(fc(self.store, "fc0", h))
        return ad.sigmoid(fc(self.store, "fc1", h))

    def save(self, path: str) -> None:
        tensorio.save_checkpoint(self.store.state_dict(), path)

    def load(self, path: str) -> None:
        self.store.load_state_dict(tensorio.load_checkpoint(path))


def _bmn_input(model: BmnModel, frame: np.ndarray, candidate_bg: np.ndarray) -> np.ndarray:
    if frame.shape[:2] != (model.h_b, model.w_b):
        frame = np.clip(resize_bilinear(frame, model.h_b, model.w_b), 0.0, 1.0)
    if candidate_bg.shape[:2] != (model.h_b, model.w_b):
        candidate_bg = np.clip(resize_bilinear(candidate_bg, model.h_b, model.w_b), 0.0, 1.0)
    return frames_to_nchw([frame, candidate_bg])


def bmn_forward(model: BmnModel, frame: np.ndarray, candidate_bg: np.ndarray) -> float:
    """Deterministic similarity estimate in (0, 1)."""
    out = model.forward_t(Tensor(_bmn_input(model, frame, candidate_bg)))
    return float(out.data[0, 0])


def bmn_loss(model: BmnModel, pair) -> Tensor:
    """L1 distance between the model's estimate and the pair's label."""
    pred = model.forward_t(Tensor(_bmn_input(model, pair.frame, pair.candidate_bg)))
    return ad.l1_loss(pred, Tensor(np.full((1, 1), pair.label)))


def train_bmn(model: BmnModel, pairs: list, steps: int, lr: float = 1e-3,
              batch: int = 4, seed: int = 0) -> list:
    """Adam on |prediction - label| over shuffled mini-batches.

    Returns the per-step loss trace. Pair images are resized to the model
    resolution once up front.
    """
    if not pairs:
        raise InputError("no training pairs")
    inputs = np.concatenate([_bmn_input(model, p.frame, p.candidate_bg) for p in pairs])
    labels = np.array([p.label for p in pairs]).reshape(-1, 1)
    rng = np.random.default_rng(seed)
    trace = []
    for _ in range(steps):
        idx = rng.choice(len(pairs), size=min(batch, len(pairs)), replace=False)
        model.store.zero_grad()
        pred = model.forward_t(Tensor(inputs[idx]))
        loss = ad.l1_loss(pred, Tensor(labels[idx]))
        loss.backward()
        ad.adam_step(model.store, lr=lr)
        trace.append(loss.item())
    return trace


class OracleScorer:
    """Scores candidates with the exact similarity under a known alpha."""

    def __init__(self, alpha: np.ndarray):
        self.alpha = alpha

    def prepare(self, video: VideoSequence) -> None:
        pass

    def score(self, frame: np.ndarray, video: VideoSequence, index: int) -> float:
        return oracle_similarity(frame, video[index], self.alpha)


class BmnScorer:
    """Scores candidates with BMN over a cached low-resolution index."""

    def __init__(self, model: BmnModel):
        self.model = model
        self._cache_key = None
        self._cache = None

    def prepare(self, video: VideoSequence) -> None:
        if self._cache_key == id(video):
            return
        m = self.model
        self._cache = [
            np.clip(resize_bilinear(f, m.h_b, m.w_b), 0.0, 1.0)
            if f.shape[:2] != (m.h_b, m.w_b) else f
            for f in video
        ]
        self._cache_key = id(video)

    def score(self, frame: np.ndarray, video: VideoSequence, index: int) -> float:
        self.prepare(video)
        return bmn_forward(self.model, frame, self._cache[index])


@dataclass(frozen=True)
class MatchResult:
    best_index: int
    score: float
    candidates_evaluated: int


def find_best_background(scorer, frame: np.ndarray, bg_video: VideoSequence,
                         interval: int = 1) -> MatchResult:
    """Highest-similarity frame among candidates 0, interval, 2*interval...

    Ties break toward the lowest index; exactly ceil(n/interval)
    candidates are evaluated.
    """
    if interval < 1:
        raise InputError("interval must be >= 1")
    n = len(bg_video)
    if n == 0:
        raise InputError("empty background video")
    scorer.prepare(bg_video)
    best_index, best_score, count = -1, -np.inf, 0
    for i in range(0, n, interval):
        s = scorer.score(frame, bg_video, i)
        count += 1
        if s > best_score:
            best_index, best_score = i, s
    return MatchResult(best_index=best_index, score=best_score,
                       candidates_evaluated=count)


def estimate_inference_cost(n_bg: int, interval: int, t_match_ms: float,
                            t_mat_ms: float) -> float:
    """Analytic per-frame cost: candidates * match time + matting time."""
    if n_bg < 1 or interval < 1:
        raise InputError("n_bg and interval must be >= 1")
    return math.ceil(n_bg / interval) * t_match_ms + t_mat_ms

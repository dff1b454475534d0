"""Coarse semantic alpha estimation: a small feature-pyramid network over
the (frame, matched background) stack with sigmoid alpha heads at full,
half, and quarter resolution, supervised by multi-scale BCE."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import tensorio
from .autodiff import ParameterStore, Tensor
from .errors import InputError, ShapeError
from .imaging import resize_bilinear
from .dataset import translate_replicate
from .nets import add_conv, conv, conv_block, frames_to_nchw

__all__ = ["RenModel", "CoarseAlpha", "ren_forward", "ren_loss", "ren_loss_t",
           "train_ren"]

REN_ENCODER_CHANNELS = (16, 32, 64, 128)
REN_LATERAL_CHANNELS = 32


@dataclass(frozen=True)
class CoarseAlpha:
    """Sigmoid alpha heads at scales 1, 1/2, 1/4 of the network input."""

    full: np.ndarray
    half: np.ndarray
    quarter: np.ndarray


@dataclass
class RenModel:
    store: ParameterStore
    h_r: int
    w_r: int

    @classmethod
    def create(cls, h_r: int, w_r: int, seed: int = 0) -> "RenModel":
        if h_r % 8 or w_r % 8:
            raise ShapeError("REN resolution must be divisible by 8")
        rng = np.random.default_rng(seed)
        store = ParameterStore()
        cin = 6
        for i, cout in enumerate(REN_ENCODER_CHANNELS):
            add_conv(store, rng, f"enc{i}", cin, cout)
            cin = cout
        for i, c in enumerate(REN_ENCODER_CHANNELS):
            add_conv(store, rng, f"lat{i}", c, REN_LATERAL_CHANNELS, k=1)
        add_conv(store, rng, "head_full", REN_LATERAL_CHANNELS, 1)
        add_conv(store, rng, "head_half", REN_LATERAL_CHANNELS, 1)
        add_conv(store, rng, "head_quarter", REN_LATERAL_CHANNELS, 1)
        return cls(store=store, h_r=h_r, w_r=w_r)

    def forward_t(self, x: Tensor) -> tuple:
        """(N, 6, h_r, w_r) -> sigmoid heads at full, 1/2, 1/4 scale."""
        n, c, h, w = x.data.shape
        if h % 8 or w % 8:
            raise ShapeError("REN input resolution must be divisible by 8")
        feats = []
        cur = x
        for i in range(len(REN_ENCODER_CHANNELS)):
            cur = conv_block(self.store, f"enc{i}", cur, stride=2, padding=1)
            feats.append(cur)
        # top-down pathway: 1x1 laterals + upsample-and-add
        p = conv(self.store, f"lat{len(feats) - 1}", feats[-1], padding=0)
        for i in range(len(feats) - 2, -1, -1):
            lat = conv(self.store, f"lat{i}", feats[i], padding=0)
            up = ad.bilinear_resize(p, lat.data.shape[2], lat.data.shape[3])
            p = ad.add(lat, up)
            if i == 1:
                p_quarter = p
            elif i == 0:
                p_half = p
        full_feat = ad.bilinear_resize(p_half, h, w)
        return (
            ad.sigmoid(conv(self.store, "head_full", full_feat)),
            ad.sigmoid(conv(self.store, "head_half", p_half)),
            ad.sigmoid(conv(self.store, "head_quarter", p_quarter)),
        )

    def save(self, path: str) -> None:
        tensorio.save_checkpoint(self.store.state_dict(), path)

    def load(self, path: str) -> None:
        self.store.load_state_dict(tensorio.load_checkpoint(path))


def _ren_input(model: RenModel, frame: np.ndarray, matched_bg: np.ndarray) -> np.ndarray:
    if frame.shape[:2] != (model.h_r, model.w_r):
        frame = np.clip(resize_bilinear(frame, model.h_r, model.w_r), 0.0, 1.0)
    if matched_bg.shape[:2] != (model.h_r, model.w_r):
        matched_bg = np.clip(resize_bilinear(matched_bg, model.h_r, model.w_r), 0.0, 1.0)
    return frames_to_nchw([frame, matched_bg])


def ren_forward(model: RenModel, frame: np.ndarray, matched_bg: np.ndarray) -> CoarseAlpha:
    """Deterministic coarse alpha at three scales."""
    full, half, quarter = model.forward_t(Tensor(_ren_input(model, frame, matched_bg)))
    return CoarseAlpha(full=full.data[0, 0], half=half.data[0, 0],
                       quarter=quarter.data[0, 0])


def _bce_np(pred: np.ndarray, target: np.ndarray) -> float:
    p = np.clip(pred, ad.BCE_EPS, 1.0 - ad.BCE_EPS)
    return float((-target * np.log(p) - (1.0 - target) * np.log1p(-p)).mean())


def ren_loss(coarse: CoarseAlpha, alpha_gt: np.ndarray) -> float:
    """Sum of BCE at full, half, and quarter scale against downscaled GT."""
    gt_half = np.clip(resize_bilinear(alpha_gt, *coarse.half.shape), 0.0, 1.0)
    gt_quarter = np.clip(resize_bilinear(alpha_gt, *coarse.quarter.shape), 0.0, 1.0)
    return (_bce_np(coarse.full, alpha_gt) + _bce_np(coarse.half, gt_half)
            + _bce_np(coarse.quarter, gt_quarter))


def ren_loss_t(heads: tuple, alpha_gt: np.ndarray) -> Tensor:
    """Differentiable multi-scale BCE.

    ``alpha_gt`` is (h, w) for a single sample or (N, h, w) for a batch;
    it is bilinearly downscaled to each head's resolution.
    """
    full, half, quarter = heads
    n = full.data.shape[0]
    gt = alpha_gt[None] if alpha_gt.ndim == 2 else alpha_gt

    def gt_batch(h, w):
        if gt.shape[1:] == (h, w):
            g = gt
        else:
            g = np.stack([np.clip(resize_bilinear(m, h, w), 0.0, 1.0) for m in gt])
        return Tensor(np.broadcast_to(g[:, None], (n, 1, h, w)).copy())

    loss = ad.bce_loss(full, gt_batch(*full.data.shape[2:]))
    loss = ad.add(loss, ad.bce_loss(half, gt_batch(*half.data.shape[2:])))
    return ad.add(loss, ad.bce_loss(quarter, gt_batch(*quarter.data.shape[2:])))


def perturb_background(bg: np.ndarray, rng: np.random.Generator,
                       max_shift: int = 3, max_brightness: float = 0.05) -> np.ndarray:
    """Translated/brightness-shifted background used as training noise."""
    dy = int(rng.integers(-max_shift, max_shift + 1))
    dx = int(rng.integers(-max_shift, max_shift + 1))
    shift = rng.uniform(-max_brightness, max_brightness)
    return np.clip(translate_replicate(bg, dy, dx) + shift, 0.0, 1.0)


def train_ren(model: RenModel, clips: list, steps: int, lr: float = 1e-3,
              batch: int = 2, seed: int = 0, perturb_prob: float = 0.5,
              perturb_shift: int = 6) -> list:
    """Adam on the multi-scale BCE over (frame, GT background, GT alpha)
    samples; with probability ``perturb_prob`` the background input is a
    translated/brightness-shifted copy, which is what makes the coarse
    estimate robust to matching misregistration. ``perturb_shift`` is in
    model-resolution pixels and should cover the translation the matcher
    can leave behind at its coarsest sampling interval."""
    samples = [s for clip in clips for s in clip.samples]
    if not samples:
        raise InputError("no training samples")
    rng = np.random.default_rng(seed)
    pre = []
    for s in samples:
        frame = np.clip(resize_bilinear(s.frame, model.h_r, model.w_r), 0.0, 1.0) \
            if s.frame.shape[:2] != (model.h_r, model.w_r) else s.frame
        bg = np.clip(resize_bilinear(s.bgr_gt, model.h_r, model.w_r), 0.0, 1.0) \
            if s.bgr_gt.shape[:2] != (model.h_r, model.w_r) else s.bgr_gt
        gt = np.clip(resize_bilinear(s.alpha_gt, model.h_r, model.w_r), 0.0, 1.0) \
            if s.alpha_gt.shape != (model.h_r, model.w_r) else s.alpha_gt
        pre.append((frame, bg, gt))
    trace = []
    for _ in range(steps):
        idx = rng.choice(len(pre), size=min(batch, len(pre)), replace=False)
        xs, gts = [], []
        for i in idx:
            frame, bg, gt = pre[i]
            if rng.uniform() < perturb_prob:
                bg = perturb_background(bg, rng, max_shift=perturb_shift)
            xs.append(frames_to_nchw([frame, bg])[0])
            gts.append(gt)
        model.store.zero_grad()
        heads = model.forward_t(Tensor(np.stack(xs)))
        loss = ren_loss_t(heads, np.stack(gts))
        loss.backward()
        ad.adam_step(model.store, lr=lr)
        trace.append(loss.item())
    return trace

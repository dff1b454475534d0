"""Crop/zoom alpha refinement: derive a square crop box from the coarse
matte, refine alpha and a foreground residual at a fixed zoomed resolution,
and paste the results back into the full frame."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import tensorio
from .autodiff import ParameterStore, Tensor
from .errors import InputError, ShapeError
from .imaging import CropTransform, crop_and_zoom, paste_back, resize_bilinear
from .nets import add_conv, conv, conv_block, frames_to_nchw
from .semantic import RenModel, perturb_background, ren_loss_t

__all__ = ["AenModel", "RefineOutput", "derive_crop", "aen_forward",
           "aen_loss", "aen_loss_t", "refine", "train_aen"]

AEN_ENCODER_CHANNELS = (16, 32, 64, 128)
AEN_DECODER_CHANNELS = (64, 32, 16, 16)


def derive_crop(coarse: np.ndarray, margin_frac: float, z: int,
                src_h: int, src_w: int, threshold: float = 0.1) -> CropTransform:
    """Square crop box around the coarse matte's above-threshold support.

    The box is expanded by ``margin_frac`` of its larger side on every
    edge, squared by symmetric expansion, and clamped to the image. When
    nothing exceeds the threshold the full image is returned with the
    ``fallback`` flag set.
    """
    if margin_frac < 0:
        raise InputError("margin_frac must be >= 0")
    if coarse.shape != (src_h, src_w):
        coarse = resize_bilinear(coarse, src_h, src_w)
    mask = coarse > threshold
    if not mask.any():
        return CropTransform(0, 0, src_h, src_w, (z, z), fallback=True)
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    top, bottom = int(rows[0]), int(rows[-1]) + 1
    left, right = int(cols[0]), int(cols[-1]) + 1
    margin = math.ceil(margin_frac * max(bottom - top, right - left))
    top -= margin
    bottom += margin
    left -= margin
    right += margin
    # square up by symmetric expansion of the shorter side
    bh, bw = bottom - top, right - left
    if bh < bw:
        grow = bw - bh
        top -= grow // 2
        bottom += grow - grow // 2
    elif bw < bh:
        grow = bh - bw
        left -= grow // 2
        right += grow - grow // 2
    top = max(0, top)
    left = max(0, left)
    bottom = min(src_h, bottom)
    right = min(src_w, right)
    return CropTransform(top, left, bottom, right, (z, z))


@dataclass
class AenModel:
    """Encoder/decoder refiner with sigmoid-alpha and linear-residual heads."""

    store: ParameterStore
    z: int

    @classmethod
    def create(cls, z: int, seed: int = 0) -> "AenModel":
        if z % 16:
            raise ShapeError("crop resolution must be divisible by 16")
        rng = np.random.default_rng(seed)
        store = ParameterStore()
        cin = 7
        for i, cout in enumerate(AEN_ENCODER_CHANNELS):
            add_conv(store, rng, f"enc{i}", cin, cout)
            cin = cout
        skips = (*AEN_ENCODER_CHANNELS[-2::-1], 7)
        cin = AEN_ENCODER_CHANNELS[-1]
        for i, (cout, skip) in enumerate(zip(AEN_DECODER_CHANNELS, skips)):
            add_conv(store, rng, f"dec{i}", cin + skip, cout)
            cin = cout
        add_conv(store, rng, "head_alpha", cin, 1)
        add_conv(store, rng, "head_residual", cin, 3)
        return cls(store=store, z=z)

    def forward_t(self, x: Tensor) -> tuple:
        """(N, 7, Z, Z) -> (sigmoid alpha (N,1,Z,Z), residual (N,3,Z,Z))."""
        if x.data.shape[2] != self.z or x.data.shape[3] != self.z:
            raise ShapeError(f"AEN input must be {self.z}x{self.z}")
        skips = [x]
        cur = x
        for i in range(len(AEN_ENCODER_CHANNELS)):
            cur = conv_block(self.store, f"enc{i}", cur, stride=2, padding=1)
            skips.append(cur)
        # decoder: upsample, concat the matching encoder feature, conv
        for i in range(len(AEN_DECODER_CHANNELS)):
            skip = skips[len(AEN_ENCODER_CHANNELS) - 1 - i]
            up = ad.bilinear_resize(cur, skip.data.shape[2], skip.data.shape[3])
            cur = conv_block(self.store, f"dec{i}", ad.concat_channels([up, skip]))
        alpha = ad.sigmoid(conv(self.store, "head_alpha", cur))
        residual = conv(self.store, "head_residual", cur)
        return alpha, residual

    def save(self, path: str) -> None:
        tensorio.save_checkpoint(self.store.state_dict(), path)

    def load(self, path: str) -> None:
        self.store.load_state_dict(tensorio.load_checkpoint(path))


def aen_forward(model: AenModel, crop_frame: np.ndarray, crop_bg: np.ndarray,
                crop_coarse: np.ndarray) -> tuple:
    """Refined alpha (Z, Z) and signed foreground residual (Z, Z, 3)."""
    x = Tensor(frames_to_nchw([crop_frame, crop_bg, crop_coarse]))
    alpha, residual = model.forward_t(x)
    return alpha.data[0, 0], np.moveaxis(residual.data[0], 0, 2)


def aen_loss_t(alpha: Tensor, residual: Tensor, crop_alpha_gt: np.ndarray,
               crop_fgr_gt: np.ndarray, crop_frame: np.ndarray) -> Tensor:
    """L1 alpha loss plus alpha-masked L1 foreground loss (batch size 1)."""
    gt_a = Tensor(crop_alpha_gt[None, None])
    l_alpha = ad.l1_loss(alpha, gt_a)
    x = Tensor(frames_to_nchw([crop_frame]))
    a3 = Tensor(np.broadcast_to(crop_alpha_gt[None, None], x.data.shape).copy())
    fgr = Tensor(frames_to_nchw([crop_fgr_gt]))
    pred_fgr = ad.mul(ad.add(residual, x), a3)
    l_fgr = ad.l1_loss(pred_fgr, ad.mul(fgr, a3).detach())
    return ad.add(l_alpha, l_fgr)


def aen_loss(out: tuple, crop_alpha_gt: np.ndarray, crop_fgr_gt: np.ndarray,
             crop_frame: np.ndarray) -> float:
    """Numpy evaluation of the dual-head loss for (alpha, residual) output."""
    alpha, residual = out
    l_alpha = np.abs(alpha - crop_alpha_gt).mean()
    a3 = crop_alpha_gt[..., None]
    l_fgr = np.abs((residual + crop_frame) * a3 - crop_fgr_gt * a3).mean()
    return float(l_alpha + l_fgr)


@dataclass(frozen=True)
class RefineOutput:
    alpha: np.ndarray
    fgr_residual: np.ndarray
    full_alpha: np.ndarray
    full_fgr: np.ndarray
    crop: CropTransform


def refine(model: AenModel, frame: np.ndarray, matched_bg: np.ndarray,
           coarse, crop_threshold: float = 0.1,
           margin_frac: float = 0.1) -> RefineOutput:
    """Crop/zoom around the coarse support, refine, and paste back.

    ``coarse`` is a CoarseAlpha (its full-scale head is used) or a plain
    matte. The refined matte is zero outside the crop box; the foreground
    is the input frame plus the pasted residual, clamped, inside the box.
    """
    coarse_full = coarse.full if hasattr(coarse, "full") else coarse
    h, w = frame.shape[:2]
    t = derive_crop(coarse_full, margin_frac, model.z, h, w, threshold=crop_threshold)
    if coarse_full.shape != (h, w):
        coarse_full = np.clip(resize_bilinear(coarse_full, h, w), 0.0, 1.0)
    crop_frame = crop_and_zoom(frame, t)
    crop_bg = crop_and_zoom(matched_bg, t)
    crop_coarse = crop_and_zoom(coarse_full, t)
    alpha, residual = aen_forward(model, crop_frame, crop_bg, crop_coarse)
    full_alpha = np.clip(paste_back(alpha, t, h, w), 0.0, 1.0)
    pasted_residual = paste_back(residual, t, h, w)
    full_fgr = frame.copy()
    box = np.s_[t.top:t.bottom, t.left:t.right]
    full_fgr[box] = np.clip(frame[box] + pasted_residual[box], 0.0, 1.0)
    return RefineOutput(alpha=alpha, fgr_residual=residual,
                        full_alpha=full_alpha, full_fgr=full_fgr, crop=t)


def train_aen(model: AenModel, clips: list, ren_model: RenModel, steps: int,
              lr: float = 1e-3, batch: int = 2, seed: int = 0,
              cotrain: bool = False, crop_threshold: float = 0.1,
              margin_frac: float = 0.1, perturb_prob: float = 0.5,
              perturb_shift: int = 8) -> list:
    """Adam on the dual-head loss with crops derived from REN's output.

    Box geometry never carries gradient. With ``cotrain`` the multi-scale
    REN loss is added and gradients flow to REN through the coarse-alpha
    channel fed to AEN; otherwise REN stays frozen. With probability
    ``perturb_prob`` the background fed to AEN is a translated and
    brightness-shifted copy so refinement tolerates an imperfectly
    matched background at inference time.
    """
    samples = [s for clip in clips for s in clip.samples]
    if not samples:
        raise InputError("no training samples")
    rng = np.random.default_rng(seed)
    trace = []
    for _ in range(steps):
        idx = rng.choice(len(samples), size=min(batch, len(samples)), replace=False)
        model.store.zero_grad()
        ren_model.store.zero_grad()
        loss = None
        for i in idx:
            s = samples[i]
            h, w = s.frame.shape[:2]
            ren_in = Tensor(frames_to_nchw([
                _fit(s.frame, ren_model.h_r, ren_model.w_r),
                _fit(s.bgr_gt, ren_model.h_r, ren_model.w_r)]))
            heads = ren_model.forward_t(ren_in)
            coarse_t = heads[0] if cotrain else heads[0].detach()
            coarse_src = ad.bilinear_resize(coarse_t, h, w)
            t = derive_crop(coarse_src.data[0, 0], margin_frac, model.z, h, w,
                            threshold=crop_threshold)
            crop_coarse = ad.bilinear_resize(
                ad.crop2d(coarse_src, t.top, t.left, t.bottom, t.right),
                model.z, model.z)
            crop_frame = crop_and_zoom(s.frame, t)
            bg_in = s.bgr_gt
            if rng.uniform() < perturb_prob:
                bg_in = perturb_background(bg_in, rng, max_shift=perturb_shift)
            crop_bg = crop_and_zoom(bg_in, t)
            x = ad.concat_channels([
                Tensor(frames_to_nchw([crop_frame, crop_bg])), crop_coarse])
            alpha, residual = model.forward_t(x)
            term = aen_loss_t(alpha, residual, crop_and_zoom(s.alpha_gt, t),
                              crop_and_zoom(s.fgr_gt, t), crop_frame)
            if cotrain:
                gt_r = _fit(s.alpha_gt, ren_model.h_r, ren_model.w_r)
                term = ad.add(term, ren_loss_t(heads, gt_r))
            loss = term if loss is None else ad.add(loss, term)
        loss.backward()
        scale = 1.0 / len(idx)
        ad.adam_step(model.store, grads={
            n: p.grad * scale for n, p in model.store.params.items()
            if p.grad is not None}, lr=lr)
        if cotrain:
            ad.adam_step(ren_model.store, grads={
                n: p.grad * scale for n, p in ren_model.store.params.items()
                if p.grad is not None}, lr=lr)
        trace.append(loss.item() / len(idx))
    return trace


def _fit(a: np.ndarray, h: int, w: int) -> np.ndarray:
    if a.shape[:2] == (h, w):
        return a
    return np.clip(resize_bilinear(a, h, w), 0.0, 1.0)

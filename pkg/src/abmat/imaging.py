"""Pixel containers, alpha compositing, and resampling/cropping geometry.

Frames are float64 arrays of shape (H, W, 3), mattes are (H, W); all
components live in [0, 1] and indexing is row-major (y, x, channel).
Every operation here is a pure function: identical inputs produce
bit-identical outputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import GeometryError, InputError, ShapeError

__all__ = [
    "CropTransform",
    "VideoSequence",
    "as_frame",
    "as_matte",
    "composite",
    "resize_bilinear",
    "crop_and_zoom",
    "paste_back",
    "to_u8",
    "from_u8",
    "save_png",
    "load_frame_png",
    "load_matte_png",
    "load_video_dir",
]


def as_frame(a) -> np.ndarray:
    """Validate and return an (H, W, 3) frame with components in [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 3 or a.shape[2] != 3 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"frame must be (H, W, 3), got {a.shape}")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ShapeError("frame components must lie in [0, 1]")
    return a


def as_matte(a) -> np.ndarray:
    """Validate and return an (H, W) alpha matte with values in [0, 1]."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"matte must be (H, W), got {a.shape}")
    if a.min() < 0.0 or a.max() > 1.0:
        raise ShapeError("matte values must lie in [0, 1]")
    return a


@dataclass(frozen=True)
class VideoSequence:
    """Ordered list of same-sized frames (or mattes)."""

    frames: list = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            raise InputError("video sequence must be non-empty")
        h, w = self.frames[0].shape[:2]
        for f in self.frames:
            if f.shape[:2] != (h, w):
                raise ShapeError("all frames in a sequence must share dimensions")

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def height(self):
        return self.frames[0].shape[0]

    @property
    def width(self):
        return self.frames[0].shape[1]


@dataclass(frozen=True)
class CropTransform:
    """Half-open crop box [top, bottom) x [left, right) plus zoom target.

    ``fallback`` marks boxes produced by the degenerate-coarse-matte path
    (nothing above threshold, whole image used).
    """

    top: int
    left: int
    bottom: int
    right: int
    target_size: tuple
    fallback: bool = False

    def validate(self, src_h: int, src_w: int) -> None:
        if not (0 <= self.top < self.bottom <= src_h and 0 <= self.left < self.right <= src_w):
            raise GeometryError(
                f"box ({self.top},{self.left},{self.bottom},{self.right}) "
                f"out of bounds for {src_h}x{src_w}"
            )

    @property
    def box_height(self):
        return self.bottom - self.top

    @property
    def box_width(self):
        return self.right - self.left


def composite(fgr: np.ndarray, bgr: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Blend foreground over background: out = alpha*F + (1-alpha)*B."""
    if fgr.shape != bgr.shape:
        raise ShapeError(f"foreground {fgr.shape} vs background {bgr.shape}")
    if alpha.shape != fgr.shape[:2]:
        raise ShapeError(f"alpha {alpha.shape} vs frame {fgr.shape[:2]}")
    a = alpha[..., None]
    return a * fgr + (1.0 - a) * bgr


def _lerp_coeffs(n_in: int, n_out: int):
    """Half-pixel-center sampling coordinates for 1-D bilinear resize."""
    x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    i0 = np.floor(x).astype(np.intp)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = x - i0
    return i0, i1, frac


def resize_bilinear(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a (H, W) or (H, W, C) array.

    Uses half-pixel sample centers and the lerp form a + t*(b-a), so a
    constant input resizes to the identical constant and identity-size
    resize is a bit-identical copy.
    """
    if out_h < 1 or out_w < 1:
        raise ShapeError("output dimensions must be >= 1")
    h, w = src.shape[:2]
    y0, y1, fy = _lerp_coeffs(h, out_h)
    x0, x1, fx = _lerp_coeffs(w, out_w)
    fy = fy.reshape(-1, 1) if src.ndim == 2 else fy.reshape(-1, 1, 1)
    fxr = fx.reshape(1, -1) if src.ndim == 2 else fx.reshape(1, -1, 1)
    r0 = src[y0][:, x0]
    r0 = r0 + fxr * (src[y0][:, x1] - r0)
    r1 = src[y1][:, x0]
    r1 = r1 + fxr * (src[y1][:, x1] - r1)
    return r0 + fy * (r1 - r0)


def crop_and_zoom(src: np.ndarray, t: CropTransform) -> np.ndarray:
    """Extract the crop box from src and resize it to the zoom target."""
    t.validate(src.shape[0], src.shape[1])
    region = src[t.top:t.bottom, t.left:t.right]
    return resize_bilinear(region, t.target_size[0], t.target_size[1])


def paste_back(refined: np.ndarray, t: CropTransform, full_h: int, full_w: int) -> np.ndarray:
    """Resize a refined crop back to its box and write it into a zero matte."""
    t.validate(full_h, full_w)
    if refined.shape[:2] != tuple(t.target_size):
        raise ShapeError(f"refined {refined.shape[:2]} vs target {t.target_size}")
    out_shape = (full_h, full_w) if refined.ndim == 2 else (full_h, full_w, refined.shape[2])
    out = np.zeros(out_shape, dtype=np.float64)
    out[t.top:t.bottom, t.left:t.right] = resize_bilinear(refined, t.box_height, t.box_width)
    return out


def to_u8(a: np.ndarray) -> np.ndarray:
    """Float [0,1] to uint8, round half up."""
    return np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def from_u8(a: np.ndarray) -> np.ndarray:
    """uint8 to float in [0,1]."""
    return a.astype(np.float64) / 255.0


def save_png(a: np.ndarray, path: str) -> None:
    """Write a frame (RGB) or matte (grayscale) as an 8-bit PNG."""
    u8 = to_u8(a)
    mode = "RGB" if u8.ndim == 3 else "L"
    Image.fromarray(u8, mode=mode).save(path, format="PNG")


def load_frame_png(path: str) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return from_u8(np.asarray(img))


def load_matte_png(path: str) -> np.ndarray:
    img = Image.open(path).convert("L")
    return from_u8(np.asarray(img))


def load_video_dir(path: str, kind: str = "frame") -> VideoSequence:
    """Load a directory of PNGs (sorted by name) as a video sequence."""
    if not os.path.isdir(path):
        raise InputError(f"not a directory: {path}")
    names = sorted(n for n in os.listdir(path) if n.lower().endswith(".png"))
    if not names:
        raise InputError(f"no PNG frames in {path}")
    loader = load_frame_png if kind == "frame" else load_matte_png
    return VideoSequence([loader(os.path.join(path, n)) for n in names])

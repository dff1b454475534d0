"""Minimal reverse-mode autodiff over numpy arrays.

Exactly the operator set the three networks need: conv2d, dense,
activations, bilinear resize, channel concat, pooling, elementwise
arithmetic, and the two losses. Tensors record their parents and a
backward closure; ``backward()`` walks the tape in reverse topological
order.

conv2d accumulates in (channel, ky, kx) order so its output agrees
bit-for-bit with a naive 7-loop reference using the same order.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, ShapeError

BCE_EPS = 1e-6

__all__ = [
    "Tensor",
    "ParameterStore",
    "constant",
    "conv2d",
    "dense",
    "relu",
    "leaky_relu",
    "sigmoid",
    "bilinear_resize",
    "bilinear_upsample",
    "global_avg_pool",
    "concat_channels",
    "crop2d",
    "add",
    "sub",
    "mul",
    "l1_loss",
    "bce_loss",
    "adam_step",
    "grad_check",
]


class Tensor:
    """A numpy array plus an optional gradient and tape linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        if self.data.shape != ():
            raise ShapeError("backward() requires a scalar loss")
        order = []
        seen = set()

        def visit(t):
            if id(t) in seen:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            order.append(t)

        visit(self)
        for t in order:
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.data)
        self.grad = np.ones_like(self.data)
        for t in reversed(order):
            if t._backward is not None and t.requires_grad:
                t._backward(t.grad)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


def constant(data) -> Tensor:
    return Tensor(data)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


# ---------------------------------------------------------------------------
# elementwise arithmetic (same-shape only; no broadcasting)


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"shape mismatch {a.data.shape} vs {b.data.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b)
    out = Tensor(a.data + b.data, parents=(a, b))
    out._backward = lambda g: (_accum(a, g), _accum(b, g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b)
    out = Tensor(a.data - b.data, parents=(a, b))
    out._backward = lambda g: (_accum(a, g), _accum(b, -g))
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b)
    out = Tensor(a.data * b.data, parents=(a, b))
    out._backward = lambda g: (_accum(a, g * b.data), _accum(b, g * a.data))
    return out


# ---------------------------------------------------------------------------
# activations


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0), parents=(x,))
    out._backward = lambda g: _accum(x, g * (x.data > 0.0))
    return out


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    out = Tensor(np.where(x.data > 0.0, x.data, slope * x.data), parents=(x,))
    out._backward = lambda g: _accum(x, g * np.where(x.data > 0.0, 1.0, slope))
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-np.abs(x.data))),
                 np.exp(-np.abs(x.data)) / (1.0 + np.exp(-np.abs(x.data))))
    out = Tensor(s, parents=(x,))
    out._backward = lambda g: _accum(x, g * s * (1.0 - s))
    return out


# ---------------------------------------------------------------------------
# structural ops


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of NCHW input with KCkhkw weights plus bias."""
    n, c, h, wd = x.data.shape
    k, cw, kh, kw = w.data.shape
    if cw != c:
        raise ShapeError(f"input channels {c} vs weight channels {cw}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError("kernel extents must be odd")
    if stride < 1 or padding < 0:
        raise ShapeError("stride must be >= 1 and padding >= 0")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError("kernel larger than padded input")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out = np.zeros((n, k, ho, wo))
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                xs = xp[:, ci, i:i + stride * (ho - 1) + 1:stride,
                        j:j + stride * (wo - 1) + 1:stride]
                out += xs[:, None] * w.data[:, ci, i, j][None, :, None, None]
    out += b.data[None, :, None, None]

    def backward(g):
        _accum(b, g.sum(axis=(0, 2, 3)))
        gxp = np.zeros_like(xp) if x.requires_grad else None
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    xs = xp[:, ci, i:i + stride * (ho - 1) + 1:stride,
                            j:j + stride * (wo - 1) + 1:stride]
                    if w.requires_grad:
                        w.grad[:, ci, i, j] += np.tensordot(g, xs, axes=([0, 2, 3], [0, 1, 2]))
                    if gxp is not None:
                        gxp[:, ci, i:i + stride * (ho - 1) + 1:stride,
                            j:j + stride * (wo - 1) + 1:stride] += np.tensordot(
                                g, w.data[:, ci, i, j], axes=([1], [0]))
        if gxp is not None:
            if padding:
                gxp = gxp[:, :, padding:-padding, padding:-padding]
            _accum(x, gxp)

    return Tensor(out, parents=(x, w, b), backward=backward)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map of (N, D) input with (D, M) weight and (M,) bias."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(f"dense shapes {x.data.shape} x {w.data.shape}")
    out = Tensor(x.data @ w.data + b.data, parents=(x, w, b))

    def backward(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)
        _accum(b, g.sum(axis=0))

    out._backward = backward
    return out


def _resize_coeffs(n_in: int, n_out: int):
    x = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    x = np.clip(x, 0.0, n_in - 1)
    i0 = np.minimum(np.floor(x).astype(np.intp), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    return i0, i1, x - i0


def _resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    i0, i1, f = _resize_coeffs(n_in, n_out)
    m = np.zeros((n_out, n_in))
    np.add.at(m, (np.arange(n_out), i0), 1.0 - f)
    np.add.at(m, (np.arange(n_out), i1), f)
    return m


def bilinear_resize(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Differentiable bilinear resize of the spatial axes of NCHW input."""
    n, c, h, w = x.data.shape
    y0, y1, fy = _resize_coeffs(h, out_h)
    x0, x1, fx = _resize_coeffs(w, out_w)
    fyb = fy[None, None, :, None]
    fxb = fx[None, None, None, :]
    d = x.data
    r0 = d[:, :, y0][:, :, :, x0]
    r0 = r0 + fxb * (d[:, :, y0][:, :, :, x1] - r0)
    r1 = d[:, :, y1][:, :, :, x0]
    r1 = r1 + fxb * (d[:, :, y1][:, :, :, x1] - r1)
    out = Tensor(r0 + fyb * (r1 - r0), parents=(x,))
    if x.requires_grad:
        ry = _resize_matrix(h, out_h)
        rx = _resize_matrix(w, out_w)
        out._backward = lambda g: _accum(
            x, np.einsum("oh,ncop,pw->nchw", ry, g, rx, optimize=True))
    return out


def bilinear_upsample(x: Tensor, factor: int) -> Tensor:
    """Integer-factor bilinear upsampling (same convention as resize)."""
    if factor < 2:
        raise ShapeError("upsample factor must be >= 2")
    n, c, h, w = x.data.shape
    return bilinear_resize(x, h * factor, w * factor)


def global_avg_pool(x: Tensor) -> Tensor:
    """Spatial mean of NCHW input, yielding (N, C)."""
    n, c, h, w = x.data.shape
    out = Tensor(x.data.mean(axis=(2, 3)), parents=(x,))
    out._backward = lambda g: _accum(
        x, np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape))
    return out


def concat_channels(xs) -> Tensor:
    """Concatenate NCHW tensors along the channel axis."""
    xs = list(xs)
    if not xs:
        raise InputError("concat_channels needs at least one tensor")
    base = xs[0].data.shape
    for t in xs[1:]:
        if t.data.shape[0] != base[0] or t.data.shape[2:] != base[2:]:
            raise ShapeError("concat inputs must agree on N, H, W")
    out = Tensor(np.concatenate([t.data for t in xs], axis=1), parents=tuple(xs))
    splits = np.cumsum([t.data.shape[1] for t in xs])[:-1]

    def backward(g):
        for t, gs in zip(xs, np.split(g, splits, axis=1)):
            _accum(t, gs)

    out._backward = backward
    return out


def crop2d(x: Tensor, top: int, left: int, bottom: int, right: int) -> Tensor:
    """Spatial slice of NCHW input (differentiable; backward zero-pads)."""
    n, c, h, w = x.data.shape
    if not (0 <= top < bottom <= h and 0 <= left < right <= w):
        raise ShapeError("crop window out of bounds")
    out = Tensor(x.data[:, :, top:bottom, left:right], parents=(x,))

    def backward(g):
        full = np.zeros_like(x.data)
        full[:, :, top:bottom, left:right] = g
        _accum(x, full)

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# losses


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference over all elements."""
    _check_same_shape(pred, target)
    diff = pred.data - target.data
    out = Tensor(np.abs(diff).mean(), parents=(pred, target))
    scale = 1.0 / diff.size

    def backward(g):
        s = g * scale * np.sign(diff)
        _accum(pred, s)
        _accum(target, -s)

    out._backward = backward
    return out


def bce_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean binary cross entropy; predictions clamped to [eps, 1-eps]."""
    _check_same_shape(pred, target)
    p = np.clip(pred.data, BCE_EPS, 1.0 - BCE_EPS)
    t = target.data
    out = Tensor((-t * np.log(p) - (1.0 - t) * np.log1p(-p)).mean(),
                 parents=(pred, target))
    inside = (pred.data > BCE_EPS) & (pred.data < 1.0 - BCE_EPS)
    scale = 1.0 / p.size

    def backward(g):
        gp = g * scale * inside * (p - t) / (p * (1.0 - p))
        _accum(pred, gp)
        _accum(target, g * scale * (np.log1p(-p) - np.log(p)))

    out._backward = backward
    return out


# ---------------------------------------------------------------------------
# parameters and optimization


class ParameterStore:
    """Named trainable tensors plus Adam moment state."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.params:
            raise InputError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_dict(self) -> dict:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict) -> None:
        for name, t in self.params.items():
            if name not in state:
                raise InputError(f"missing parameter {name!r} in state")
            if state[name].shape != t.data.shape:
                raise ShapeError(f"shape mismatch for {name!r}")
            t.data = np.asarray(state[name], dtype=np.float64).copy()
        self._m = {n: np.zeros_like(t.data) for n, t in self.params.items()}
        self._v = {n: np.zeros_like(t.data) for n, t in self.params.items()}
        self.step_count = 0


def adam_step(store: ParameterStore, grads=None, lr=1e-3, beta1=0.9,
              beta2=0.999, eps=1e-8) -> None:
    """One Adam update over all parameters in the store.

    ``grads`` maps name -> array; when omitted the tensors' accumulated
    ``.grad`` fields are used (missing/None gradients are treated as zero).
    """
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name, p in store.params.items():
        if grads is not None:
            g = grads.get(name)
        else:
            g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# ---------------------------------------------------------------------------
# verification


def grad_check(f, x: Tensor, h: float = 1e-4) -> float:
    """Max relative error between reverse-mode and central differences."""
    x.grad = None
    out = f(x)
    out.backward()
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    nflat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x).item()
        flat[i] = orig - h
        fm = f(x).item()
        flat[i] = orig
        nflat[i] = (fp - fm) / (2.0 * h)
    max_err = 0.0
    for a, nv in zip(analytic.reshape(-1), nflat):
        denom = max(abs(a), abs(nv))
        err = abs(a - nv) if denom < 1e-8 else abs(a - nv) / denom
        max_err = max(max_err, err)
    return max_err

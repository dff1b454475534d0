"""Shared parameter-initialization and conv-block helpers for the networks."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterStore, Tensor, kaiming_uniform


def add_conv(store: ParameterStore, rng: np.random.Generator, name: str,
             cin: int, cout: int, k: int = 3) -> None:
    fan_in = cin * k * k
    store.add(f"{name}.w", kaiming_uniform(rng, (cout, cin, k, k), fan_in))
    store.add(f"{name}.b", np.zeros(cout))


def add_dense(store: ParameterStore, rng: np.random.Generator, name: str,
              din: int, dout: int) -> None:
    store.add(f"{name}.w", kaiming_uniform(rng, (din, dout), din))
    store.add(f"{name}.b", np.zeros(dout))


def conv(store: ParameterStore, name: str, x: Tensor, stride: int = 1,
         padding: int = 1) -> Tensor:
    return ad.conv2d(x, store[f"{name}.w"], store[f"{name}.b"],
                     stride=stride, padding=padding)


def conv_block(store: ParameterStore, name: str, x: Tensor, stride: int = 1,
               padding: int = 1, slope: float = 0.1) -> Tensor:
    return ad.leaky_relu(conv(store, name, x, stride=stride, padding=padding),
                         slope=slope)


def fc(store: ParameterStore, name: str, x: Tensor) -> Tensor:
    return ad.dense(x, store[f"{name}.w"], store[f"{name}.b"])


def frames_to_nchw(arrays) -> np.ndarray:
    """Stack HxWx3 frames and/or HxW mattes into one NCHW batch item."""
    planes = []
    for a in arrays:
        if a.ndim == 3:
            planes.extend(np.moveaxis(a, 2, 0))
        else:
            planes.append(a)
    return np.stack(planes)[None]

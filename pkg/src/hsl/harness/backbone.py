"""Deterministic random-convolution feature extractor standing in for a trained encoder.

Four blocks of (3x3 conv, ReLU, 2x2 average pool): the first two give the
low-level map at stride 4, the last two the high-level map at stride 16.
Convolutions have no bias and use edge-replicated borders; weights are
N(0, 1) scaled by ``1 / fan_in``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..core import Rng
from ..core.errors import DimensionError
from ..core.types import as_image


@dataclass(frozen=True)
class ToyBackboneSpec:
    seed: int = 0
    c_l: int = 16
    c_h: int = 64
    strides: tuple[int, int] = (4, 16)

    def channels(self) -> list[tuple[int, int]]:
        return [(3, self.c_l), (self.c_l, self.c_l), (self.c_l, self.c_h), (self.c_h, self.c_h)]


@lru_cache(maxsize=16)
def _weights(spec: ToyBackboneSpec) -> tuple[np.ndarray, ...]:
    rng = Rng(spec.seed, "backbone")
    out = []
    for i, (cin, cout) in enumerate(spec.channels()):
        w = rng.spawn("block", i).normal((cout, cin, 3, 3)) / (cin * 9)
        w.setflags(write=False)
        out.append(w)
    return tuple(out)


def conv3x3(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    _, h, wd = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.zeros((w.shape[0], h, wd))
    for ky in range(3):
        for kx in range(3):
            out += np.tensordot(w[:, :, ky, kx], padded[:, ky:ky + h, kx:kx + wd], axes=(1, 0))
    return out


def avg_pool2(x: np.ndarray) -> np.ndarray:
    c, h, w = x.shape
    return x.reshape(c, h // 2, 2, w // 2, 2).mean(axis=(2, 4))


def toy_backbone(img, spec: ToyBackboneSpec = ToyBackboneSpec()) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(F_low, F_high)`` at strides 4 and 16."""
    img = as_image(img)
    if img.shape[1] % spec.strides[1] or img.shape[2] % spec.strides[1]:
        raise DimensionError(f"image size {img.shape[1:]} not divisible by {spec.strides[1]}")
    x = img
    feats = []
    for i, w in enumerate(_weights(spec)):
        x = avg_pool2(np.maximum(conv3x3(x, w), 0.0))
        if i in (1, 3):
            feats.append(x)
    return feats[0], feats[1]

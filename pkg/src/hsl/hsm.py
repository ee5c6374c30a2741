"""Hierarchical semantic mining.

For every superpixel scale: pool low- and high-level features into region
prototypes, refine the low-level ones with two self-attention layers, fuse,
broadcast the fused prototypes back onto their regions (RMAP) and add the
result to the high-level feature map.

Self-attention layers are minimal: ``heads``-way scaled dot-product
attention over the region sequence, an output projection and a residual
connection; no normalization, feed-forward block or positional encoding,
so each layer is equivariant to permutations of the regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Config, Rng
from .core.errors import DimensionError, FormatError, ParameterError
from .core.ops import masked_average_pool, resize_bilinear
from .core.types import as_features
from .superpix import SuperpixelStack, downsample_labels_nearest, region_binary_masks

INIT_STD = 0.02
N_LAYERS = 2


@dataclass(frozen=True)
class RegionPrototypes:
    scale_index: int
    vectors: np.ndarray          # (n_i, C)
    empty_flags: np.ndarray      # (n_i,) bool

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def with_vectors(self, vectors: np.ndarray) -> "RegionPrototypes":
        return RegionPrototypes(self.scale_index, vectors, self.empty_flags)


@dataclass(frozen=True)
class AttentionLayer:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray


@dataclass(frozen=True)
class MsaWeights:
    layers: tuple[AttentionLayer, ...]
    heads: int = 4

    def __post_init__(self):
        for layer in self.layers:
            c = layer.wq.shape[0]
            if c % self.heads:
                raise ParameterError(f"model dim {c} not divisible by {self.heads} heads")

    @classmethod
    def zeros(cls, c: int, heads: int = 4, n_layers: int = N_LAYERS) -> "MsaWeights":
        z = np.zeros((c, c))
        return cls(tuple(AttentionLayer(z, z, z, z) for _ in range(n_layers)), heads)


@dataclass(frozen=True)
class ProjectionWeights:
    W: np.ndarray     # (c_h, c_l)
    bias: np.ndarray  # (c_h,)

    @classmethod
    def zeros(cls, c_h: int, c_l: int) -> "ProjectionWeights":
        return cls(np.zeros((c_h, c_l)), np.zeros(c_h))


@dataclass(frozen=True)
class HsmWeights:
    projection: ProjectionWeights
    msa: MsaWeights

    @property
    def c_high(self) -> int:
        return self.projection.W.shape[0]

    @property
    def c_low(self) -> int:
        return self.projection.W.shape[1]

    @classmethod
    def init(cls, c_l: int, c_h: int, heads: int, rng: Rng) -> "HsmWeights":
        """Seeded N(0, 0.02^2) initialization (zero projection bias)."""
        proj = ProjectionWeights(rng.spawn("proj").normal((c_h, c_l), INIT_STD), np.zeros(c_h))
        layers = []
        for i in range(N_LAYERS):
            r = rng.spawn("msa", i)
            layers.append(AttentionLayer(*(r.spawn(name).normal((c_h, c_h), INIT_STD)
                                           for name in ("q", "k", "v", "o"))))
        return cls(proj, MsaWeights(tuple(layers), heads))

    @classmethod
    def zeros(cls, c_l: int, c_h: int, heads: int = 4) -> "HsmWeights":
        return cls(ProjectionWeights.zeros(c_h, c_l), MsaWeights.zeros(c_h, heads))

    def flatten(self) -> np.ndarray:
        """Flat layout: W, bias, then per layer Wq, Wk, Wv, Wo (all row major)."""
        parts = [self.projection.W.ravel(), self.projection.bias.ravel()]
        for layer in self.msa.layers:
            parts += [layer.wq.ravel(), layer.wk.ravel(), layer.wv.ravel(), layer.wo.ravel()]
        return np.concatenate(parts)

    @classmethod
    def unflatten(cls, flat: np.ndarray, c_l: int, c_h: int, heads: int = 4) -> "HsmWeights":
        flat = np.asarray(flat, dtype=np.float64).ravel()
        expected = c_h * c_l + c_h + N_LAYERS * 4 * c_h * c_h
        if flat.size != expected:
            raise FormatError(f"weight vector has {flat.size} entries, expected {expected} "
                              f"for c_l={c_l}, c_h={c_h}")
        pos = 0

        def take(shape):
            nonlocal pos
            size = int(np.prod(shape))
            out = flat[pos:pos + size].reshape(shape)
            pos += size
            return out

        proj = ProjectionWeights(take((c_h, c_l)), take((c_h,)))
        layers = tuple(AttentionLayer(*(take((c_h, c_h)) for _ in range(4)))
                       for _ in range(N_LAYERS))
        return cls(proj, MsaWeights(layers, heads))


def project_low(f_l: np.ndarray, w: ProjectionWeights, target: tuple[int, int]) -> np.ndarray:
    """1x1 convolution to ``c_h`` channels, then bilinear resize to ``target``."""
    f_l = as_features(f_l)
    if w.W.shape[1] != f_l.shape[0]:
        raise DimensionError(f"projection expects {w.W.shape[1]} channels, got {f_l.shape[0]}")
    mapped = np.einsum("oc,chw->ohw", w.W, f_l) + w.bias[:, None, None]
    return resize_bilinear(mapped, *target)


def region_prototypes(f: np.ndarray, masks, scale_index: int = 0) -> RegionPrototypes:
    f = as_features(f)
    vecs, flags = [], []
    for m in masks:
        v, empty = masked_average_pool(f, m)
        vecs.append(v)
        flags.append(empty)
    return RegionPrototypes(scale_index, np.array(vecs).reshape(len(vecs), f.shape[0]),
                            np.array(flags, dtype=bool))


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def attention_layer(x: np.ndarray, layer: AttentionLayer, heads: int) -> np.ndarray:
    """``x + MHA(x)`` for a ``(tokens, dim)`` sequence."""
    n, c = x.shape
    if c % heads:
        raise ParameterError(f"model dim {c} not divisible by {heads} heads")
    d = c // heads
    split = lambda m: m.reshape(n, heads, d).transpose(1, 0, 2)   # noqa: E731
    q, k, v = split(x @ layer.wq.T), split(x @ layer.wk.T), split(x @ layer.wv.T)
    attn = _softmax_rows(q @ k.transpose(0, 2, 1) / np.sqrt(d))
    ctx = (attn @ v).transpose(1, 0, 2).reshape(n, c)
    return x + ctx @ layer.wo.T


def msa_enhance(p: RegionPrototypes, w: MsaWeights) -> RegionPrototypes:
    if len(p) < 1:
        raise ParameterError("need at least one prototype")
    x = p.vectors
    for layer in w.layers:
        x = attention_layer(x, layer, w.heads)
    return p.with_vectors(x)


def fuse_prototypes(p_low: RegionPrototypes, p_high: RegionPrototypes,
                    alpha: float) -> RegionPrototypes:
    if p_low.vectors.shape != p_high.vectors.shape:
        raise DimensionError(f"prototype sets differ: {p_low.vectors.shape} vs "
                             f"{p_high.vectors.shape}")
    fused = alpha * p_low.vectors + (1.0 - alpha) * p_high.vectors
    return RegionPrototypes(p_high.scale_index, fused, p_high.empty_flags)


def rmap(p: RegionPrototypes, masks) -> np.ndarray:
    """Sum over regions of prototype times region mask: ``(C, h, w)``."""
    masks = np.asarray(masks, dtype=np.float64)
    if masks.shape[0] != len(p):
        raise DimensionError(f"{len(p)} prototypes for {masks.shape[0]} masks")
    return np.tensordot(p.vectors.T, masks, axes=(1, 0))


def hsm_enhance(f_l: np.ndarray, f_h: np.ndarray, stack: SuperpixelStack, weights: HsmWeights,
                cfg: Config) -> np.ndarray:
    """``F_h + sum over scales of RMAP(fused region prototypes)``."""
    f_h = as_features(f_h)
    if len(stack) != cfg.L:
        raise DimensionError(f"stack has {len(stack)} scales, config expects {cfg.L}")
    target = f_h.shape[1:]
    low = project_low(f_l, weights.projection, target)
    out = f_h.copy()
    for i, labels in enumerate(stack.masks):
        masks = region_binary_masks(downsample_labels_nearest(labels, *target))
        p_low = msa_enhance(region_prototypes(low, masks, i), weights.msa)
        p_high = region_prototypes(f_h, masks, i)
        out += rmap(fuse_prototypes(p_low, p_high, cfg.alpha), masks)
    return out

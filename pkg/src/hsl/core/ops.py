"""Pooling, similarity and resampling primitives shared by every stage."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, EmptyForegroundError, ParameterError


def masked_average_pool(feat: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, bool]:
    """Mask-weighted mean feature vector.

    Returns ``(prototype, empty)``; an all-zero mask gives the zero vector and
    ``empty=True``.  The mean is taken relative to the feature at the
    heaviest mask pixel, so a region of identical vectors pools to exactly
    that vector.
    """
    feat = np.asarray(feat, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if feat.ndim != 3 or mask.shape != feat.shape[1:]:
        raise DimensionError(f"mask {mask.shape} does not match features {feat.shape}")
    total = mask.sum()
    if total == 0:
        return np.zeros(feat.shape[0]), True
    y, x = np.unravel_index(np.argmax(mask), mask.shape)
    ref = feat[:, y, x]
    dev = np.tensordot(feat - ref[:, None, None], mask, axes=([1, 2], [0, 1])) / total
    return ref + dev, False


def cosine_similarity_map(prototype: np.ndarray, feat: np.ndarray) -> np.ndarray:
    """Per-pixel cosine between ``prototype`` and each feature column.

    Cells where either vector has zero norm are 0.
    """
    prototype = np.asarray(prototype, dtype=np.float64)
    feat = np.asarray(feat, dtype=np.float64)
    if feat.ndim != 3 or prototype.shape != (feat.shape[0],):
        raise DimensionError(f"prototype {prototype.shape} vs features {feat.shape}")
    pnorm = np.sqrt(prototype @ prototype)
    fnorm = np.sqrt(np.einsum("chw,chw->hw", feat, feat))
    dot = np.tensordot(prototype, feat, axes=(0, 0))
    denom = pnorm * fnorm
    out = np.zeros_like(dot)
    ok = denom > 0
    out[ok] = dot[ok] / denom[ok]
    return np.clip(out, -1.0, 1.0)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"vector shapes differ: {a.shape} vs {b.shape}")
    denom = np.sqrt(a @ a) * np.sqrt(b @ b)
    if denom == 0:
        return 0.0
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


def _pool(mask: np.ndarray, k: int, reduce) -> np.ndarray:
    r = k // 2
    padded = np.pad(mask, r, mode="edge")
    return reduce(sliding_window_view(padded, (k, k)), axis=(-2, -1))


def max_pool(mask: np.ndarray, k: int) -> np.ndarray:
    return _pool(mask, k, np.max)


def avg_pool(mask: np.ndarray, k: int) -> np.ndarray:
    return _pool(mask, k, np.mean)


def smooth_mask(mask: np.ndarray, k: int) -> np.ndarray:
    """Stride-1 ``k x k`` max pool followed by average pool (edge replication)."""
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"smoothing kernel must be odd and >= 1, got {k}")
    mask = np.asarray(mask, dtype=np.float64)
    if mask.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got {mask.shape}")
    if k == 1:
        return mask.copy()
    return np.clip(avg_pool(max_pool(mask, k), k), 0.0, 1.0)


def bounding_box(mask: np.ndarray, tol: float = 0.0) -> tuple[int, int, int, int]:
    """Inclusive ``(x0, y0, x1, y1)`` of all cells strictly above ``tol``."""
    mask = np.asarray(mask)
    rows = np.flatnonzero((mask > tol).any(axis=1))
    cols = np.flatnonzero((mask > tol).any(axis=0))
    if rows.size == 0:
        raise EmptyForegroundError("mask has no cell above tolerance")
    return int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1])


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    # corner-aligned: output 0 -> input 0, output n_out-1 -> input n_in-1
    m = np.zeros((n_out, n_in))
    if n_out == 1 or n_in == 1:
        m[:, 0] = 1.0
        return m
    pos = np.arange(n_out) * (n_in - 1) / (n_out - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), n_in - 2)
    frac = pos - lo
    rows = np.arange(n_out)
    m[rows, lo] += 1.0 - frac
    m[rows, lo + 1] += frac
    return m


def resize_bilinear(data: np.ndarray, h: int, w: int, clamp: bool = False) -> np.ndarray:
    """Corner-aligned bilinear resize of a ``(..., H, W)`` array.

    ``clamp=True`` clips to ``[0, 1]`` (the image variant); feature maps are
    resized unclamped.
    """
    if h < 1 or w < 1:
        raise ParameterError(f"target size must be positive, got {(h, w)}")
    data = np.asarray(data, dtype=np.float64)
    rh = _interp_matrix(h, data.shape[-2])
    rw = _interp_matrix(w, data.shape[-1])
    out = rh @ data @ rw.T
    return np.clip(out, 0.0, 1.0) if clamp else out


def area_downsample(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    """Adaptive average pooling of a 2-D array to ``(h, w)``."""
    mask = np.asarray(mask, dtype=np.float64)
    H, W = mask.shape
    if h > H or w > W:
        raise ParameterError(f"cannot area-downsample {mask.shape} to {(h, w)}")
    if H % h == 0 and W % w == 0:
        return mask.reshape(h, H // h, w, W // w).mean(axis=(1, 3))
    out = np.empty((h, w))
    for i in range(h):
        r0, r1 = (i * H) // h, -((-(i + 1) * H) // h)
        for j in range(w):
            c0, c1 = (j * W) // w, -((-(j + 1) * W) // w)
            out[i, j] = mask[r0:r1, c0:c1].mean()
    return out


def nearest_indices(n_out: int, n_in: int) -> np.ndarray:
    """Source index of each output cell under half-pixel nearest sampling."""
    idx = ((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.int64)
    return np.minimum(idx, n_in - 1)

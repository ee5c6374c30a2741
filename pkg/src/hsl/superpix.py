"""Multi-scale superpixel masks.

The generator follows the grid / neighbourhood / probability / argmax scheme:
a ``sqrt(n) x sqrt(n)`` initial tiling, a 9-channel map of the tile indices
surrounding each pixel's tile, a probability over those 9 candidates, and a
per-pixel argmax.  The probability comes from a classical encoder (softmax of
negative squared distance between the pixel's (R, G, B, x/S, y/S) feature and
each candidate centroid) refined for a few SLIC-style iterations.

Channel ``c`` of the neighbourhood map is the offset ``(dr, dc) =
(c // 3 - 1, c % 3 - 1)``, so channel 4 is the pixel's own tile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Config, LabelMask
from .core.errors import DimensionError, ParameterError
from .core.ops import nearest_indices, resize_bilinear
from .core.types import as_image

CENTER = 4
INVALID = -1
# argmax visiting order: centre first, then ascending channel index
_TIE_ORDER = np.array([4, 0, 1, 2, 3, 5, 6, 7, 8])


@dataclass(frozen=True)
class SuperpixelStack:
    masks: tuple[LabelMask, ...]
    scales: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.masks)

    def coarsest(self) -> LabelMask:
        return self.masks[int(np.argmin(self.scales))]


def _side(n: int) -> int:
    s = math.isqrt(n)
    if n < 1 or s * s != n:
        raise ParameterError(f"superpixel count {n} is not a perfect square")
    return s


def grid_init(h: int, w: int, n: int, pixel_feats: np.ndarray | None = None):
    """Uniform ``sqrt(n) x sqrt(n)`` tiling of an ``h x w`` grid.

    Pixel ``(y, x)`` goes to tile ``(y * s // h, x * s // w)``, numbered row
    major.  Returns ``(LabelMask, centroids)``; centroids are per-tile feature
    means, or ``None`` when no features are given.
    """
    s = _side(n)
    if h < s or w < s:
        raise ParameterError(f"{h}x{w} grid too small for {s}x{s} tiles")
    rows = np.arange(h) * s // h
    cols = np.arange(w) * s // w
    labels = rows[:, None] * s + cols[None, :]
    grid = LabelMask(labels, n)
    if pixel_feats is None:
        return grid, None
    return grid, label_means(pixel_feats, grid.labels, n)


def label_means(pixel_feats: np.ndarray, labels: np.ndarray, n: int,
                fallback: np.ndarray | None = None) -> np.ndarray:
    """Mean feature per label; empty labels take ``fallback`` rows (or zeros)."""
    c = pixel_feats.shape[0]
    flat = labels.reshape(-1)
    counts = np.bincount(flat, minlength=n).astype(np.float64)
    sums = np.stack([np.bincount(flat, weights=pixel_feats[k].reshape(-1), minlength=n)
                     for k in range(c)], axis=1)
    out = np.zeros((n, c)) if fallback is None else np.array(fallback, dtype=np.float64)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


def neighborhood_map(grid: LabelMask, n: int) -> np.ndarray:
    """``(9, h, w)`` indices of the tiles around each pixel's tile; -1 off-grid."""
    s = _side(n)
    tr, tc = np.divmod(grid.labels, s)
    z = np.full((9,) + grid.shape, INVALID, dtype=np.int64)
    for c in range(9):
        dr, dc = c // 3 - 1, c % 3 - 1
        r, q = tr + dr, tc + dc
        ok = (r >= 0) & (r < s) & (q >= 0) & (q < s)
        z[c][ok] = (r * s + q)[ok]
    return z


def assign_probabilities(pixel_feats: np.ndarray, centroids: np.ndarray, z: np.ndarray,
                         temp: float) -> np.ndarray:
    """Softmax over valid neighbours of ``-||f - centroid||^2 / temp``."""
    if temp <= 0:
        raise ParameterError(f"temperature must be positive, got {temp}")
    return _softmax_valid(-_neighbor_sqdist(pixel_feats, centroids, z) / temp, z >= 0)


def _neighbor_sqdist(pixel_feats, centroids, z):
    valid = z >= 0
    cent = centroids[np.where(valid, z, 0)]          # (9, h, w, C)
    diff = cent - np.moveaxis(pixel_feats, 0, -1)[None]
    d2 = np.einsum("khwc,khwc->khw", diff, diff)
    return np.where(valid, d2, np.inf)


def _softmax_valid(logits, valid):
    logits = np.where(valid, logits, -np.inf)
    top = logits.max(axis=0, keepdims=True)
    e = np.where(valid, np.exp(logits - top), 0.0)
    return e / e.sum(axis=0, keepdims=True)


def argmax_assign(q: np.ndarray, z: np.ndarray) -> LabelMask:
    """Label of the most probable neighbour; ties prefer the centre channel."""
    if q.shape != z.shape:
        raise DimensionError(f"probability map {q.shape} vs neighbourhood map {z.shape}")
    scores = np.where(z >= 0, q, -np.inf)[_TIE_ORDER]
    best = _TIE_ORDER[np.argmax(scores, axis=0)]
    labels = np.take_along_axis(z, best[None], axis=0)[0]
    return LabelMask(labels, int(z.max()) + 1 if z.max() >= 0 else 1)


def pixel_features(img: np.ndarray, n: int) -> np.ndarray:
    """(R, G, B, x/S, y/S) per pixel with S the nominal superpixel side."""
    _, h, w = img.shape
    S = math.sqrt(h * w / n)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return np.concatenate([img, (xx / S)[None], (yy / S)[None]], axis=0)


@dataclass(frozen=True)
class Segmentation:
    """Labels at image resolution plus the low-resolution working state."""

    labels: LabelMask
    lowres: LabelMask
    grid: LabelMask
    neighborhood: np.ndarray


def segment_detailed(img, n: int, iters: int = 10, temp: float = 0.1,
                     stride: int = 16) -> Segmentation:
    img = as_image(img)
    if iters < 1:
        raise ParameterError(f"iters must be >= 1, got {iters}")
    s = _side(n)
    side = stride * s
    _, H, W = img.shape
    if H < side or W < side:
        raise ParameterError(
            f"image {H}x{W} is smaller than the {side}x{side} working size for n={n}")
    small = resize_bilinear(img, side, side, clamp=True)
    feats = pixel_features(small, n)
    grid, centroids = grid_init(side, side, n, feats)
    z = neighborhood_map(grid, n)
    labels = grid
    for _ in range(iters):
        q = assign_probabilities(feats, centroids, z, temp)
        labels = LabelMask(argmax_assign(q, z).labels, n)
        centroids = label_means(feats, labels.labels, n, fallback=centroids)
    rows, cols = nearest_indices(H, side), nearest_indices(W, side)
    full = LabelMask(labels.labels[np.ix_(rows, cols)], n)
    return Segmentation(full, labels, grid, z)


def segment(img, n: int, iters: int = 10, temp: float = 0.1, stride: int = 16) -> LabelMask:
    """Superpixel label field with (at most) ``n`` regions at image resolution."""
    return segment_detailed(img, n, iters, temp, stride).labels


def multiscale(img, cfg: Config) -> SuperpixelStack:
    masks = tuple(segment(img, n, cfg.spx_iters, cfg.spx_temp, cfg.spx_stride)
                  for n in cfg.superpixels_per_scale)
    return SuperpixelStack(masks, tuple(cfg.superpixels_per_scale))


def region_binary_masks(m: LabelMask) -> list[np.ndarray]:
    """One 0/1 float mask per label ``0 .. region_count - 1``."""
    return list((m.labels[None] == np.arange(m.region_count)[:, None, None]).astype(np.float64))


def downsample_labels_nearest(m: LabelMask, h: int, w: int) -> LabelMask:
    H, W = m.shape
    rows, cols = nearest_indices(h, H), nearest_indices(w, W)
    return LabelMask(m.labels[np.ix_(rows, cols)], m.region_count)


def boundary_map(m: LabelMask) -> np.ndarray:
    """Boolean map of pixels whose right or lower neighbour has another label."""
    lab = m.labels
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
    return edge


def undersegmentation_error(m: LabelMask, gt_labels: np.ndarray) -> float:
    """Leakage of superpixels across ground-truth segments, as a pixel fraction.

    For every superpixel and every ground-truth segment it overlaps, counts
    the smaller of the overlap and the remainder of the superpixel.
    """
    gt = np.asarray(gt_labels).astype(np.int64)
    if gt.shape != m.shape:
        raise DimensionError(f"ground truth {gt.shape} vs labels {m.shape}")
    n_gt = int(gt.max()) + 1
    joint = np.bincount(m.labels.reshape(-1) * n_gt + gt.reshape(-1),
                        minlength=m.region_count * n_gt).reshape(m.region_count, n_gt)
    size = joint.sum(axis=1, keepdims=True)
    leak = np.where(joint > 0, np.minimum(joint, size - joint), 0)
    return float(leak.sum() / gt.size)

"""Array conventions and the composite value types.

Images, soft masks and feature maps are plain ``float64`` numpy arrays:

* image: ``(3, H, W)`` in ``[0, 1]``
* soft mask / similarity map: ``(H, W)``
* feature map: ``(C, h, w)``

The ``as_*`` helpers validate and convert; composite values that carry
bookkeeping (label fields, episodes) are frozen dataclasses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError

MIN_SIDE = 16


def as_image(data, min_side: int = MIN_SIDE) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise DimensionError(f"image must have shape (3, H, W), got {arr.shape}")
    if min(arr.shape[1:]) < min_side:
        raise DimensionError(f"image sides must be >= {min_side}, got {arr.shape[1:]}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("image contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ParameterError("image values must lie in [0, 1]")
    return arr


def as_mask(data, shape: tuple[int, int] | None = None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"mask must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise DimensionError(f"mask shape {arr.shape} does not match {tuple(shape)}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("mask contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ParameterError("mask values must lie in [0, 1]")
    return arr


def as_features(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise DimensionError(f"feature map must have shape (C, h, w), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("feature map contains non-finite values")
    return arr


@dataclass(frozen=True)
class LabelMask:
    """Integer partition of an ``(H, W)`` grid into ``region_count`` labels.

    Labels live in ``[0, region_count)``; a label may be absent (for instance
    after nearest-neighbour downsampling).
    """

    labels: np.ndarray
    region_count: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise DimensionError(f"label field must be 2-D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.array_equal(labels, np.round(labels)):
                raise ParameterError("label field must hold integers")
        labels = labels.astype(np.int64)
        if self.region_count < 1:
            raise ParameterError("region_count must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.region_count):
            raise ParameterError(f"labels outside [0, {self.region_count})")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def present(self) -> np.ndarray:
        """Sorted labels that actually occur."""
        return np.unique(self.labels)


@dataclass(frozen=True)
class Episode:
    """K support (image, mask) pairs and one query (image, mask)."""

    supports: tuple[tuple[np.ndarray, np.ndarray], ...]
    query_image: np.ndarray
    query_mask: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if len(self.supports) < 1:
            raise ParameterError("an episode needs at least one support shot")
        supports = []
        shape = np.asarray(self.query_image).shape[1:]
        for img, mask in self.supports:
            img = as_image(img)
            if img.shape[1:] != shape:
                raise DimensionError("all episode images must share (H, W)")
            supports.append((img, as_mask(mask, shape)))
        object.__setattr__(self, "supports", tuple(supports))
        object.__setattr__(self, "query_image", as_image(self.query_image))
        object.__setattr__(self, "query_mask", as_mask(self.query_mask, shape))

    @property
    def k_shot(self) -> int:
        return len(self.supports)

    @property
    def size(self) -> tuple[int, int]:
        return self.query_image.shape[1:]

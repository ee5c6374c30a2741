"""Prototype confidence-modulated thresholding (test time only).

The query confidence map ``m_fg - m_bg`` is split at an OTSU threshold ``t``
scaled by ``1 / (1 + exp(beta * (C + gamma)))``, where ``C`` measures how well
query and support prototypes agree across views.  High confidence drives the
threshold to 0 (plain similarity comparison); low confidence keeps the
adaptive OTSU threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .core.errors import DimensionError, ParameterError
from .core.ops import cosine
from .proto import ClassPrototypes


@dataclass(frozen=True)
class PcmtParams:
    beta: float = 40.0
    gamma: float = 0.1
    histogram_bins: int = 256

    def __post_init__(self):
        if self.histogram_bins < 2:
            raise ParameterError("histogram_bins must be >= 2")

    @classmethod
    def from_config(cls, cfg) -> "PcmtParams":
        return cls(cfg.beta, cfg.gamma, cfg.otsu_bins)


class OtsuResult(NamedTuple):
    threshold: float
    split: int          # class 0 is bins [0, split)
    degenerate: bool


def confidence_map(m_fg, m_bg) -> np.ndarray:
    m_fg = np.asarray(m_fg, dtype=np.float64)
    m_bg = np.asarray(m_bg, dtype=np.float64)
    if m_fg.shape != m_bg.shape:
        raise DimensionError(f"similarity maps differ: {m_fg.shape} vs {m_bg.shape}")
    return m_fg - m_bg


def histogram(values: np.ndarray, bins: int) -> tuple[np.ndarray, float, float]:
    """Counts over ``bins`` equal bins spanning ``[min, max]``.

    A value ``v`` lands in bin ``floor((v - min) / (max - min) * bins)``, with
    the maximum folded into the last bin.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    idx = np.floor((v - lo) / (hi - lo) * bins).astype(np.int64)
    idx = np.clip(idx, 0, bins - 1)
    return np.bincount(idx, minlength=bins), lo, hi


def otsu_threshold(conf, bins: int = 256) -> OtsuResult:
    """Bin edge maximizing between-class variance of the histogram.

    Class means use bin indices as levels.  Scores are compared exactly in
    integer arithmetic, so ties resolve to the lowest edge.  A constant map
    returns its value with ``degenerate=True``.
    """
    if bins < 2:
        raise ParameterError("bins must be >= 2")
    conf = np.asarray(conf, dtype=np.float64)
    lo, hi = float(conf.min()), float(conf.max())
    if hi == lo:
        return OtsuResult(lo, 0, True)
    counts, lo, hi = histogram(conf, bins)
    levels = np.arange(bins, dtype=np.int64)
    n0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * levels)[:-1]
    total, total_s = int(counts.sum()), int((counts * levels).sum())
    best_k, best_num, best_den = 0, -1, 1
    # variance_k is proportional to (N*S0 - N0*S)^2 / (N0 * (N - N0))
    for k, (a, b) in enumerate(zip(n0.tolist(), s0.tolist()), start=1):
        if a == 0 or a == total:
            continue
        num = (total * b - a * total_s) ** 2
        den = a * (total - a)
        if best_num < 0 or num * best_den > best_num * den:
            best_k, best_num, best_den = k, num, den
    return OtsuResult(lo + best_k * (hi - lo) / bins, best_k, False)


def prototype_confidence(protos: ClassPrototypes) -> float:
    """Cross-view agreement of query and support prototypes, in ``[-2, 2]``."""
    return (cosine(protos.fg_query, protos.fg_support)
            - 0.5 * (cosine(protos.fg_query, protos.bg_support)
                     + cosine(protos.fg_support, protos.bg_query)))


def threshold_weight(C: float, params: PcmtParams) -> float:
    """``1 / (1 + exp(beta * (C + gamma)))`` without overflow."""
    return float(expit(-params.beta * (C + params.gamma)))


def modulated_segment(conf, t: float, C: float, params: PcmtParams) -> np.ndarray:
    """Binary mask of ``conf > weight(C) * t`` (strict)."""
    theta = threshold_weight(C, params) * t
    return (np.asarray(conf) > theta).astype(np.float64)

"""Class prototypes (support, self-support query, fused), similarity maps and losses.

Query prototypes follow the self-support rule: pool the query features over the
pixels whose cosine to the support prototype exceeds a confidence threshold,
falling back to the support prototype when no pixel qualifies.

The BCE head turns a pair of cosine maps into a foreground probability with a
temperature-scaled two-way softmax, ``p = sigmoid(temp * (m_fg - m_bg))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Config
from .core.errors import DimensionError, EmptyForegroundError, ParameterError
from .core.ops import (area_downsample, cosine_similarity_map, masked_average_pool,
                       resize_bilinear)
from .core.types import as_features, as_mask

LOG_FLOOR = np.log(1e-12)


@dataclass(frozen=True)
class ClassPrototypes:
    fg_support: np.ndarray
    bg_support: np.ndarray
    fg_query: np.ndarray
    bg_query: np.ndarray
    fg_fused: np.ndarray
    bg_fused: np.ndarray
    fg_fallback: bool = False
    bg_fallback: bool = False
    bg_support_empty: bool = False


def feature_mask(mask: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    """Area-average a pixel mask down to feature resolution, then binarize at 0.5."""
    mask = as_mask(mask)
    if mask.shape == tuple(size):
        return (mask >= 0.5).astype(np.float64)
    return (area_downsample(mask, *size) >= 0.5).astype(np.float64)


def support_prototypes(feats, masks) -> tuple[np.ndarray, np.ndarray, bool]:
    """Foreground/background support prototypes averaged over shots.

    ``feats`` and ``masks`` are per-shot sequences (or a single feature map and
    mask).  Shots whose foreground (background) is empty at feature resolution
    are left out of the foreground (background) average.  Returns
    ``(fg, bg, bg_empty)``.
    """
    if isinstance(feats, np.ndarray) and feats.ndim == 3:
        feats, masks = [feats], [masks]
    if len(feats) < 1 or len(feats) != len(masks):
        raise ParameterError("need one mask per support shot and at least one shot")
    fgs, bgs = [], []
    for f, m in zip(feats, masks):
        f = as_features(f)
        fm = feature_mask(m, f.shape[1:])
        fg, fg_empty = masked_average_pool(f, fm)
        bg, bg_empty = masked_average_pool(f, 1.0 - fm)
        if not fg_empty:
            fgs.append(fg)
        if not bg_empty:
            bgs.append(bg)
    if not fgs:
        raise EmptyForegroundError("every support mask is empty at feature resolution")
    bg = np.mean(bgs, axis=0) if bgs else np.zeros_like(fgs[0])
    return np.mean(fgs, axis=0), bg, not bgs


def self_support_prototypes(f_q, fg_s, bg_s, cfg: Config):
    """Returns ``(fg_q, bg_q, fg_fallback, bg_fallback)``."""
    f_q = as_features(f_q)
    out = []
    for proto, thresh in ((fg_s, cfg.ssp_fg_thresh), (bg_s, cfg.ssp_bg_thresh)):
        sel = (cosine_similarity_map(proto, f_q) > thresh).astype(np.float64)
        vec, empty = masked_average_pool(f_q, sel)
        out.append((np.array(proto, dtype=np.float64), True) if empty else (vec, False))
    (fg_q, fg_fb), (bg_q, bg_fb) = out
    return fg_q, bg_q, fg_fb, bg_fb


def fuse_class_prototypes(s, q, w_fuse: float = 0.5) -> np.ndarray:
    return w_fuse * np.asarray(s, dtype=np.float64) + (1.0 - w_fuse) * np.asarray(q, dtype=np.float64)


def class_prototypes(support_feats, support_masks, f_q, cfg: Config) -> ClassPrototypes:
    fg_s, bg_s, bg_empty = support_prototypes(support_feats, support_masks)
    fg_q, bg_q, fg_fb, bg_fb = self_support_prototypes(f_q, fg_s, bg_s, cfg)
    w = cfg.ssp_fuse_weight
    return ClassPrototypes(fg_s, bg_s, fg_q, bg_q,
                           fuse_class_prototypes(fg_s, fg_q, w),
                           fuse_class_prototypes(bg_s, bg_q, w),
                           fg_fb, bg_fb, bg_empty)


def upsample_features(f: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    f = as_features(f)
    if target[0] < f.shape[1] or target[1] < f.shape[2]:
        raise ParameterError(f"target {target} smaller than feature size {f.shape[1:]}")
    return resize_bilinear(f, *target)


def pair_similarity(fg, bg, f, target) -> tuple[np.ndarray, np.ndarray]:
    up = upsample_features(f, target)
    return cosine_similarity_map(fg, up), cosine_similarity_map(bg, up)


def similarity_maps(protos: ClassPrototypes, f_q, target) -> tuple[np.ndarray, np.ndarray]:
    """Cosine maps of the upsampled query features against the fused prototypes."""
    return pair_similarity(protos.fg_fused, protos.bg_fused, f_q, target)


def _log_sigmoid(z: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -z)


def bce_head(m_fg, m_bg, gt, temp: float) -> float:
    """Mean binary cross entropy of ``sigmoid(temp * (m_fg - m_bg))`` against ``gt``.

    Log arguments are floored at 1e-12.
    """
    return bce_head_grad(m_fg, m_bg, gt, temp)[0]


def bce_head_grad(m_fg, m_bg, gt, temp: float):
    """Loss and its gradients with respect to ``m_fg`` and ``m_bg``."""
    m_fg = np.asarray(m_fg, dtype=np.float64)
    m_bg = np.asarray(m_bg, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if not (m_fg.shape == m_bg.shape == gt.shape):
        raise DimensionError(f"map shapes differ: {m_fg.shape}, {m_bg.shape}, {gt.shape}")
    z = temp * (m_fg - m_bg)
    log_p, log_q = _log_sigmoid(z), _log_sigmoid(-z)
    clip_p, clip_q = log_p < LOG_FLOOR, log_q < LOG_FLOOR
    lp, lq = np.maximum(log_p, LOG_FLOOR), np.maximum(log_q, LOG_FLOOR)
    n = gt.size
    loss = -float(np.mean(gt * lp + (1.0 - gt) * lq))
    p = np.exp(log_p)
    # d/dz of -log p is -(1-p); of -log(1-p) is p; floored terms have zero slope
    dz = (-gt * (1.0 - p) * ~clip_p + (1.0 - gt) * p * ~clip_q) / n
    return loss, temp * dz, -temp * dz


def cosine_map_grad(proto: np.ndarray, feats: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(upstream * cos(proto, feats))`` with respect to ``proto``."""
    proto = np.asarray(proto, dtype=np.float64)
    pn = np.sqrt(proto @ proto)
    fn = np.sqrt(np.einsum("chw,chw->hw", feats, feats))
    if pn == 0:
        return np.zeros_like(proto)
    ok = fn > 0
    w = np.where(ok, upstream / np.where(ok, fn, 1.0), 0.0) / pn
    cos = cosine_similarity_map(proto, feats)
    return np.tensordot(feats, w, axes=([1, 2], [0, 1])) - proto * np.sum(w * cos * fn) / pn


def final_loss_grad(fg, bg, f_up, gt, temp: float):
    """BCE of cosine maps of ``f_up`` and its gradient w.r.t. both prototypes.

    ``f_up`` is already at mask resolution.  Returns ``(loss, d_fg, d_bg)``.
    """
    m_fg = cosine_similarity_map(fg, f_up)
    m_bg = cosine_similarity_map(bg, f_up)
    loss, g_fg, g_bg = bce_head_grad(m_fg, m_bg, gt, temp)
    return loss, cosine_map_grad(fg, f_up, g_fg), cosine_map_grad(bg, f_up, g_bg)


def final_loss(protos: ClassPrototypes, f_hat_q, gt_q, cfg: Config) -> float:
    gt_q = as_mask(gt_q)
    m_fg, m_bg = similarity_maps(protos, f_hat_q, gt_q.shape)
    return bce_head(m_fg, m_bg, gt_q, cfg.softmax_temp)


def ssp_loss_terms(f_s, f_q, m_s, m_q, cfg: Config) -> dict[str, float]:
    """The three self-support terms on raw high-level features.

    ``f_s``/``m_s`` may be per-shot sequences; the support-self term is the
    mean over shots.  Keys: ``fused``, ``query_self``, ``support_self`` (the
    last one before weighting by ``lambda_ssp``).
    """
    if isinstance(f_s, np.ndarray) and f_s.ndim == 3:
        f_s, m_s = [f_s], [m_s]
    m_q = as_mask(m_q)
    protos = class_prototypes(f_s, m_s, f_q, cfg)
    t = cfg.softmax_temp
    fused = bce_head(*pair_similarity(protos.fg_fused, protos.bg_fused, f_q, m_q.shape), m_q, t)
    query = bce_head(*pair_similarity(protos.fg_query, protos.bg_query, f_q, m_q.shape), m_q, t)
    support = float(np.mean([
        bce_head(*pair_similarity(protos.fg_support, protos.bg_support, f, as_mask(m).shape),
                 as_mask(m), t)
        for f, m in zip(f_s, m_s)]))
    return {"fused": fused, "query_self": query, "support_self": support}


def ssp_loss(f_s, f_q, m_s, m_q, cfg: Config) -> float:
    terms = ssp_loss_terms(f_s, f_q, m_s, m_q, cfg)
    return terms["fused"] + terms["query_self"] + cfg.lambda_ssp * terms["support_self"]


def episode_losses(f_hat_s, f_hat_q, f_h_s, f_h_q, m_s, m_q, cfg: Config) -> dict[str, float]:
    """Final loss on enhanced features, self-support loss on raw features, and total."""
    if isinstance(f_hat_s, np.ndarray) and f_hat_s.ndim == 3:
        f_hat_s, f_h_s, m_s = [f_hat_s], [f_h_s], [m_s]
    protos = class_prototypes(f_hat_s, m_s, f_hat_q, cfg)
    l_final = final_loss(protos, f_hat_q, m_q, cfg)
    terms = ssp_loss_terms(f_h_s, f_h_q, m_s, m_q, cfg)
    l_ssp = terms["fused"] + terms["query_self"] + cfg.lambda_ssp * terms["support_self"]
    return {
        "final": l_final,
        "ssp_fused": terms["fused"],
        "ssp_query_self": terms["query_self"],
        "ssp_support_self": terms["support_self"],
        "ssp": l_ssp,
        "total": l_final + l_ssp,
    }


def finite_diff_grad(loss_fn, tensor: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of ``tensor``."""
    if eps <= 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    x = np.array(tensor, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn(x)
        flat[i] = orig - eps
        down = loss_fn(x)
        flat[i] = orig
        g[i] = (up - down) / (2.0 * eps)
    return grad

"""Analytic vs central-difference gradients of the final BCE loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Rng
from ..core.ops import cosine_similarity_map
from ..proto import bce_head, bce_head_grad, final_loss_grad, finite_diff_grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max|n|`` (absolute error when ``n`` is all zeros)."""
    scale = float(np.max(np.abs(numeric)))
    err = float(np.max(np.abs(analytic - numeric)))
    return err / scale if scale > 0 else err


@dataclass(frozen=True)
class GradCase:
    fg: np.ndarray
    bg: np.ndarray
    feats: np.ndarray
    gt: np.ndarray


def random_case(rng: Rng, channels: int = 8, size: int = 8) -> GradCase:
    feats = rng.spawn("feats").normal((channels, size, size))
    gt = (rng.spawn("gt").uniform((size, size)) < 0.4).astype(np.float64)
    return GradCase(rng.spawn("fg").normal(channels), rng.spawn("bg").normal(channels), feats, gt)


def sampled_diff_grad(loss_fn, tensor: np.ndarray, idx: np.ndarray, eps: float) -> np.ndarray:
    """Central differences at the flat positions ``idx`` only."""
    x = np.array(tensor, dtype=np.float64)
    flat = x.reshape(-1)
    out = np.empty(len(idx))
    for j, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn(x)
        flat[i] = orig - eps
        down = loss_fn(x)
        flat[i] = orig
        out[j] = (up - down) / (2.0 * eps)
    return out


def check_case(case: GradCase, temp: float = 10.0, eps: float = 1e-5,
               max_pixels: int | None = None, rng: Rng | None = None) -> dict[str, float]:
    """Relative errors for both similarity maps and both prototypes.

    With ``max_pixels`` the map gradients are checked on that many pixels
    drawn from ``rng``; prototype gradients are always checked in full.  The
    prototype step is ``eps * max|p|``: cosine is scale-free, so an absolute
    step would be too coarse for small-norm prototypes.
    """
    m_fg = cosine_similarity_map(case.fg, case.feats)
    m_bg = cosine_similarity_map(case.bg, case.feats)
    _, g_mfg, g_mbg = bce_head_grad(m_fg, m_bg, case.gt, temp)
    _, g_fg, g_bg = final_loss_grad(case.fg, case.bg, case.feats, case.gt, temp)
    if max_pixels is None or max_pixels >= m_fg.size:
        idx = np.arange(m_fg.size)
    else:
        idx = (rng or Rng(0, "pixels")).integers(m_fg.size, max_pixels)
    n_mfg = sampled_diff_grad(lambda m: bce_head(m, m_bg, case.gt, temp), m_fg, idx, eps)
    n_mbg = sampled_diff_grad(lambda m: bce_head(m_fg, m, case.gt, temp), m_bg, idx, eps)
    g_mfg, g_mbg = g_mfg.reshape(-1)[idx], g_mbg.reshape(-1)[idx]
    n_fg = finite_diff_grad(lambda p: final_loss_grad(p, case.bg, case.feats, case.gt, temp)[0],
                            case.fg, eps * float(np.max(np.abs(case.fg))))
    n_bg = finite_diff_grad(lambda p: final_loss_grad(case.fg, p, case.feats, case.gt, temp)[0],
                            case.bg, eps * float(np.max(np.abs(case.bg))))
    return {"m_fg": rel_error(g_mfg, n_mfg), "m_bg": rel_error(g_mbg, n_mbg),
            "fg_proto": rel_error(g_fg, n_fg), "bg_proto": rel_error(g_bg, n_bg)}


def gradient_check(n_cases: int = 20, seed: int = 0, temp: float = 10.0) -> dict[str, float]:
    """Worst relative error per gradient over ``n_cases`` random cases."""
    worst = {"m_fg": 0.0, "m_bg": 0.0, "fg_proto": 0.0, "bg_proto": 0.0}
    root = Rng(seed, "gradcheck")
    for i in range(n_cases):
        for k, v in check_case(random_case(root.spawn("case", i)), temp).items():
            worst[k] = max(worst[k], v)
    return worst


def episode_case(episode, cfg, models=None) -> GradCase:
    """Fused prototypes and upsampled enhanced query features of a real episode."""
    from ..pipeline import Models, extract
    from ..proto import class_prototypes, upsample_features

    models = models or Models.from_config(cfg)
    supports = [extract(img, cfg, models).enhanced for img, _ in episode.supports]
    f_q = extract(episode.query_image, cfg, models).enhanced
    protos = class_prototypes(supports, [m for _, m in episode.supports], f_q, cfg)
    return GradCase(protos.fg_fused, protos.bg_fused,
                    upsample_features(f_q, episode.size), episode.query_mask)


def episode_gradient_check(n_episodes: int = 20, seed: int = 0, cfg=None,
                           max_pixels: int = 256) -> dict[str, float]:
    """Worst relative error per gradient over random synthetic episodes."""
    from ..core import Config
    from ..pipeline import Models
    from .episodes import make_episode, random_spec

    cfg = cfg or Config()
    models = Models.from_config(cfg)
    root = Rng(seed, "gradcheck-episodes")
    worst = {"m_fg": 0.0, "m_bg": 0.0, "fg_proto": 0.0, "bg_proto": 0.0}
    for i in range(n_episodes):
        rng = root.spawn("episode", i)
        ep = make_episode(random_spec(rng.spawn("spec"), size=cfg.image_size))
        errs = check_case(episode_case(ep, cfg, models), cfg.softmax_temp,
                          max_pixels=max_pixels, rng=rng.spawn("pixels"))
        for k, v in errs.items():
            worst[k] = max(worst[k], v)
    return worst

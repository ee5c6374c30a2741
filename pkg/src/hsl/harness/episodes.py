"""Synthetic few-shot episodes with exact ground-truth masks.

Foreground and background colours sit symmetrically around mid-grey:
``fg = 0.5 + contrast/2 * s`` and ``bg = 0.5 - contrast/2 * s`` for a sign
vector ``s`` in {-1, +1}^3 (never all-equal), so ``contrast = 1`` puts them on
opposite corners of the RGB cube and ``contrast = 0`` makes them equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import Episode, Rng
from ..core.errors import DegenerateError, ParameterError
from ..core.ops import cosine_similarity_map
from ..proto import feature_mask, support_prototypes
from .backbone import ToyBackboneSpec, toy_backbone

SHAPES = ("disk", "rectangle", "blob")
_SIGNS = [np.array(s, dtype=np.float64) for s in
          ((1, -1, -1), (-1, 1, -1), (-1, -1, 1), (1, 1, -1), (1, -1, 1), (-1, 1, 1))]


@dataclass(frozen=True)
class Texture:
    kind: str = "flat"      # flat | noise | stripes
    param: float = 0.0      # noise sigma or stripe period in pixels

    def __post_init__(self):
        if self.kind not in ("flat", "noise", "stripes"):
            raise ParameterError(f"unknown texture {self.kind!r}")
        if self.kind == "stripes" and self.param <= 0:
            raise ParameterError("stripe period must be positive")


@dataclass(frozen=True)
class SynthEpisodeSpec:
    shape: str = "disk"
    fg_texture: Texture = field(default_factory=Texture)
    bg_texture: Texture = field(default_factory=Texture)
    contrast: float = 1.0
    size: tuple[int, int] = (64, 64)
    seed: int = 0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ParameterError(f"unknown shape {self.shape!r}")
        if not 0.0 <= self.contrast <= 1.0:
            raise ParameterError(f"contrast {self.contrast} outside [0, 1]")


@dataclass(frozen=True)
class ShapeParams:
    """Geometry of one rendered instance, in pixel units."""

    kind: str
    cx: float
    cy: float
    r: float
    aspect: float = 1.0
    lobes: tuple[tuple[float, float, float], ...] = ()


def sample_shape(kind: str, size: tuple[int, int], rng: Rng) -> ShapeParams:
    H, W = size
    side = min(H, W)
    u = rng.uniform(5)
    cx = W * (0.38 + 0.24 * u[0])
    cy = H * (0.38 + 0.24 * u[1])
    r = side * (0.2 + 0.1 * u[2])
    aspect = 0.7 + 0.6 * u[3]
    lobes = ()
    if kind == "blob":
        lobes = []
        for k in range(3):
            a = 2 * math.pi * (u[4] + k / 3)
            lobes.append((cx + 0.55 * r * math.cos(a), cy + 0.55 * r * math.sin(a), 0.6 * r))
        lobes = tuple(lobes)
    return ShapeParams(kind, cx, cy, r, aspect, lobes)


def shape_inside(p: ShapeParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Point-in-shape test at continuous coordinates."""
    if p.kind == "disk":
        return (x - p.cx) ** 2 + (y - p.cy) ** 2 <= p.r ** 2
    if p.kind == "rectangle":
        return (np.abs(x - p.cx) <= p.r * p.aspect) & (np.abs(y - p.cy) <= p.r / p.aspect)
    inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
    for bx, by, br in p.lobes:
        inside |= (x - bx) ** 2 + (y - by) ** 2 <= br ** 2
    return inside


def rasterize(p: ShapeParams, size: tuple[int, int]) -> np.ndarray:
    """Binary mask sampled at pixel centres."""
    H, W = size
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64) + 0.5
    return shape_inside(p, xx, yy).astype(np.float64)


def class_colors(contrast: float, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    s = _SIGNS[rng.integers(len(_SIGNS))]
    return 0.5 + 0.5 * contrast * s, 0.5 - 0.5 * contrast * s


def paint(color: np.ndarray, tex: Texture, size: tuple[int, int], rng: Rng) -> np.ndarray:
    H, W = size
    layer = np.broadcast_to(np.asarray(color, dtype=np.float64)[:, None, None], (3, H, W)).copy()
    if tex.kind == "noise":
        layer += rng.normal((3, H, W), std=tex.param)
    elif tex.kind == "stripes":
        angle = math.pi * rng.uniform()
        yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
        phase = (xx * math.cos(angle) + yy * math.sin(angle)) * 2 * math.pi / tex.param
        layer += 0.15 * np.sin(phase)[None]
    return np.clip(layer, 0.0, 1.0)


def render(spec: SynthEpisodeSpec, fg_color, bg_color, rng: Rng):
    shape = sample_shape(spec.shape, spec.size, rng.spawn("shape"))
    mask = rasterize(shape, spec.size)
    fg = paint(fg_color, spec.fg_texture, spec.size, rng.spawn("fg"))
    bg = paint(bg_color, spec.bg_texture, spec.size, rng.spawn("bg"))
    return np.where(mask[None] > 0, fg, bg), mask


def make_episode(spec: SynthEpisodeSpec, k_shot: int = 1) -> Episode:
    """``k_shot`` supports and a query of one class, jittered per image."""
    if k_shot < 1:
        raise ParameterError("k_shot must be >= 1")
    rng = Rng(spec.seed, "synth")
    fg_c, bg_c = class_colors(spec.contrast, rng.spawn("colors"))
    images = [render(spec, fg_c, bg_c, rng.spawn("image", i)) for i in range(k_shot + 1)]
    return Episode(tuple(images[:k_shot]), images[k_shot][0], images[k_shot][1], spec.seed)


def random_spec(rng: Rng, contrast_range=(0.3, 1.0), size=(64, 64)) -> SynthEpisodeSpec:
    """Spec with a random shape, textures and contrast; seed drawn from ``rng``."""
    shape = SHAPES[rng.spawn("shape").integers(len(SHAPES))]
    textures = []
    for name in ("fg_tex", "bg_tex"):
        r = rng.spawn(name)
        kind = ("flat", "noise", "stripes")[r.integers(3)]
        param = {"flat": 0.0, "noise": 0.03 + 0.05 * r.uniform(),
                 "stripes": 6.0 + 10.0 * r.uniform()}[kind]
        textures.append(Texture(kind, param))
    lo, hi = contrast_range
    contrast = lo + (hi - lo) * rng.spawn("contrast").uniform()
    seed = int(rng.spawn("seed").raw(1)[0] >> np.uint64(1))
    return SynthEpisodeSpec(shape, textures[0], textures[1], contrast, tuple(size), seed)


def query_affinity(episode: Episode, backbone_spec) -> dict[str, tuple[float, float]]:
    """Mean cosine of query fg / bg features to the support (fg, bg) prototypes.

    Uses raw high-level toy-backbone features; a class absent at feature
    resolution maps to ``(nan, nan)``.
    """
    feats = [toy_backbone(img, backbone_spec)[1] for img, _ in episode.supports]
    fg_s, bg_s, _ = support_prototypes(feats, [m for _, m in episode.supports])
    f_q = toy_backbone(episode.query_image, backbone_spec)[1]
    fg_q = feature_mask(episode.query_mask, f_q.shape[1:]) > 0
    to_fg, to_bg = cosine_similarity_map(fg_s, f_q), cosine_similarity_map(bg_s, f_q)
    out = {}
    for name, sel in (("fg", fg_q), ("bg", ~fg_q)):
        out[name] = ((float(to_fg[sel].mean()), float(to_bg[sel].mean()))
                     if sel.any() else (float("nan"), float("nan")))
    return out


def is_ambiguous(episode: Episode, backbone_spec) -> bool:
    """Query background is on average closer to the support fg prototype."""
    to_fg, to_bg = query_affinity(episode, backbone_spec)["bg"]
    return to_fg > to_bg


def is_separable(episode: Episode, backbone_spec) -> bool:
    """Query fg is closer to the support fg prototype and query bg to the bg one."""
    aff = query_affinity(episode, backbone_spec)
    return aff["fg"][0] > aff["fg"][1] and aff["bg"][1] > aff["bg"][0]


def make_separable_episode(seed: int, backbone_spec=None, k_shot: int = 1, size=(64, 64),
                           contrast_range=(0.8, 1.0), max_attempts: int = 100) -> Episode:
    """Random high-contrast episode, redrawn until :func:`is_separable` holds."""
    backbone_spec = backbone_spec or ToyBackboneSpec()
    root = Rng(seed, "separable")
    for attempt in range(max_attempts):
        spec = random_spec(root.spawn("attempt", attempt), contrast_range, size)
        episode = make_episode(spec, k_shot)
        if is_separable(episode, backbone_spec):
            return episode
    raise DegenerateError(f"no separable episode found for seed {seed} "
                          f"after {max_attempts} attempts")


def make_ambiguous_episode(seed: int, backbone_spec=None, k_shot: int = 1,
                           size=(64, 64), max_attempts: int = 100) -> Episode:
    """Episode whose query background looks more like the support foreground.

    The support is rendered at high contrast; the query background colour is
    pulled toward the foreground colour.  Draws are repeated until, under the
    toy backbone, the query background's mean cosine to the support
    foreground prototype exceeds its cosine to the support background
    prototype.
    """
    backbone_spec = backbone_spec or ToyBackboneSpec()
    root = Rng(seed, "ambiguous")
    for attempt in range(max_attempts):
        rng = root.spawn("attempt", attempt)
        u = rng.spawn("params").uniform(2)
        shape = SHAPES[rng.spawn("shape").integers(len(SHAPES))]
        spec = SynthEpisodeSpec(shape, contrast=0.8 + 0.2 * u[0], size=tuple(size),
                                seed=int(rng.spawn("seed").raw(1)[0] >> np.uint64(1)))
        fg_c, bg_c = class_colors(spec.contrast, rng.spawn("colors"))
        pull = 0.6 + 0.3 * u[1]
        q_bg = bg_c + pull * (fg_c - bg_c)
        supports = tuple(render(spec, fg_c, bg_c, rng.spawn("image", i)) for i in range(k_shot))
        q_img, q_mask = render(spec, fg_c, q_bg, rng.spawn("image", k_shot))
        episode = Episode(supports, q_img, q_mask, seed)
        if is_ambiguous(episode, backbone_spec):
            return episode
    raise DegenerateError(f"no ambiguous episode found for seed {seed} "
                          f"after {max_attempts} attempts")

"""End-to-end test-time inference on one episode.

superpixels -> toy backbone -> HSM enhancement -> class prototypes ->
similarity maps -> confidence map -> OTSU -> thresholding.  Style
randomization is a training-time augmentation and is not applied here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Config, Episode, Rng
from .harness.backbone import ToyBackboneSpec, toy_backbone
from .hsm import HsmWeights, hsm_enhance
from .pcmt import (OtsuResult, PcmtParams, confidence_map, modulated_segment,
                   otsu_threshold, prototype_confidence, threshold_weight)
from .proto import ClassPrototypes, class_prototypes, episode_losses, similarity_maps
from .superpix import SuperpixelStack, multiscale

MODES = ("pcmt", "fixed0", "otsu")


@dataclass(frozen=True)
class Models:
    backbone: ToyBackboneSpec
    hsm: HsmWeights

    @classmethod
    def from_config(cls, cfg: Config, hsm: HsmWeights | None = None) -> "Models":
        backbone = ToyBackboneSpec(cfg.seed, cfg.c_low, cfg.c_high)
        if hsm is None:
            hsm = HsmWeights.init(cfg.c_low, cfg.c_high, cfg.msa_heads, Rng(cfg.seed, "hsm"))
        return cls(backbone, hsm)


@dataclass(frozen=True)
class ImageFeatures:
    stack: SuperpixelStack
    low: np.ndarray
    high: np.ndarray
    enhanced: np.ndarray


@dataclass(frozen=True)
class Inference:
    protos: ClassPrototypes
    m_fg: np.ndarray
    m_bg: np.ndarray
    conf: np.ndarray
    otsu: OtsuResult
    C: float
    weight: float
    params: PcmtParams

    def predict(self, mode: str = "pcmt") -> np.ndarray:
        if mode == "fixed0":
            return (self.conf > 0).astype(np.float64)
        # degenerate OTSU (constant map) falls back to a zero threshold
        t = 0.0 if self.otsu.degenerate else self.otsu.threshold
        if mode == "otsu":
            return (self.conf > t).astype(np.float64)
        if mode == "pcmt":
            return modulated_segment(self.conf, t, self.C, self.params)
        raise ValueError(f"unknown threshold mode {mode!r}")

    def diagnostics(self) -> dict[str, float]:
        return {"t": self.otsu.threshold, "C": self.C, "weight": self.weight,
                "otsu_degenerate": float(self.otsu.degenerate)}


def extract(img: np.ndarray, cfg: Config, models: Models) -> ImageFeatures:
    stack = multiscale(img, cfg)
    low, high = toy_backbone(img, models.backbone)
    return ImageFeatures(stack, low, high, hsm_enhance(low, high, stack, models.hsm, cfg))


def infer_episode(episode: Episode, cfg: Config, models: Models | None = None) -> Inference:
    models = models or Models.from_config(cfg)
    supports = [extract(img, cfg, models) for img, _ in episode.supports]
    query = extract(episode.query_image, cfg, models)
    protos = class_prototypes([s.enhanced for s in supports],
                              [m for _, m in episode.supports], query.enhanced, cfg)
    m_fg, m_bg = similarity_maps(protos, query.enhanced, episode.size)
    conf = confidence_map(m_fg, m_bg)
    params = PcmtParams.from_config(cfg)
    C = prototype_confidence(protos)
    return Inference(protos, m_fg, m_bg, conf, otsu_threshold(conf, params.histogram_bins),
                     C, threshold_weight(C, params), params)


def segment_episode(episode: Episode, cfg: Config, models: Models | None = None,
                    mode: str = "pcmt") -> tuple[np.ndarray, dict[str, float]]:
    """Predicted query mask and ``{t, C, weight, otsu_degenerate}``."""
    inf = infer_episode(episode, cfg, models)
    return inf.predict(mode), inf.diagnostics()


def episode_loss_terms(episode: Episode, cfg: Config, models: Models | None = None):
    models = models or Models.from_config(cfg)
    supports = [extract(img, cfg, models) for img, _ in episode.supports]
    query = extract(episode.query_image, cfg, models)
    masks = [m for _, m in episode.supports]
    return episode_losses([s.enhanced for s in supports], query.enhanced,
                          [s.high for s in supports], query.high, masks,
                          episode.query_mask, cfg)

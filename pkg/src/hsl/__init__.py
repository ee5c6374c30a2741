"""Hierarchical semantic learning pipeline for cross-domain few-shot segmentation.

Stages: dual style randomization (:mod:`hsl.styler`), multi-scale superpixels
(:mod:`hsl.superpix`), hierarchical semantic mining (:mod:`hsl.hsm`),
prototype extraction and losses (:mod:`hsl.proto`), confidence-modulated
thresholding (:mod:`hsl.pcmt`), and the synthetic evaluation harness
(:mod:`hsl.harness`).
"""

from .core import Config, Episode, LabelMask, Rng

__version__ = "0.1.0"

__all__ = ["Config", "Episode", "LabelMask", "Rng", "__version__"]

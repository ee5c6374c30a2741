"""Shared types, RNG, file formats and pooling/similarity primitives."""

from .config import Config, load_config, parse_config, save_config
from .errors import (DegenerateError, DimensionError, EmptyForegroundError, FormatError,
                     HSLError, ParameterError)
from .io import (read_image, read_mask, read_tensor, write_image, write_mask,
                 write_tensor)
from .ops import (area_downsample, avg_pool, bounding_box, cosine, cosine_similarity_map,
                  masked_average_pool, max_pool, nearest_indices, resize_bilinear,
                  smooth_mask)
from .rng import Rng
from .types import Episode, LabelMask, as_features, as_image, as_mask

__all__ = [
    "Config", "load_config", "parse_config", "save_config",
    "DegenerateError", "DimensionError", "EmptyForegroundError", "FormatError",
    "HSLError", "ParameterError",
    "read_image", "read_mask", "read_tensor", "write_image", "write_mask", "write_tensor",
    "area_downsample", "avg_pool", "bounding_box", "cosine", "cosine_similarity_map",
    "masked_average_pool", "max_pool", "nearest_indices", "resize_bilinear", "smooth_mask",
    "Rng", "Episode", "LabelMask", "as_features", "as_image", "as_mask",
]

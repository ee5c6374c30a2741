"""Run configuration and its plain-text ``key=value`` file format."""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import FormatError, ParameterError


@dataclass(frozen=True)
class Config:
    """All tunables of the pipeline.

    The defaults are the desk-scale setting (64x64 images).  ``Config.full_scale()``
    gives the full-size setting with 400x400 inputs and a superpixel
    downsampling stride of 16.
    """

    L: int = 4
    superpixels_per_scale: tuple[int, ...] = (25, 100, 225, 400)
    sigma_f: float = 0.25
    sigma_g: float = 0.1
    K_smooth: int = 9
    alpha: float = 0.2
    beta: float = 40.0
    gamma: float = 0.1
    lambda_ssp: float = 0.2
    softmax_temp: float = 10.0
    ssp_fg_thresh: float = 0.7
    ssp_bg_thresh: float = 0.6
    image_size: tuple[int, int] = (64, 64)
    seed: int = 0
    # superpixel generator: pixels per superpixel side after downsampling
    spx_stride: int = 3
    spx_iters: int = 10
    spx_temp: float = 0.1
    msa_heads: int = 4
    ssp_fuse_weight: float = 0.5
    otsu_bins: int = 256
    c_low: int = 16
    c_high: int = 64

    def __post_init__(self):
        object.__setattr__(self, "superpixels_per_scale",
                           tuple(int(n) for n in self.superpixels_per_scale))
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        self.validate()

    @classmethod
    def full_scale(cls, **overrides) -> "Config":
        base = dict(image_size=(400, 400), spx_stride=16)
        base.update(overrides)
        return cls(**base)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        scales = self.superpixels_per_scale
        if self.L != len(scales):
            raise ParameterError(f"L={self.L} but {len(scales)} superpixel scales given")
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ParameterError("superpixels_per_scale must be strictly increasing")
        for n in scales:
            if n < 1 or math.isqrt(n) ** 2 != n:
                raise ParameterError(f"superpixel count {n} is not a perfect square")
        for name in ("alpha", "ssp_fg_thresh", "ssp_bg_thresh", "ssp_fuse_weight"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{name}={v} outside [0, 1]")
        if self.K_smooth < 1 or self.K_smooth % 2 == 0:
            raise ParameterError(f"K_smooth={self.K_smooth} must be odd and >= 1")
        if min(self.sigma_f, self.sigma_g) < 0:
            raise ParameterError("standard deviations must be nonnegative")
        if self.softmax_temp <= 0 or self.spx_temp <= 0:
            raise ParameterError("temperatures must be positive")
        if len(self.image_size) != 2 or min(self.image_size) < 16:
            raise ParameterError(f"image_size={self.image_size} must be (H, W) with H, W >= 16")
        if self.spx_stride < 1 or self.spx_iters < 1:
            raise ParameterError("spx_stride and spx_iters must be >= 1")
        if self.otsu_bins < 2:
            raise ParameterError("otsu_bins must be >= 2")
        if self.msa_heads < 1 or self.c_high % self.msa_heads:
            raise ParameterError(f"c_high={self.c_high} not divisible by msa_heads={self.msa_heads}")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _coerce(name: str, ftype, raw: str):
    raw = raw.strip()
    try:
        if ftype in ("int", int):
            return int(raw)
        if ftype in ("float", float):
            return float(raw)
        if name == "image_size":
            parts = raw.replace("x", ",").split(",")
            return tuple(int(p) for p in parts)
        # tuple[int, ...]
        return tuple(int(p) for p in raw.split(",") if p.strip())
    except ValueError as exc:
        raise FormatError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text: str, base: Config | None = None) -> Config:
    """Parse ``key=value`` lines on top of ``base`` (defaults if omitted).

    Blank lines and ``#`` comments are ignored; unknown keys are an error.
    """
    known = {f.name: f.type for f in fields(Config)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise FormatError(f"line {lineno}: unknown config key {key!r}")
        values[key] = _coerce(key, known[key], raw)
    base = base or Config()
    if "superpixels_per_scale" in values and "L" not in values:
        values["L"] = len(values["superpixels_per_scale"])
    return base.replace(**values)


def load_config(path: str | Path, base: Config | None = None) -> Config:
    return parse_config(Path(path).read_text(), base)


def save_config(cfg: Config, path: str | Path) -> None:
    Path(path).write_text(cfg.to_text())


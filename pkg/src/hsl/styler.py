"""Dual style randomization: foreground amplitude mixing and global random-conv style.

Both randomizers keep an image's phase spectrum (content) and alter only
its amplitude spectrum (style).  They are training-time augmentations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Config, LabelMask, Rng
from .core.errors import DimensionError, EmptyForegroundError
from .core.ops import bounding_box, resize_bilinear, smooth_mask
from .core.types import as_image, as_mask


@dataclass(frozen=True)
class Spectrum:
    amplitude: np.ndarray
    phase: np.ndarray


def fft2(img: np.ndarray) -> Spectrum:
    """Per-channel unnormalized 2-D DFT split into modulus and argument."""
    z = np.fft.fft2(np.asarray(img, dtype=np.float64), axes=(-2, -1))
    return Spectrum(np.abs(z), np.angle(z))


def ifft2(spec: Spectrum, clamp: bool = True) -> np.ndarray:
    """Real part of the inverse DFT of ``A * exp(iP)``, clipped to ``[0, 1]``."""
    amp = np.asarray(spec.amplitude, dtype=np.float64)
    phase = np.asarray(spec.phase, dtype=np.float64)
    if amp.shape != phase.shape:
        raise DimensionError(f"amplitude {amp.shape} vs phase {phase.shape}")
    out = np.fft.ifft2(amp * np.exp(1j * phase), axes=(-2, -1)).real
    return np.clip(out, 0.0, 1.0) if clamp else out


def mix_amplitude(a_fg: np.ndarray, a_local: np.ndarray, omega: float) -> np.ndarray:
    """``omega * a_local + (1 - omega) * a_fg``; negative results are kept."""
    a_fg = np.asarray(a_fg, dtype=np.float64)
    a_local = np.asarray(a_local, dtype=np.float64)
    if a_fg.shape != a_local.shape:
        raise DimensionError(f"amplitude shapes differ: {a_fg.shape} vs {a_local.shape}")
    return omega * a_local + (1.0 - omega) * a_fg


def foreground_style_randomize(img, fg_mask, coarse_spx: LabelMask, cfg: Config, rng: Rng,
                               omega: float | None = None,
                               region: int | None = None) -> np.ndarray:
    """Restyle the foreground box with the amplitude of a random superpixel region.

    ``coarse_spx`` is the superpixel scale with the fewest regions.  ``omega``
    and ``region`` override the random draws (the draws still come from the
    ``"region"`` and ``"omega"`` substreams of ``rng`` otherwise).
    """
    img = as_image(img)
    _, H, W = img.shape
    fg_mask = as_mask(fg_mask, (H, W))
    if coarse_spx.shape != (H, W):
        raise DimensionError(f"superpixel mask {coarse_spx.shape} vs image {(H, W)}")
    if not np.any(fg_mask > 0):
        raise EmptyForegroundError("foreground mask is empty")

    soft = smooth_mask(fg_mask, cfg.K_smooth)
    x0, y0, x1, y1 = bounding_box(soft)
    crop = img[:, y0:y1 + 1, x0:x1 + 1]

    if region is None:
        present = coarse_spx.present()
        region = int(present[rng.spawn("region").integers(len(present))])
    lx0, ly0, lx1, ly1 = bounding_box(coarse_spx.labels == region, tol=0.5)
    local = resize_bilinear(img[:, ly0:ly1 + 1, lx0:lx1 + 1], *crop.shape[1:], clamp=True)

    if omega is None:
        omega = rng.spawn("omega").normal(std=cfg.sigma_f)

    fg_spec = fft2(crop)
    mixed = mix_amplitude(fg_spec.amplitude, fft2(local).amplitude, omega)
    restyled = ifft2(Spectrum(mixed, fg_spec.phase))

    canvas = np.zeros_like(img)
    canvas[:, y0:y1 + 1, x0:x1 + 1] = restyled
    return np.clip((1.0 - soft) * img + soft * canvas, 0.0, 1.0)


def sample_kernel(sigma_g: float, rng: Rng) -> np.ndarray:
    """``(out, in, ky, kx) = (3, 3, 3, 3)`` weights drawn from N(0, sigma_g^2)."""
    return rng.normal((3, 3, 3, 3), std=sigma_g)


def delta_kernel() -> np.ndarray:
    k = np.zeros((3, 3, 3, 3))
    for c in range(3):
        k[c, c, 1, 1] = 1.0
    return k


def random_conv(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """3x3 cross-correlation, stride 1, edge-replicated border, no bias, no clamp."""
    img = np.asarray(img, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape != (3, 3, 3, 3) or img.shape[0] != 3:
        raise DimensionError(f"kernel {kernel.shape} / image {img.shape} mismatch")
    _, H, W = img.shape
    padded = np.pad(img, ((0, 0), (1, 1), (1, 1)), mode="edge")
    out = np.zeros_like(img)
    for ky in range(3):
        for kx in range(3):
            out += np.einsum("oi,ihw->ohw", kernel[:, :, ky, kx],
                             padded[:, ky:ky + H, kx:kx + W])
    return out


def global_style_randomize(img, cfg: Config, rng: Rng, kernel: np.ndarray | None = None,
                           clamp: bool = True) -> np.ndarray:
    """Keep the phase of ``img``, take the amplitude of its random convolution."""
    img = as_image(img)
    if kernel is None:
        kernel = sample_kernel(cfg.sigma_g, rng.spawn("kernel"))
    styled = fft2(random_conv(img, kernel))
    return ifft2(Spectrum(styled.amplitude, fft2(img).phase), clamp=clamp)


def dsr(img, fg_mask, coarse_spx: LabelMask, cfg: Config, rng: Rng,
        omega: float | None = None, region: int | None = None,
        kernel: np.ndarray | None = None) -> np.ndarray:
    """Foreground then global style randomization, each on its own substream."""
    out = foreground_style_randomize(img, fg_mask, coarse_spx, cfg, rng.spawn("fg"),
                                     omega=omega, region=region)
    return global_style_randomize(out, cfg, rng.spawn("global"), kernel=kernel)

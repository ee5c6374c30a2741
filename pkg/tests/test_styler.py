import numpy as np
import pytest

from hsl.core import Config, DimensionError, EmptyForegroundError, LabelMask, Rng
from hsl.styler import (Spectrum, delta_kernel, dsr, fft2, foreground_style_randomize, ifft2,
                        global_style_randomize, mix_amplitude, random_conv, sample_kernel)

CFG = Config()


def dft_matrix(n, sign=-1):
    k = np.arange(n)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / n)


def dft2_direct(x):
    """O(N^2)-per-output DFT, one summation per frequency."""
    h, w = x.shape
    out = np.zeros((h, w), dtype=complex)
    ys, xs = np.mgrid[0:h, 0:w]
    for u in range(h):
        for v in range(w):
            out[u, v] = np.sum(x * np.exp(-2j * np.pi * (u * ys / h + v * xs / w)))
    return out


def idft2_matrix(z):
    h, w = z.shape
    return (dft_matrix(h, +1) @ z @ dft_matrix(w, +1).T) / (h * w)


def conv_loop(img, k):
    _, H, W = img.shape
    out = np.zeros_like(img)
    for o in range(3):
        for y in range(H):
            for x in range(W):
                s = 0.0
                for i in range(3):
                    for ky in range(3):
                        for kx in range(3):
                            yy = min(max(y + ky - 1, 0), H - 1)
                            xx = min(max(x + kx - 1, 0), W - 1)
                            s += k[o, i, ky, kx] * img[i, yy, xx]
                out[o, y, x] = s
    return out


def two_region_image(size=64):
    img = np.zeros((3, size, size))
    img[:, :, : size // 2] = np.array([0.8, 0.2, 0.2])[:, None, None]
    img[:, :, size // 2:] = np.array([0.1, 0.3, 0.9])[:, None, None]
    mask = np.zeros((size, size))
    mask[20:40, 4:24] = 1.0
    # add texture to the right half so the local region has distinct statistics
    yy, xx = np.mgrid[0:size, 0:size]
    img[:, :, size // 2:] += 0.08 * np.sin(xx[None, :, size // 2:] * 1.3)
    labels = (xx >= size // 2).astype(np.int64) + 2 * (yy >= size // 2)
    return np.clip(img, 0, 1), mask, LabelMask(labels, 4)


# --- FFT ----------------------------------------------------------------------

@pytest.mark.parametrize("h,w", [(1, 1), (2, 3), (4, 4), (5, 7), (8, 6), (16, 16)])
def test_fft2_matches_direct_dft(h, w):
    x = Rng(h * 31 + w, "dft").uniform((3, h, w))
    spec = fft2(x)
    for c in range(3):
        z = dft2_direct(x[c])
        assert np.max(np.abs(spec.amplitude[c] * np.exp(1j * spec.phase[c]) - z)) < 1e-9


def test_fft2_constant_and_impulse():
    spec = fft2(np.full((3, 6, 5), 0.4))
    assert spec.amplitude[0, 0, 0] == pytest.approx(0.4 * 30)
    assert np.max(np.delete(spec.amplitude[0].ravel(), 0)) < 1e-12
    assert spec.phase[0, 0, 0] == 0.0
    imp = np.zeros((1, 4, 4))
    imp[0, 0, 0] = 1
    np.testing.assert_allclose(fft2(imp).amplitude, 1.0, atol=1e-15)


def test_ifft2_round_trip_zero_and_scaling():
    x = Rng(1, "rt").uniform((3, 64, 64))
    assert np.max(np.abs(ifft2(fft2(x)) - x)) < 1e-9
    s = fft2(x)
    assert np.array_equal(ifft2(Spectrum(np.zeros_like(s.amplitude), s.phase)), np.zeros_like(x))
    small = Rng(2, "scale").uniform((3, 8, 8)) * 0.4
    sp = fft2(small)
    doubled = ifft2(Spectrum(2 * sp.amplitude, sp.phase), clamp=False)
    oracle = np.stack([idft2_matrix(2 * sp.amplitude[c] * np.exp(1j * sp.phase[c])).real
                       for c in range(3)])
    np.testing.assert_allclose(doubled, oracle, atol=1e-12)
    np.testing.assert_allclose(doubled, 2 * small, atol=1e-12)
    with pytest.raises(DimensionError):
        ifft2(Spectrum(np.zeros((3, 4, 4)), np.zeros((3, 4, 5))))


def test_mix_amplitude():
    a, b = Rng(3).uniform((3, 4, 4)), Rng(4).uniform((3, 4, 4))
    assert np.array_equal(mix_amplitude(a, b, 0.0), a)
    assert np.array_equal(mix_amplitude(a, b, 1.0), b)
    assert mix_amplitude(np.array(2.0), np.array(4.0), 0.5) == 3.0
    with pytest.raises(DimensionError):
        mix_amplitude(a, b[:, :2], 0.5)


# --- foreground style randomization ------------------------------------------

def test_foreground_identity_anchors():
    img, mask, labels = two_region_image()
    out = foreground_style_randomize(img, mask, labels, CFG, Rng(0), omega=0.0)
    assert np.max(np.abs(out - img)) < 1e-6
    whole = LabelMask(np.zeros((64, 64), dtype=np.int64), 1)
    out = foreground_style_randomize(img, np.ones((64, 64)), whole, CFG, Rng(0), omega=1.0)
    assert np.max(np.abs(out - img)) < 1e-6


def test_foreground_outside_smoothed_mask_bit_identical():
    from hsl.core import smooth_mask
    img, mask, labels = two_region_image()
    for s in range(5):
        out = foreground_style_randomize(img, mask, labels, CFG, Rng(s, "fg"))
        outside = smooth_mask(mask, CFG.K_smooth) == 0
        assert np.array_equal(out[:, outside], img[:, outside])


def test_foreground_matches_scripted_oracle():
    img, mask, labels = two_region_image()
    rng = Rng(11, "oracle")
    out = foreground_style_randomize(img, mask, labels, CFG, rng)

    # independent re-run of the five steps
    k = CFG.K_smooth
    r = k // 2
    padded = np.pad(mask, r, mode="edge")
    dil = np.array([[padded[y:y + k, x:x + k].max() for x in range(64)] for y in range(64)])
    padded = np.pad(dil, r, mode="edge")
    soft = np.array([[padded[y:y + k, x:x + k].mean() for x in range(64)] for y in range(64)])
    ys, xs = np.nonzero(soft > 0)
    crop = img[:, ys.min():ys.max() + 1, xs.min():xs.max() + 1]
    present = np.unique(labels.labels)
    region = present[Rng(11, "oracle", "region").integers(len(present))]
    ly, lx = np.nonzero(labels.labels == region)
    local = img[:, ly.min():ly.max() + 1, lx.min():lx.max() + 1]
    from hsl.core import resize_bilinear
    local = resize_bilinear(local, *crop.shape[1:], clamp=True)
    omega = Rng(11, "oracle", "omega").normal(std=CFG.sigma_f)
    zf = np.fft.fft2(crop)
    mixed = omega * np.abs(np.fft.fft2(local)) + (1 - omega) * np.abs(zf)
    restyled = np.clip(np.fft.ifft2(mixed * np.exp(1j * np.angle(zf))).real, 0, 1)
    canvas = np.zeros_like(img)
    canvas[:, ys.min():ys.max() + 1, xs.min():xs.max() + 1] = restyled
    want = np.clip((1 - soft) * img + soft * canvas, 0, 1)
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_foreground_shifts_statistics_toward_local_region():
    img, mask, labels = two_region_image()
    fg = mask > 0
    # region 1 is the textured right half
    out = foreground_style_randomize(img, mask, labels, CFG, Rng(0), omega=0.8, region=1)
    local_mean = img[:, :32, 32:].mean(axis=(1, 2))
    before = np.abs(img[:, fg].mean(axis=1) - local_mean).sum()
    after = np.abs(out[:, fg].mean(axis=1) - local_mean).sum()
    assert after < before
    assert out[:, fg].std(axis=1).mean() > img[:, fg].std(axis=1).mean()


def test_foreground_errors():
    img, mask, labels = two_region_image()
    with pytest.raises(EmptyForegroundError):
        foreground_style_randomize(img, np.zeros((64, 64)), labels, CFG, Rng(0))
    small = LabelMask(np.zeros((32, 32), dtype=np.int64), 1)
    with pytest.raises(DimensionError):
        foreground_style_randomize(img, mask, small, CFG, Rng(0))


# --- random convolution and global style -------------------------------------

def test_random_conv_examples():
    img = Rng(5).uniform((3, 9, 11))
    assert np.array_equal(random_conv(img, delta_kernel()), img)
    assert np.array_equal(random_conv(img, np.zeros((3, 3, 3, 3))), np.zeros_like(img))
    const = np.full((3, 6, 6), 0.2)
    np.testing.assert_allclose(random_conv(const, np.full((3, 3, 3, 3), 1 / 9)), 0.6, atol=1e-15)
    k = sample_kernel(0.3, Rng(6))
    small = Rng(7).uniform((3, 5, 6))
    np.testing.assert_allclose(random_conv(small, k), conv_loop(small, k), atol=1e-13)
    with pytest.raises(DimensionError):
        random_conv(small, np.zeros((3, 3, 3)))


def test_sample_kernel_statistics():
    k = sample_kernel(0.1, Rng(8))
    assert k.shape == (3, 3, 3, 3)
    assert np.array_equal(k, sample_kernel(0.1, Rng(8)))
    assert np.array_equal(sample_kernel(0.0, Rng(8)), np.zeros((3, 3, 3, 3)))


def test_global_identity_and_zero():
    img = Rng(9).uniform((3, 32, 32))
    out = global_style_randomize(img, CFG, Rng(0), kernel=delta_kernel())
    assert np.max(np.abs(out - img)) < 1e-6
    zero = global_style_randomize(img, CFG.replace(sigma_g=0.0), Rng(0))
    assert np.array_equal(zero, np.zeros_like(img))


def test_global_preserves_phase_and_takes_conv_amplitude():
    img = Rng(10).uniform((3, 64, 64))
    rng = Rng(12, "global")
    out = global_style_randomize(img, CFG, rng, clamp=False)
    conv = random_conv(img, sample_kernel(CFG.sigma_g, Rng(12, "global", "kernel")))
    W = dft_matrix(64)
    for c in range(3):
        z_out = W @ out[c] @ W.T
        z_in = W @ img[c] @ W.T
        z_conv = W @ conv[c] @ W.T
        sel = np.abs(z_out) > 1e-9
        dphi = np.angle(z_out[sel] * np.conj(z_in[sel]))
        assert np.max(np.abs(dphi)) < 1e-6
        np.testing.assert_allclose(np.abs(z_out), np.abs(z_conv), atol=1e-6)


def test_dsr_identity_determinism_and_range():
    img, mask, labels = two_region_image()
    out = dsr(img, mask, labels, CFG, Rng(0), omega=0.0, kernel=delta_kernel())
    assert np.max(np.abs(out - img)) < 1e-6
    a = dsr(img, mask, labels, CFG, Rng(3, "dsr"))
    b = dsr(img, mask, labels, CFG, Rng(3, "dsr"))
    assert np.array_equal(a, b)
    small_mask = np.zeros((16, 16))
    small_mask[4:10, 5:12] = 1
    small_labels = LabelMask((np.arange(16)[None, :] // 8 + 2 * (np.arange(16)[:, None] // 8)), 4)
    for s in range(1000):
        r = Rng(s, "fuzz")
        x = r.spawn("img").uniform((3, 16, 16))
        y = dsr(x, small_mask, small_labels, CFG, r)
        assert y.min() >= 0.0 and y.max() <= 1.0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hsl.core import Config, DimensionError, FormatError, LabelMask, ParameterError, Rng
from hsl.core.ops import resize_bilinear
from hsl.hsm import (AttentionLayer, HsmWeights, MsaWeights, ProjectionWeights, RegionPrototypes,
                     attention_layer, fuse_prototypes, hsm_enhance, msa_enhance, project_low,
                     region_prototypes, rmap)
from hsl.superpix import SuperpixelStack, region_binary_masks


def random_partition(rng, n, h, w):
    labels = rng.integers(n, (h, w))
    return LabelMask(labels, n), region_binary_masks(LabelMask(labels, n))


def region_loop(f, labels, n):
    C = f.shape[0]
    sums = np.zeros((n, C))
    counts = np.zeros(n)
    for y in range(f.shape[1]):
        for x in range(f.shape[2]):
            j = labels[y, x]
            sums[j] += f[:, y, x]
            counts[j] += 1
    out = np.zeros((n, C))
    for j in range(n):
        if counts[j]:
            out[j] = sums[j] / counts[j]
    return out, counts == 0


def rmap_loop(vectors, labels):
    h, w = labels.shape
    out = np.zeros((vectors.shape[1], h, w))
    for y in range(h):
        for x in range(w):
            out[:, y, x] = vectors[labels[y, x]]
    return out


def mha_loop(x, layer, heads):
    n, c = x.shape
    d = c // heads
    q, k, v = x @ layer.wq.T, x @ layer.wk.T, x @ layer.wv.T
    ctx = np.zeros((n, c))
    for h in range(heads):
        sl = slice(h * d, (h + 1) * d)
        for i in range(n):
            scores = np.array([q[i, sl] @ k[j, sl] / np.sqrt(d) for j in range(n)])
            a = np.exp(scores - scores.max())
            a /= a.sum()
            ctx[i, sl] = sum(a[j] * v[j, sl] for j in range(n))
    return x + ctx @ layer.wo.T


def random_msa(rng, c, heads=4, scale=0.3):
    layers = tuple(AttentionLayer(*(rng.spawn(i, k).normal((c, c), scale) for k in "qkvo"))
                   for i in range(2))
    return MsaWeights(layers, heads)


# --- projection ----------------------------------------------------------------

def test_project_low_examples():
    f = Rng(0).normal((4, 8, 8))
    eye = ProjectionWeights(np.eye(4), np.zeros(4))
    np.testing.assert_allclose(project_low(f, eye, (8, 8)), f, atol=1e-12)
    assert np.array_equal(project_low(f, ProjectionWeights.zeros(6, 4), (4, 4)), np.zeros((6, 4, 4)))
    w = ProjectionWeights(Rng(1).normal((6, 4)), Rng(2).normal(6))
    mapped = np.einsum("oc,chw->ohw", w.W, f) + w.bias[:, None, None]
    np.testing.assert_allclose(project_low(f, w, (4, 4)), resize_bilinear(mapped, 4, 4), atol=1e-12)
    with pytest.raises(DimensionError):
        project_low(np.zeros((3, 4, 4)), w, (2, 2))


# --- MAP / RMAP ----------------------------------------------------------------

def test_region_prototypes_examples():
    f = Rng(3).normal((5, 6, 7))
    p = region_prototypes(f, [np.ones((6, 7))])
    np.testing.assert_allclose(p.vectors[0], f.mean(axis=(1, 2)), atol=1e-14)
    labels = np.zeros((6, 7), dtype=np.int64)
    labels[:, 4:] = 1
    consts = np.array([[1.0, 2, 3, 4, 5], [-1, 0, 7, 2, 2]])
    pc = region_prototypes(rmap_loop(consts, labels), region_binary_masks(LabelMask(labels, 2)))
    np.testing.assert_allclose(pc.vectors, consts, atol=1e-15)


def test_region_prototypes_and_rmap_match_loops():
    rng = Rng(4, "mapr")
    for t in range(40):
        r = rng.spawn(t)
        n = 1 + r.spawn("n").integers(12)
        h, w = 1 + r.spawn("h").integers(16), 1 + r.spawn("w").integers(16)
        lab, masks = random_partition(r.spawn("lab"), n, h, w)
        f = r.spawn("f").normal((3, h, w))
        p = region_prototypes(f, masks)
        want, empty = region_loop(f, lab.labels, n)
        np.testing.assert_allclose(p.vectors, want, rtol=1e-12, atol=1e-14)
        assert np.array_equal(p.empty_flags, empty)
        np.testing.assert_allclose(rmap(p, masks), rmap_loop(p.vectors, lab.labels), atol=1e-14)


def test_rmap_examples_and_idempotence():
    labels = np.zeros((4, 4), dtype=np.int64)
    labels[:, 2:] = 1
    masks = region_binary_masks(LabelMask(labels, 2))
    p = RegionPrototypes(0, np.array([[1.0], [2.0]]), np.zeros(2, dtype=bool))
    out = rmap(p, masks)
    assert np.array_equal(out[0], np.where(labels == 0, 1.0, 2.0))
    f = Rng(5).normal((3, 4, 4))
    once = rmap(region_prototypes(f, masks), masks)
    twice = rmap(region_prototypes(once, masks), masks)
    assert np.array_equal(once, twice)
    with pytest.raises(DimensionError):
        rmap(p, masks[:1])


# --- attention ------------------------------------------------------------------

def test_msa_zero_weights_identity():
    x = Rng(6).normal((9, 8))
    p = RegionPrototypes(0, x, np.zeros(9, dtype=bool))
    assert np.array_equal(msa_enhance(p, MsaWeights.zeros(8, 4)).vectors, x)


def test_single_token_attention_closed_form():
    layer = random_msa(Rng(7), 8).layers[0]
    x = Rng(8).normal((1, 8))
    np.testing.assert_allclose(attention_layer(x, layer, 4), x + (x @ layer.wv.T) @ layer.wo.T,
                               atol=1e-14)


def test_attention_matches_loop_oracle():
    w = random_msa(Rng(9), 8)
    x = Rng(10).normal((6, 8))
    for layer in w.layers:
        np.testing.assert_allclose(attention_layer(x, layer, 4), mha_loop(x, layer, 4), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_msa_permutation_equivariant(seed):
    r = Rng(seed, "perm")
    w = random_msa(r.spawn("w"), 8)
    x = r.spawn("x").normal((7, 8))
    perm = np.argsort(r.spawn("p").uniform(7))
    p = RegionPrototypes(0, x, np.zeros(7, dtype=bool))
    out = msa_enhance(p, w).vectors
    out_perm = msa_enhance(p.with_vectors(x[perm]), w).vectors
    np.testing.assert_allclose(out_perm, out[perm], atol=1e-12)


def test_msa_errors():
    z = np.zeros((6, 6))
    with pytest.raises(ParameterError):
        MsaWeights((AttentionLayer(z, z, z, z),), heads=4)
    with pytest.raises(ParameterError):
        msa_enhance(RegionPrototypes(0, np.zeros((0, 8)), np.zeros(0, dtype=bool)),
                    MsaWeights.zeros(8))


# --- fusion and enhancement -----------------------------------------------------

def test_fuse_prototypes_examples():
    flags = np.zeros(2, dtype=bool)
    lo = RegionPrototypes(0, np.ones((2, 3)), flags)
    hi = RegionPrototypes(0, np.zeros((2, 3)), flags)
    assert np.array_equal(fuse_prototypes(lo, hi, 0.0).vectors, hi.vectors)
    assert np.array_equal(fuse_prototypes(lo, hi, 1.0).vectors, lo.vectors)
    np.testing.assert_allclose(fuse_prototypes(lo, hi, 0.2).vectors, 0.2)
    with pytest.raises(DimensionError):
        fuse_prototypes(lo, RegionPrototypes(0, np.zeros((3, 3)), np.zeros(3, bool)), 0.5)


def _stack(labels_list):
    masks = tuple(LabelMask(lab, int(lab.max()) + 1) for lab in labels_list)
    return SuperpixelStack(masks, tuple(m.region_count for m in masks))


def test_hsm_enhance_closed_forms():
    f_h = Rng(11).normal((8, 4, 4))
    f_l = Rng(12).normal((4, 16, 16))
    whole = _stack([np.zeros((64, 64), dtype=np.int64)])
    cfg = Config().replace(L=1, superpixels_per_scale=(1,), alpha=0.0)
    out = hsm_enhance(f_l, f_h, whole, HsmWeights.zeros(4, 8), cfg)
    np.testing.assert_allclose(out, f_h + f_h.mean(axis=(1, 2))[:, None, None], atol=1e-14)
    zero = hsm_enhance(np.zeros_like(f_l), np.zeros_like(f_h), whole,
                       HsmWeights.init(4, 8, 4, Rng(0)), cfg)
    assert np.array_equal(zero, np.zeros_like(f_h))


def test_hsm_enhance_zero_weights_composed_oracle():
    rng = Rng(13, "hsm")
    f_h = rng.spawn("h").normal((8, 4, 4))
    f_l = rng.spawn("l").normal((4, 16, 16))
    labs = [rng.spawn("lab", i).integers(n, (64, 64)) for i, n in enumerate((4, 9))]
    stack = SuperpixelStack(tuple(LabelMask(lab, n) for lab, n in zip(labs, (4, 9))), (4, 9))
    cfg = Config().replace(L=2, superpixels_per_scale=(4, 9), alpha=0.3)
    out = hsm_enhance(f_l, f_h, stack, HsmWeights.zeros(4, 8), cfg)
    want = f_h.copy()
    for lab, n in zip(labs, (4, 9)):
        idx = ((np.arange(4) + 0.5) * 64 / 4).astype(int)
        small = lab[np.ix_(idx, idx)]
        vecs, _ = region_loop(f_h, small, n)
        want += 0.7 * rmap_loop(vecs, small)
    np.testing.assert_allclose(out, want, atol=1e-13)


def test_hsm_high_pathway_linear_in_f_h():
    rng = Rng(14)
    f_h = rng.spawn("h").normal((8, 4, 4))
    f_l = rng.spawn("l").normal((4, 16, 16))
    stack = SuperpixelStack((LabelMask(rng.spawn("lab").integers(4, (64, 64)), 4),), (4,))
    cfg = Config().replace(L=1, superpixels_per_scale=(4,), alpha=0.4)
    w = HsmWeights.zeros(4, 8)
    a = hsm_enhance(f_l, f_h, stack, w, cfg)
    b = hsm_enhance(f_l, 2 * f_h, stack, w, cfg)
    np.testing.assert_allclose(b, 2 * a, atol=1e-13)


def test_hsm_empty_regions_contribute_nothing():
    f_h = Rng(15).normal((8, 4, 4))
    # regions 1..3 occupy image pixels that nearest sampling never hits
    lab = np.zeros((64, 64), dtype=np.int64)
    lab[0, 0], lab[0, 1], lab[1, 0] = 1, 2, 3
    stack = SuperpixelStack((LabelMask(lab, 4),), (4,))
    cfg = Config().replace(L=1, superpixels_per_scale=(4,), alpha=0.0)
    out = hsm_enhance(np.zeros((4, 16, 16)), f_h, stack, HsmWeights.zeros(4, 8), cfg)
    np.testing.assert_allclose(out, f_h + f_h.mean(axis=(1, 2))[:, None, None], atol=1e-14)


def test_hsm_shape_and_scale_count():
    cfg = Config()
    img_stack = SuperpixelStack(tuple(LabelMask(np.zeros((64, 64), dtype=np.int64), n)
                                      for n in cfg.superpixels_per_scale), cfg.superpixels_per_scale)
    w = HsmWeights.init(16, 64, 4, Rng(0))
    out = hsm_enhance(Rng(1).normal((16, 16, 16)), Rng(2).normal((64, 4, 4)), img_stack, w, cfg)
    assert out.shape == (64, 4, 4)
    with pytest.raises(DimensionError):
        hsm_enhance(np.zeros((16, 16, 16)), np.zeros((64, 4, 4)),
                    SuperpixelStack(img_stack.masks[:2], (25, 100)), w, cfg)


def test_weights_flatten_round_trip():
    w = HsmWeights.init(16, 64, 4, Rng(3, "w"))
    flat = w.flatten()
    assert flat.size == 64 * 16 + 64 + 2 * 4 * 64 * 64
    back = HsmWeights.unflatten(flat, 16, 64, 4)
    assert np.array_equal(back.flatten(), flat)
    assert np.array_equal(HsmWeights.init(16, 64, 4, Rng(3, "w")).flatten(), flat)
    assert abs(flat[: 64 * 16].std() - 0.02) < 0.002
    with pytest.raises(FormatError):
        HsmWeights.unflatten(flat[:-1], 16, 64, 4)

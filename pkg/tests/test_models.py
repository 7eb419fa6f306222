import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nssfkit import autodiff as ad
from nssfkit.beamform import apply_dsb, dsb_weights
from nssfkit.errors import ShapeError
from nssfkit.models import (COSPA, COSPA_PRESETS, JNF, JNF_PRESETS, apply_mask, apply_masks, build_model,
                            compress_mask, cospa_forward, decompress_mask, istft_tensor, jnf_forward, load_model)
from nssfkit.scene_sim import ArrayGeometry
from nssfkit.spectral import SpectrogramStack, StftConfig, analyze, synthesize


def random_spec(rng, M, F, T):
    return rng.normal(size=(M, F, T)) + 1j * rng.normal(size=(M, F, T))


# --------------------------------------------------------------------------
# FT-JNF


def test_jnf_shapes_tiny(rng):
    m = JNF(JNF_PRESETS["tiny"])
    X = random_spec(rng, 3, 65, 7)
    feats = m.features(X)
    assert m.mask(X).shape == (65, 7)
    assert feats["h0"].shape == (7, 2 * 65 * 3) == (7, 390)
    assert feats["h1"].shape == (7, 2 * 65 * 16)
    assert feats["h2"].shape == (7, 2 * 65 * 16)


def test_jnf_h1_width_full_preset(rng):
    m = JNF(JNF_PRESETS["full"])
    feats = m.features(random_spec(rng, 3, 257, 2))
    assert feats["h1"].shape[1] == 2 * 257 * 256 == 131584
    assert feats["h2"].shape[1] == 2 * 257 * 128


def test_jnf_shape_error(rng):
    with pytest.raises(ShapeError):
        JNF().mask(random_spec(rng, 2, 65, 4))


def test_jnf_not_permutation_invariant(rng):
    m = JNF(seed=1)
    X = random_spec(rng, 3, 65, 5)
    assert not np.allclose(m.mask(X), m.mask(X[[1, 0, 2]]))


def test_jnf_deterministic(rng):
    X = random_spec(rng, 3, 65, 5)
    assert np.array_equal(JNF(seed=2).mask(X), JNF(seed=2).mask(X))


def test_jnf_frames_independent_in_first_layer(rng):
    m = JNF(seed=3)
    X = random_spec(rng, 3, 65, 6)
    Y = X.copy()
    Y[:, :, 2] *= -1.7
    with ad.no_grad():
        _, a = jnf_forward(X, m.params, m.config)
        _, b = jnf_forward(Y, m.params, m.config)
    changed = np.any(a["h1"].data != b["h1"].data, axis=(0, 2))
    assert changed.tolist() == [t == 2 for t in range(6)]


def test_jnf_bins_independent_in_second_layer(rng):
    m = JNF(seed=4)
    h1 = rng.normal(size=(65, 6, 32))
    h1b = h1.copy()
    h1b[10] += 0.5
    sub = {k[len("blstm2.fwd."):]: v for k, v in m.params.items() if k.startswith("blstm2.fwd.")}
    subb = {k[len("blstm2.bwd."):]: v for k, v in m.params.items() if k.startswith("blstm2.bwd.")}
    with ad.no_grad():
        a = ad.bilstm_layer(h1.transpose(1, 0, 2), sub, subb).data
        b = ad.bilstm_layer(h1b.transpose(1, 0, 2), sub, subb).data
    changed = np.any(a != b, axis=(0, 2))
    assert changed.tolist() == [f == 10 for f in range(65)]


def test_decompress_examples():
    assert decompress_mask(0.0) == 0.0
    assert decompress_mask(0.5) == pytest.approx(10 * math.log(3), abs=1e-9)
    assert np.isfinite(decompress_mask(np.array([1.0, -1.0, 3.0]))).all()
    t = decompress_mask(ad.Tensor(np.array([0.5])))
    assert t.data[0] == pytest.approx(10 * math.log(3), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.99, 0.99))
def test_compress_inverts_decompress(o):
    assert compress_mask(decompress_mask(o)) == pytest.approx(o, abs=1e-9)


def test_apply_mask_cases(rng):
    X = random_spec(rng, 3, 65, 4)
    assert np.array_equal(apply_mask(X, np.ones((65, 4))), X[0])
    assert np.all(apply_mask(X, np.zeros((65, 4))) == 0)
    rot = apply_mask(X, np.full((65, 4), 1j))
    assert np.allclose(np.abs(rot), np.abs(X[0]))
    assert np.allclose(rot, X[0] * 1j)
    assert np.array_equal(apply_mask(X, np.ones((65, 4)), ref_channel=2), X[2])
    with pytest.raises(ShapeError):
        apply_mask(X, np.ones((64, 4)))


def test_istft_tensor_matches_synthesize(rng):
    cfg = StftConfig(128, 64)
    S = analyze(rng.normal(size=2000), cfg)
    pair = (ad.Tensor(S.data[0].real), ad.Tensor(S.data[0].imag))
    ref = synthesize(S)[0]
    assert np.allclose(istft_tensor(pair, cfg).data, ref, atol=1e-12)


# --------------------------------------------------------------------------
# COSPA


def test_cospa_masks_and_features(rng):
    m = COSPA(COSPA_PRESETS["tiny"])
    X = random_spec(rng, 3, 129, 6)
    assert m.masks(X).shape == (3, 129, 6)
    f = m.features(X)
    assert f["h_in"].shape == (6, 32) and f["h_out"].shape == (6, 32)


def test_cospa_full_width(rng):
    cfg = COSPA_PRESETS["full"]
    m = COSPA(cfg)
    with ad.no_grad():
        _, hidden = cospa_forward(random_spec(rng, 3, 513, 2), m.params, cfg)
    assert hidden["h_in"][0].shape == (2, 128)


def test_cospa_channels_couple(rng):
    m = COSPA(seed=5)
    X = random_spec(rng, 3, 129, 4)
    Y = X.copy()
    Y[1] = 0
    a, b = m.masks(X), m.masks(Y)
    for ch in range(3):
        assert not np.allclose(a[ch], b[ch])


def test_cospa_identity_recurrence_is_frame_local(rng):
    m = build_model("cospa", recurrence="identity", seed=6)
    X = random_spec(rng, 3, 129, 6)
    Y = X.copy()
    Y[:, :, 3] *= 2.5
    changed = np.any(m.masks(X) != m.masks(Y), axis=(0, 1))
    assert changed.tolist() == [t == 3 for t in range(6)]
    gru = COSPA(seed=6)
    assert np.any(gru.masks(X)[:, :, 5] != gru.masks(Y)[:, :, 5])


def test_identity_needs_equal_widths():
    with pytest.raises(ValueError):
        build_model("cospa", recurrence="identity", u_out=8)


def test_apply_masks_identities(rng):
    X = random_spec(rng, 3, 129, 4)
    assert np.allclose(apply_masks(X, np.ones_like(X)), X.sum(0), atol=1e-12)
    one_hot = np.zeros_like(X)
    one_hot[0] = 1
    assert np.array_equal(apply_masks(X, one_hot), X[0])
    with pytest.raises(ShapeError):
        apply_masks(X, np.ones((2, 129, 4)))


def test_dsb_as_masks(rng):
    cfg = StftConfig(256, 128)
    X = SpectrogramStack(random_spec(rng, 3, 129, 5), cfg, 16000)
    w = dsb_weights(63.0, ArrayGeometry((1.0, 1.0, 1.0)), cfg)
    masks = np.repeat(w.weights[:, :, None], 5, axis=2)
    assert np.max(np.abs(apply_masks(X, masks) - apply_dsb(X, w))) < 1e-12


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=5), st.complex_numbers(max_magnitude=5))
def test_apply_masks_linear(a, b):
    r = np.random.default_rng(0)
    X, Y, Mk = (random_spec(r, 3, 9, 4) for _ in range(3))
    assert np.allclose(apply_masks(a * X + b * Y, Mk), a * apply_masks(X, Mk) + b * apply_masks(Y, Mk))


def test_tensor_masks_match_array(rng):
    m = COSPA(seed=7)
    X = random_spec(rng, 3, 129, 3)
    re, im = m.estimate(X)
    assert np.allclose(re.data + 1j * im.data, apply_masks(X, m.masks(X)))


# --------------------------------------------------------------------------
# loading


@pytest.mark.parametrize("kind", ["jnf", "cospa"])
def test_load_model_roundtrip(tmp_path, kind, rng):
    m = build_model(kind, seed=8)
    ad.save_checkpoint(tmp_path / "m.ckpt", m.params, m.manifest())
    back = load_model(tmp_path / "m.ckpt")
    assert type(back) is type(m) and back.config == m.config
    F = m.config.n_bins
    X = random_spec(rng, 3, F, 3)
    for k, v in m.features(X).items():
        assert np.array_equal(v, back.features(X)[k])


def test_load_model_unknown_kind(tmp_path):
    ad.save_checkpoint(tmp_path / "x", {"a": np.zeros(1)}, {"model_kind": "mlp"})
    with pytest.raises(ValueError):
        load_model(tmp_path / "x")
    with pytest.raises(ValueError):
        build_model("mlp")

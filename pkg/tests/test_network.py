"""Assembled enhancer: geometry, identity, determinism, parameter counts."""

import numpy as np
import pytest

from promptenh import ops
from promptenh.config import EnhancerConfig
from promptenh.layers import Conv2d, Initializer
from promptenh.network import Enhancer, RfaConv, count_params
from promptenh.params import ParamStore
from promptenh.tensor import ConfigError, Tensor

from oracles import naive_conv2d


def small_cfg(**kw):
    base = dict(base_channels=4, prompt_h=2, prompt_w=2, prompt_channels=32,
                splits=2, reduction=4)
    base.update(kw)
    return EnhancerConfig(**base)


def rand(shape, seed=0, scale=1.0):
    return np.random.default_rng(seed).standard_normal(shape) * scale


# -- receptive-field attention conv ------------------------------------------------

def test_rfa_disabled_is_plain_conv():
    store, init = ParamStore(), Initializer(seed=1)
    layer = RfaConv(store, init, "rfa", 3, 5, 3, attention=False)
    x = rand((1, 3, 6, 6), 2)
    want = naive_conv2d(x, store["rfa.conv.w"].data, store["rfa.conv.b"].data, pad=1)
    np.testing.assert_allclose(layer(Tensor(x)).data, want, atol=1e-12)


def test_rfa_window_weights_sum_to_one():
    store, init = ParamStore(), Initializer(seed=3)
    layer = RfaConv(store, init, "rfa", 2, 4, 3)
    w = layer.window_weights(Tensor(rand((1, 2, 5, 5), 4))).data
    assert w.shape == (1, 2, 9, 5, 5)
    np.testing.assert_allclose(w.sum(axis=2), 1.0, atol=1e-12)
    assert (w >= 0).all()


def test_rfa_uniform_weights_reduce_to_plain_conv():
    # zeroed logits give uniform window weights 1/9; after the mean-1
    # rescale the layer equals a plain 3x3 conv whose kernel is the
    # aggregation weight reshaped to (cout, cin, 3, 3)
    store, init = ParamStore(), Initializer(seed=5)
    layer = RfaConv(store, init, "rfa", 2, 3, 3)
    store["rfa.logits.w"].data[...] = 0.0
    store["rfa.logits.b"].data[...] = 0.0
    x = rand((1, 2, 4, 4), 6)
    kernel = store["rfa.aggregate.w"].data.reshape(3, 2, 3, 3)
    want = naive_conv2d(x, kernel, store["rfa.aggregate.b"].data, pad=1)
    np.testing.assert_allclose(layer(Tensor(x)).data, want, atol=1e-12)


def test_rfa_rejects_even_kernel():
    with pytest.raises(ConfigError):
        RfaConv(ParamStore(), Initializer(seed=0), "rfa", 2, 2, k=4)


# -- enhancer geometry ------------------------------------------------------------

def test_feature_pyramid_shapes_follow_decoder_schedule():
    model = Enhancer(small_cfg(), seed=0)
    x = Tensor(rand((1, 3, 32, 32), 7, 0.1) + 0.5)
    correction, feats = model.forward_features(x)
    c = 4
    assert correction.shape == (1, 3, 32, 32)
    assert feats[3].shape == (1, 8 * c, 4, 4)    # latent, H/8
    assert feats[2].shape == (1, 4 * c, 8, 8)    # H/4
    assert feats[1].shape == (1, 2 * c, 16, 16)  # H/2


def test_forward_features_requires_multiple_of_8():
    model = Enhancer(small_cfg(), seed=0)
    with pytest.raises(ConfigError):
        model.forward_features(Tensor(np.zeros((1, 3, 20, 20))))


def test_enhance_pads_and_crops_odd_sizes():
    model = Enhancer(small_cfg(), seed=0)
    img = Tensor(np.clip(rand((1, 3, 20, 28), 8, 0.2) + 0.5, 0, 1))
    out, _ = model.enhance(img)
    assert out.shape == (1, 3, 20, 28)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


def test_residual_identity_with_zeroed_final_projection():
    model = Enhancer(small_cfg(final_zero_init=True), seed=0)
    img = Tensor(np.clip(rand((2, 3, 16, 16), 9, 0.2) + 0.5, 0, 1))
    out, _ = model.enhance(img)
    np.testing.assert_array_equal(out.data, img.data)


def test_default_init_is_near_but_not_exactly_identity():
    model = Enhancer(small_cfg(), seed=0)
    img = Tensor(np.clip(rand((1, 3, 16, 16), 10, 0.2) + 0.5, 0.05, 0.95))
    out, _ = model.enhance(img)
    diff = np.abs(out.data - img.data)
    assert diff.max() > 0.0


def test_enhance_output_clamped():
    model = Enhancer(small_cfg(final_init_scale=1.0), seed=0)
    img = Tensor(np.clip(rand((1, 3, 16, 16), 11, 0.3) + 0.5, 0, 1))
    out, _ = model.enhance(img)
    assert out.data.min() >= 0.0 and out.data.max() <= 1.0


# -- configuration variants --------------------------------------------------------

def test_prompt_mode_none_has_no_prompt_params():
    model = Enhancer(small_cfg(prompt_mode="none"), seed=0)
    assert not any(n.startswith(("cgm.", "cpb.", "spb.")) for n in model.store.names())


def test_independent_prompt_mode_runs_and_registers_levels():
    model = Enhancer(small_cfg(prompt_mode="independent"), seed=0)
    assert {"cgm.p3", "cgm.p2", "cgm.p1"} <= set(model.store.names())
    out, _ = model.enhance(Tensor(np.full((1, 3, 16, 16), 0.5)))
    assert out.shape == (1, 3, 16, 16)


def test_spb_block_type_swaps_blocks():
    model = Enhancer(small_cfg(block_type="spb"), seed=0)
    names = set(model.store.names())
    assert any(n.startswith("spb.L1.") for n in names)
    assert not any(n.startswith("cpb.") for n in names)


def test_channel_adapters_appear_only_on_mismatch():
    matched = Enhancer(small_cfg(), seed=0)  # prompt C = 8 * base = 32
    assert not any(n.startswith("cgm.adapter") for n in matched.store.names())
    mismatched = Enhancer(small_cfg(prompt_channels=16), seed=0)
    assert any(n.startswith("cgm.adapter") for n in mismatched.store.names())
    out, _ = mismatched.enhance(Tensor(np.full((1, 3, 16, 16), 0.5)))
    assert out.shape == (1, 3, 16, 16)


def test_rfa_flag_changes_parameterization():
    with_rfa = Enhancer(small_cfg(), seed=0)
    without = Enhancer(small_cfg(rfa_enabled=False), seed=0)
    assert "net.embed.logits.w" in with_rfa.store.names()
    assert "net.embed.conv.w" in without.store.names()


def test_f32_mode():
    model = Enhancer(small_cfg(elem_type="f32"), seed=0)
    out, _ = model.enhance(Tensor(np.full((1, 3, 16, 16), 0.5, dtype=np.float32)))
    assert out.data.dtype == np.float32


# -- determinism and counting --------------------------------------------------------

def test_same_seed_same_params_and_output():
    a = Enhancer(small_cfg(), seed=4)
    b = Enhancer(small_cfg(), seed=4)
    for name, t in a.store.items():
        np.testing.assert_array_equal(t.data, b.store[name].data)
    img = Tensor(np.clip(rand((1, 3, 16, 16), 12, 0.2) + 0.5, 0, 1))
    np.testing.assert_array_equal(a.enhance(img)[0].data, b.enhance(img)[0].data)


def test_different_seed_different_params():
    a = Enhancer(small_cfg(), seed=0)
    b = Enhancer(small_cfg(), seed=1)
    assert not np.array_equal(a.store["net.embed.logits.w"].data,
                              b.store["net.embed.logits.w"].data)


def test_count_params_matches_store_and_scales_with_width():
    cfg = small_cfg()
    assert count_params(cfg) == Enhancer(cfg, seed=0).store.num_scalars()
    assert count_params(small_cfg(base_channels=8, prompt_channels=64)) \
        > 2 * count_params(cfg)


def test_initial_prompt_contributes_its_full_size():
    model = Enhancer(small_cfg(), seed=0)
    assert model.store["cgm.p3"].data.size == 32 * 2 * 2


def test_config_validation_rejected_at_construction():
    with pytest.raises(ConfigError):
        Enhancer(small_cfg(levels=3), seed=0)
    with pytest.raises(ConfigError):
        Enhancer(small_cfg(prompt_channels=30), seed=0)

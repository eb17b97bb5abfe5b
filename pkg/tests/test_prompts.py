"""Prompt pyramid shape law and generation modes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptenh.layers import Initializer
from promptenh.params import ParamStore
from promptenh.prompts import PromptGenerator, pyramid_shapes
from promptenh.tensor import ConfigError

from oracles import naive_conv_transpose2d


def make_gen(hat_h=4, hat_w=4, hat_c=16, mode="cot", seed=0):
    store = ParamStore()
    gen = PromptGenerator(store, Initializer(seed=seed), hat_h, hat_w, hat_c,
                          mode=mode)
    return gen, store


def test_shape_law_default_sizes():
    shapes = pyramid_shapes(32, 32, 128)
    assert shapes[3] == (1, 128, 32, 32)
    assert shapes[2] == (1, 64, 64, 64)
    assert shapes[1] == (1, 32, 128, 128)


@given(st.integers(1, 4), st.integers(1, 4), st.sampled_from([4, 8, 16, 32]))
@settings(max_examples=20, deadline=None)
def test_shape_law_halves_channels_doubles_space(h, w, c):
    shapes = pyramid_shapes(h, w, c)
    for i in (3, 2):
        _, ci, hi, wi = shapes[i]
        _, cn, hn, wn = shapes[i - 1]
        assert (cn, hn, wn) == (ci // 2, hi * 2, wi * 2)


def test_shape_law_rejects_indivisible_channels():
    with pytest.raises(ConfigError):
        pyramid_shapes(4, 4, 6)


def test_generated_pyramid_has_lawful_shapes():
    gen, _ = make_gen(hat_h=3, hat_w=5, hat_c=8)
    pyr = gen()
    assert pyr.p3.shape == (1, 8, 3, 5)
    assert pyr.p2.shape == (1, 4, 6, 10)
    assert pyr.p1.shape == (1, 2, 12, 20)


def test_chained_mode_matches_transposed_conv_oracle():
    gen, store = make_gen(hat_h=2, hat_w=2, hat_c=8, seed=3)
    pyr = gen()
    p3 = store["cgm.p3"].data
    w2, b2 = store["cgm.tc2.w"].data, store["cgm.tc2.b"].data
    raw2 = naive_conv_transpose2d(p3, w2, b2, stride=2, pad=1, output_padding=1)
    want2 = raw2 * np.clip(raw2 + 3, 0, 6) / 6  # hardswish
    np.testing.assert_allclose(pyr.p2.data, want2, atol=1e-12)
    w1, b1 = store["cgm.tc1.w"].data, store["cgm.tc1.b"].data
    raw1 = naive_conv_transpose2d(want2, w1, b1, stride=2, pad=1, output_padding=1)
    np.testing.assert_allclose(pyr.p1.data, raw1 * np.clip(raw1 + 3, 0, 6) / 6,
                               atol=1e-12)


def test_zero_initial_prompt_propagates_zero():
    gen, store = make_gen()
    store["cgm.p3"].data[...] = 0.0
    pyr = gen()
    # biases start at zero, hardswish(0) = 0, so the whole pyramid is zero
    assert not pyr.p2.data.any()
    assert not pyr.p1.data.any()


def test_chained_levels_depend_on_initial_prompt():
    gen, store = make_gen()
    pyr = gen()
    (pyr.p1.sum() + pyr.p2.sum()).backward()
    assert np.abs(store["cgm.p3"].grad).max() > 0


def test_independent_levels_do_not_depend_on_initial_prompt():
    gen, store = make_gen(mode="independent")
    pyr = gen()
    store.zero_grad()
    (pyr.p1.sum() + pyr.p2.sum()).backward()
    g = store["cgm.p3"].grad
    assert g is None or not np.abs(g).any()
    assert np.abs(store["cgm.p1"].grad).max() > 0


def test_independent_mode_registers_three_prompts():
    _, store = make_gen(mode="independent")
    assert {"cgm.p3", "cgm.p2", "cgm.p1"} <= set(store.names())


def test_unknown_mode_rejected():
    with pytest.raises(ConfigError):
        make_gen(mode="learned")


def test_initial_prompt_statistics():
    _, store = make_gen(hat_c=32, seed=1)
    p3 = store["cgm.p3"].data
    assert abs(p3.std() - 0.02) < 0.005
    assert abs(p3.mean()) < 0.005

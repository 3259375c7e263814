import numpy as np
import pytest

from eegconv.exceptions import ShapeError
from eegconv.models import (INPUT_KINDS, MODEL_NAMES, PUBLISHED_PARAMETER_COUNTS, build,
                            flatten_width, make_layers, model_spec, parameter_count, shape_trace)
from eegconv.nn import Conv2D, Linear, gradient_check

FLATTEN = {"r_scnn": 1900, "s_scnn": 1400, "s_vgg": 576, "r_vgg": 6144}


def _count_by_hand(name):
    """Independent recount straight from the layer hyperparameters."""
    total = 0
    for layer in make_layers(model_spec(name)):
        if isinstance(layer, Conv2D):
            kh, kw = layer.kernel
            total += kh * kw * layer.in_channels * layer.filters + layer.filters
        elif isinstance(layer, Linear):
            total += layer.in_features * layer.units + layer.units
    return total


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_parameter_counts_exact(name):
    assert parameter_count(model_spec(name)) == PUBLISHED_PARAMETER_COUNTS[name]
    assert _count_by_hand(name) == PUBLISHED_PARAMETER_COUNTS[name]


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_flatten_widths(name):
    assert flatten_width(model_spec(name)) == FLATTEN[name]


def test_r_scnn_trace():
    spatial = [s[1:] for n, s in shape_trace(model_spec("r_scnn"))
               if n.startswith(("conv", "pool"))]
    assert spatial == [(22, 254), (11, 127), (9, 125), (4, 62), (3, 60), (1, 30),
                       (1, 24), (1, 23), (1, 21), (1, 19)]


def test_s_scnn_padded_tail():
    trace = dict(shape_trace(model_spec("s_scnn")))
    assert [trace[k][1:] for k in ("conv4", "pool4", "conv5", "conv6")] == \
        [(3, 3), (3, 2), (5, 2), (7, 2)]


def test_square_pool4_does_not_fit_r_scnn():
    spec = model_spec("r_scnn", pool4=((2, 2), (2, 2)))
    with pytest.raises(ShapeError, match="pool4"):
        shape_trace(spec)


def test_component_counts():
    convs = [l for l in make_layers(model_spec("r_scnn")) if isinstance(l, Conv2D)]
    assert sum(l.n_params() for l in convs) == 1_021_900
    assert Linear(1900, 6144).n_params() == 11_679_744


def test_unknown_model():
    with pytest.raises(ValueError):
        model_spec("resnet")


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_width_keeps_topology(name):
    full = [n for n, _ in shape_trace(model_spec(name))]
    small = [n for n, _ in shape_trace(model_spec(name, width=0.125))]
    assert full == small
    assert parameter_count(model_spec(name, 0.125)) < PUBLISHED_PARAMETER_COUNTS[name] / 20


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_small_model_gradients(name, rng):
    net = build(name, width=0.125, dtype=np.float64, init="glorot")
    x = rng.standard_normal((2,) + net.input_shape)
    report = gradient_check(net, x, [0, 1], n_per_tensor=4)
    assert report.max_rel_error < 1e-4


def test_build_matches_inputs():
    for name in MODEL_NAMES:
        net = build(name, width=0.125)
        assert INPUT_KINDS[name] in ("raw", "chromatic", "side_by_side")
        out = net.forward(np.zeros((3,) + net.input_shape, dtype=np.float32))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=1e-6)


def test_input_scale_is_a_fixed_gain(rng):
    x = rng.standard_normal((2, 1, 24, 256)).astype(np.float32)
    a = build("r_vgg", width=0.125, input_scale=0.5).forward(x)
    b = build("r_vgg", width=0.125).forward(x * np.float32(0.5))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        build("r_vgg", width=0.125, input_scale=0.0)

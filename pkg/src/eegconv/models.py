"""Constructors for the four sex-classification networks.

``r_scnn``/``s_scnn`` follow the 6-conv raw-data network and ``s_vgg``/``r_vgg``
the truncated, quarter-width VGG-16. The ``width`` knob scales every filter
and hidden-unit count (not the 2-unit output) to get fast smoke-test variants
with the same topology.
"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .nn import Conv2D, Dropout, Flatten, Linear, MaxPool2D, Network, ReLU, Softmax

MODEL_NAMES = ("r_scnn", "s_scnn", "s_vgg", "r_vgg")

PUBLISHED_PARAMETER_COUNTS = {
    "r_scnn": 12_713_934,
    "s_scnn": 9_641_934,
    "s_vgg": 1_751_506,
    "r_vgg": 7_452_850,
}

INPUT_SHAPES = {
    "r_scnn": (1, 24, 256),
    "s_scnn": (1, 24, 72),
    "s_vgg": (3, 24, 24),
    "r_vgg": (1, 24, 256),
}

# Which dataset representation feeds each model.
INPUT_KINDS = {
    "r_scnn": "raw",
    "r_vgg": "raw",
    "s_scnn": "side_by_side",
    "s_vgg": "chromatic",
}


@dataclass
class ModelSpec:
    name: str
    input_shape: Tuple[int, int, int]
    layers: List[Tuple[str, dict]] = field(default_factory=list)
    width: float = 1.0


def _scale(n, width):
    return max(1, int(round(n * width)))


def _scnn_layers(width, padded_tail, pool4):
    c = [_scale(n, width) for n in (100, 100, 300, 300, 100, 100)]
    kernels = [(3, 3), (3, 3), (2, 3), (1, 7), (1, 3), (1, 3)]
    pads = [0, 0, 0] + ([1, 1, 1] if padded_tail else [0, 0, 0])
    pools = [((2, 2), (2, 2))] * 3 + [pool4]
    layers = []
    in_ch = 1
    for i in range(6):
        layers.append(("conv2d", dict(name=f"conv{i + 1}", in_channels=in_ch, filters=c[i],
                                      kernel=kernels[i], padding=pads[i])))
        layers.append(("relu", dict(name=f"relu{i + 1}")))
        if i < 4:
            k, s = pools[i]
            layers.append(("maxpool2d", dict(name=f"pool{i + 1}", kernel=k, stride=s)))
            layers.append(("dropout", dict(name=f"drop{i + 1}", rate=0.25)))
        in_ch = c[i]
    layers += [
        ("flatten", dict(name="flatten")),
        ("linear", dict(name="fc1", units=_scale(6144, width))),
        ("relu", dict(name="relu_fc1")),
        ("linear", dict(name="fc2", units=2)),
        ("softmax", dict(name="softmax")),
    ]
    return layers


def _vgg_layers(width, in_channels):
    blocks = [(16, 2), (32, 2), (64, 3)]
    layers = []
    in_ch, i = in_channels, 0
    for b, (filters, reps) in enumerate(blocks):
        f = _scale(filters, width)
        for _ in range(reps):
            i += 1
            layers.append(("conv2d", dict(name=f"conv{i}", in_channels=in_ch, filters=f,
                                          kernel=(3, 3), padding=1)))
            layers.append(("relu", dict(name=f"relu{i}")))
            in_ch = f
        layers.append(("maxpool2d", dict(name=f"pool{b + 1}", kernel=(2, 2), stride=(2, 2))))
    units = _scale(1024, width)
    layers += [
        ("flatten", dict(name="flatten")),
        ("linear", dict(name="fc1", units=units)),
        ("relu", dict(name="relu_fc1")),
        ("dropout", dict(name="drop_fc1", rate=0.5)),
        ("linear", dict(name="fc2", units=units)),
        ("relu", dict(name="relu_fc2")),
        ("dropout", dict(name="drop_fc2", rate=0.5)),
        ("linear", dict(name="fc3", units=2)),
        ("softmax", dict(name="softmax")),
    ]
    return layers


def model_spec(name, width=1.0, pool4=((1, 2), (1, 1))):
    """Layer hyperparameters for a named model.

    ``pool4`` (SCNN only) is ``(kernel, stride)`` of the fourth pooling layer;
    only the default 1x2/stride-1 pool fits R-SCNN's 1x24 feature map.
    """
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; expected one of {MODEL_NAMES}")
    if name == "r_scnn":
        layers = _scnn_layers(width, False, pool4)
    elif name == "s_scnn":
        layers = _scnn_layers(width, True, pool4)
    elif name == "s_vgg":
        layers = _vgg_layers(width, 3)
    else:
        layers = _vgg_layers(width, 1)
    return ModelSpec(name, INPUT_SHAPES[name], layers, width)


_KINDS = {
    "conv2d": Conv2D, "maxpool2d": MaxPool2D, "relu": ReLU, "dropout": Dropout,
    "flatten": Flatten, "linear": Linear, "softmax": Softmax,
}


def make_layers(spec: ModelSpec):
    """Instantiate (uninitialised) layers, inferring linear input widths."""
    layers = []
    shape = spec.input_shape
    for kind, kw in spec.layers:
        kw = dict(kw)
        if kind == "linear":
            if len(shape) != 1:
                raise ValueError("linear layer must follow flatten")
            kw["in_features"] = shape[0]
        layer = _KINDS[kind](**kw)
        shape = layer.output_shape(shape)
        layers.append(layer)
    return layers


def shape_trace(spec: ModelSpec):
    """``[(layer name, output shape), ...]``; raises ShapeError at the first bad layer."""
    trace = []
    shape = spec.input_shape
    for layer in make_layers(spec):
        shape = tuple(layer.output_shape(shape))
        trace.append((layer.name, shape))
    return trace


def flatten_width(spec: ModelSpec):
    for name, shape in shape_trace(spec):
        if name == "flatten":
            return shape[0]
    raise ValueError("model has no flatten layer")


def parameter_count(spec: ModelSpec):
    return int(sum(layer.n_params() for layer in make_layers(spec) if hasattr(layer, "n_params")))


def build(name, width=1.0, seed=0, dtype=np.float32, init="fan_in", input_scale=1.0):
    spec = model_spec(name, width)
    return Network(make_layers(spec), spec.input_shape, seed=seed, dtype=dtype, name=name,
                   init=init, input_scale=input_scale)

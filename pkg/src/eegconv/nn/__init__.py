"""Minimal deterministic CNN engine (numpy)."""
from .gradcheck import GradCheckReport, gradient_check, layer_gradient_check, relative_error
from .layers import (INIT_SCHEMES, Conv2D, Dropout, Flatten, Linear, MaxPool2D, ReLU, Softmax,
                     init_weights, softmax, softmax_crossentropy)
from .network import Network
from .optim import Adamax

__all__ = [
    "INIT_SCHEMES", "Adamax", "Conv2D", "Dropout", "Flatten", "GradCheckReport", "Linear",
    "MaxPool2D", "Network", "layer_gradient_check", "ReLU", "Softmax", "gradient_check",
    "init_weights", "relative_error", "softmax", "softmax_crossentropy",
]

"""Sequential network container."""
import numpy as np

from ..exceptions import ShapeError
from .layers import Dropout, Softmax, softmax, softmax_crossentropy


class Network:
    """Ordered layer stack ending in a softmax.

    Parameters are drawn in layer order from ``seed`` under ``init`` (default
    ``Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))``, see ``init_weights``);
    dropout masks come from an independent stream spawned from the same seed.
    ``input_scale`` is a fixed gain applied to every input before the first
    layer (e.g. to bring microvolt-valued EEG to unit scale).
    """

    def __init__(self, layers, input_shape, seed=0, dtype=np.float32, name="network",
                 init="fan_in", input_scale=1.0):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)
        self.dtype = np.dtype(dtype)
        self.name = name
        self.seed = int(seed)
        self.init = init
        self.input_scale = float(input_scale)
        if not np.isfinite(self.input_scale) or self.input_scale <= 0:
            raise ValueError("input_scale must be a positive finite number")
        self.training = False
        self.trace = self.shape_trace()
        init_ss, drop_ss = np.random.SeedSequence(self.seed).spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self.dropout_rng = np.random.default_rng(drop_ss)
        if self.layers and hasattr(self.layers[0], "needs_input_grad"):
            # nothing upstream of the first layer consumes its input gradient
            self.layers[0].needs_input_grad = False
        for layer in self.layers:
            layer.init_params(init_rng, self.dtype, init)
            if isinstance(layer, Dropout):
                layer.rng = self.dropout_rng

    def shape_trace(self):
        shape = self.input_shape
        trace = []
        for layer in self.layers:
            shape = tuple(layer.output_shape(shape))
            trace.append((layer, shape))
        return trace

    def named_parameters(self):
        """``{'layer.param': array}`` in deterministic layer order."""
        out = {}
        for layer in self.layers:
            for k, v in layer.params.items():
                out[f"{layer.name}.{k}"] = v
        return out

    def named_gradients(self):
        out = {}
        for layer in self.layers:
            for k in layer.params:
                out[f"{layer.name}.{k}"] = layer.grads[k]
        return out

    def parameter_count(self):
        return int(sum(v.size for v in self.named_parameters().values()))

    def load_parameters(self, params):
        own = self.named_parameters()
        if set(own) != set(params):
            missing = sorted(set(own) ^ set(params))
            raise ValueError(f"parameter names differ: {missing[:5]}")
        for layer in self.layers:
            for k in layer.params:
                v = np.asarray(params[f"{layer.name}.{k}"])
                if v.shape != layer.params[k].shape:
                    raise ValueError(f"shape mismatch for {layer.name}.{k}")
                layer.params[k][...] = v

    def astype(self, dtype):
        dtype = np.dtype(dtype)
        for layer in self.layers:
            for k in layer.params:
                layer.params[k] = layer.params[k].astype(dtype)
        self.dtype = dtype
        return self

    def train(self):
        self.training = True
        return self

    def eval(self):
        self.training = False
        return self

    def freeze_dropout(self, frozen=True):
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.frozen = frozen

    def _check_input(self, x):
        x = np.asarray(x)
        if x.ndim == len(self.input_shape):
            x = x[None]
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(self.name, f"expected input {self.input_shape}, got {x.shape[1:]}")
        return x.astype(self.dtype, copy=False)

    def logits(self, x):
        x = self._check_input(x)
        if self.input_scale != 1.0:
            x = x * self.dtype.type(self.input_scale)
        for layer in self.layers:
            if isinstance(layer, Softmax):
                break
            x = layer.forward(x, self.training)
        return x

    def forward(self, x):
        """Class probabilities, ``(batch, 2)``."""
        return softmax(self.logits(x))

    def predict_proba(self, x, batch_size=256):
        was = self.training
        self.eval()
        x = np.asarray(x)
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        self.training = was
        if not out:
            return np.zeros((0, 2), dtype=self.dtype)
        return np.concatenate(out)

    def loss(self, x, y):
        loss, _, _ = softmax_crossentropy(self.logits(x), y)
        return loss

    def backward(self, dlogits):
        g = dlogits
        for layer in reversed(self.layers):
            if isinstance(layer, Softmax):
                continue
            g = layer.backward(g)
        return g

    def loss_and_gradients(self, x, y):
        """Forward in the current mode, then backprop the mean cross-entropy."""
        logits = self.logits(x)
        loss, probs, dlogits = softmax_crossentropy(logits, y)
        self.backward(dlogits.astype(self.dtype, copy=False))
        return loss, probs, self.named_gradients()

    def summary(self):
        lines = [f"{self.name}: input {'x'.join(map(str, self.input_shape))}"]
        for layer, shape in self.trace:
            n = layer.n_params() if hasattr(layer, "n_params") else 0
            lines.append(f"  {layer.name:<10s} {layer.kind:<10s} -> {'x'.join(map(str, shape)):<14s} {n:>12,d}")
        lines.append(f"  trainable parameters: {self.parameter_count():,d}")
        return "\n".join(lines)


"""Layer implementations for a small NCHW convolutional network engine.

Each layer caches what it needs during ``forward`` and consumes the cache in
``backward``; ``backward`` fills ``self.grads`` and returns the gradient with
respect to the layer input.
"""
import numpy as np

from ..exceptions import ShapeError


def _pair(v):
    if isinstance(v, int):
        return (v, v)
    return tuple(int(a) for a in v)


def _out_dim(n, k, s, p):
    return (n + 2 * p - k) // s + 1


INIT_SCHEMES = ("fan_in", "glorot", "he")


def init_weights(rng, shape, fan_in, fan_out, scheme="fan_in"):
    """Draw ``(weight, bias)`` under a named initialization scheme.

    ``fan_in``: weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    ``glorot``: weights ~ U(+-sqrt(6/(fan_in+fan_out))), zero biases.
    ``he``: weights ~ U(+-sqrt(6/fan_in)), zero biases.
    """
    if scheme == "fan_in":
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, shape), rng.uniform(-bound, bound, shape[0])
    if scheme == "glorot":
        bound = np.sqrt(6.0 / (fan_in + fan_out))
    elif scheme == "he":
        bound = np.sqrt(6.0 / fan_in)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    return rng.uniform(-bound, bound, shape), np.zeros(shape[0])


class Layer:
    kind = "layer"

    def __init__(self, name=None):
        self.name = name or self.kind
        self.params = {}
        self.grads = {}

    def output_shape(self, shape):
        return shape

    def init_params(self, rng, dtype, scheme="fan_in"):
        pass

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def config(self):
        return {}

    def __repr__(self):
        cfg = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({self.name}{', ' + cfg if cfg else ''})"


class Conv2D(Layer):
    """Cross-correlation with zero padding; weights are ``(F, C, kh, kw)``."""

    kind = "conv2d"

    def __init__(self, in_channels, filters, kernel, stride=1, padding=0, name=None):
        super().__init__(name)
        self.in_channels = int(in_channels)
        self.filters = int(filters)
        self.kernel = _pair(kernel)
        self.stride = _pair(stride)
        self.padding = _pair(padding)
        self.needs_input_grad = True

    def config(self):
        return dict(in_channels=self.in_channels, filters=self.filters, kernel=self.kernel,
                    stride=self.stride, padding=self.padding)

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(self.name, f"expected C x H x W input, got {shape}")
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeError(self.name, f"expected {self.in_channels} input channels, got {c}")
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        if h + 2 * ph < kh or w + 2 * pw < kw:
            raise ShapeError(self.name,
                             f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}")
        return (self.filters, _out_dim(h, kh, sh, ph), _out_dim(w, kw, sw, pw))

    def n_params(self):
        kh, kw = self.kernel
        return self.filters * self.in_channels * kh * kw + self.filters

    def init_params(self, rng, dtype, scheme="fan_in"):
        kh, kw = self.kernel
        w, b = init_weights(rng, (self.filters, self.in_channels, kh, kw),
                            self.in_channels * kh * kw, self.filters * kh * kw, scheme)
        self.params["weight"] = w.astype(dtype)
        self.params["bias"] = b.astype(dtype)

    def forward(self, x, training=False):
        self.output_shape(x.shape[1:])
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x
        n, c, hp, wp = xp.shape
        ho, wo = (hp - kh) // sh + 1, (wp - kw) // sw + 1
        # im2col as (C, kh, kw, N, Ho, Wo): one strided slice copy per kernel offset
        cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
        xt = xp.transpose(1, 0, 2, 3)
        for a in range(kh):
            for b in range(kw):
                cols[:, a, b] = xt[:, :, a:a + (ho - 1) * sh + 1:sh, b:b + (wo - 1) * sw + 1:sw]
        cols = cols.reshape(c * kh * kw, n * ho * wo)
        out = self.params["weight"].reshape(self.filters, -1) @ cols
        out += self.params["bias"][:, None]
        self._cache = (x.shape, xp.shape, cols)
        return np.ascontiguousarray(out.reshape(self.filters, n, ho, wo).transpose(1, 0, 2, 3))

    def backward(self, dout):
        x_shape, xp_shape, cols = self._cache
        (kh, kw), (sh, sw), (ph, pw) = self.kernel, self.stride, self.padding
        n, f, ho, wo = dout.shape
        d2 = dout.transpose(1, 0, 2, 3).reshape(f, n * ho * wo)
        self.grads["weight"] = (d2 @ cols.T).reshape(self.params["weight"].shape)
        self.grads["bias"] = d2.sum(axis=1)
        self._cache = None
        if not self.needs_input_grad:
            return None
        dcols = (self.params["weight"].reshape(f, -1).T @ d2).reshape(
            self.in_channels, kh, kw, n, ho, wo)
        dxp = np.zeros((xp_shape[1], xp_shape[0]) + xp_shape[2:], dtype=dout.dtype)
        for a in range(kh):
            for b in range(kw):
                dxp[:, :, a:a + (ho - 1) * sh + 1:sh, b:b + (wo - 1) * sw + 1:sw] += dcols[:, a, b]
        dxp = dxp.transpose(1, 0, 2, 3)
        return np.ascontiguousarray(dxp[:, :, ph:ph + x_shape[2], pw:pw + x_shape[3]])


class MaxPool2D(Layer):
    kind = "maxpool2d"

    def __init__(self, kernel=2, stride=None, name=None):
        super().__init__(name)
        self.kernel = _pair(kernel)
        self.stride = _pair(stride if stride is not None else kernel)

    def config(self):
        return dict(kernel=self.kernel, stride=self.stride)

    def output_shape(self, shape):
        if len(shape) != 3:
            raise ShapeError(self.name, f"expected C x H x W input, got {shape}")
        c, h, w = shape
        (kh, kw), (sh, sw) = self.kernel, self.stride
        ho, wo = _out_dim(h, kh, sh, 0), _out_dim(w, kw, sw, 0)
        if ho <= 0 or wo <= 0:
            raise ShapeError(self.name, f"pool window {kh}x{kw} does not fit input {h}x{w}")
        return (c, ho, wo)

    def _slices(self, ho, wo):
        (kh, kw), (sh, sw) = self.kernel, self.stride
        for a in range(kh):
            for b in range(kw):
                yield (slice(None), slice(None),
                       slice(a, a + (ho - 1) * sh + 1, sh), slice(b, b + (wo - 1) * sw + 1, sw))

    def _tiled(self, x, ho, wo):
        """Non-overlapping windows as a ``(n, c, ho, kh, wo, kw)`` array."""
        (kh, kw), n, c = self.kernel, x.shape[0], x.shape[1]
        return x[:, :, :ho * kh, :wo * kw].reshape(n, c, ho, kh, wo, kw)

    def forward(self, x, training=False):
        n, c, ho, wo = (x.shape[0],) + self.output_shape(x.shape[1:])
        (kh, kw), (sh, sw) = self.kernel, self.stride
        if (kh, kw) == (sh, sw):
            # reduce rows then columns with elementwise maxima: much faster than
            # a multi-axis reduction over strided views
            r = x[:, :, :ho * kh, :wo * kw].reshape(n, c, ho, kh, wo * kw)
            rows = r[:, :, :, 0]
            for a in range(1, kh):
                rows = np.maximum(rows, r[:, :, :, a])
            rows = rows.reshape(n, c, ho, wo, kw)
            out = rows[..., 0]
            for b in range(1, kw):
                out = np.maximum(out, rows[..., b])
            out = np.ascontiguousarray(out)
        else:
            out = None
            for sl in self._slices(ho, wo):
                out = x[sl].copy() if out is None else np.maximum(out, x[sl], out=out)
        self._cache = (x, out)
        return out

    def switch_pattern(self):
        """Index of the winning element per window (first maximum)."""
        x, out = self._cache
        arg = np.full(out.shape, -1, dtype=np.int8)
        for k, sl in enumerate(self._slices(*out.shape[2:])):
            arg[(arg < 0) & (x[sl] == out)] = k
        return arg

    def backward(self, dout):
        x, out = self._cache
        (kh, kw), (sh, sw) = self.kernel, self.stride
        ho, wo = out.shape[2:]
        taken = np.zeros(out.shape, dtype=bool)
        dx = np.zeros(x.shape, dtype=dout.dtype)
        if (kh, kw) == (sh, sw):
            x6 = self._tiled(x, ho, wo)
            d6 = np.zeros(x6.shape, dtype=dout.dtype)
            for a in range(kh):
                for b in range(kw):
                    hit = x6[:, :, :, a, :, b] == out
                    hit &= ~taken
                    taken |= hit
                    np.multiply(dout, hit, out=d6[:, :, :, a, :, b])
            dx[:, :, :ho * kh, :wo * kw] = d6.reshape(x.shape[0], x.shape[1], ho * kh, wo * kw)
        else:
            for sl in self._slices(ho, wo):
                hit = x[sl] == out
                hit &= ~taken
                taken |= hit
                dx[sl] += dout * hit
        self._cache = None
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Dropout(Layer):
    """Inverted dropout. With ``frozen`` set the last mask is reused."""

    kind = "dropout"

    def __init__(self, rate, name=None):
        super().__init__(name)
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = float(rate)
        self.rng = None
        self.frozen = False
        self._mask = None

    def config(self):
        return dict(rate=self.rate)

    def forward(self, x, training=False):
        if not training or self.rate == 0:
            self._active = False
            return x
        self._active = True
        if not (self.frozen and self._mask is not None and self._mask.shape == x.shape):
            keep = self.rng.random(x.shape) >= self.rate
            self._mask = keep.astype(x.dtype) / x.dtype.type(1 - self.rate)
        return x * self._mask

    def backward(self, dout):
        if not self._active:
            return dout
        return dout * self._mask


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_features, units, name=None):
        super().__init__(name)
        self.in_features = int(in_features)
        self.units = int(units)

    def config(self):
        return dict(in_features=self.in_features, units=self.units)

    def output_shape(self, shape):
        if len(shape) != 1 or shape[0] != self.in_features:
            raise ShapeError(self.name, f"expected input width {self.in_features}, got {shape}")
        return (self.units,)

    def n_params(self):
        return self.units * self.in_features + self.units

    def init_params(self, rng, dtype, scheme="fan_in"):
        w, b = init_weights(rng, (self.units, self.in_features), self.in_features, self.units,
                            scheme)
        self.params["weight"] = w.astype(dtype)
        self.params["bias"] = b.astype(dtype)

    def forward(self, x, training=False):
        self.output_shape(x.shape[1:])
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dout):
        self.grads["weight"] = dout.T @ self._x
        self.grads["bias"] = dout.sum(axis=0)
        self._x = None
        return dout @ self.params["weight"]


class Softmax(Layer):
    """Terminal softmax; its gradient is fused with the cross-entropy loss."""

    kind = "softmax"

    def forward(self, x, training=False):
        return softmax(x)

    def backward(self, dout):
        raise RuntimeError("softmax backward is fused into softmax_crossentropy")


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_crossentropy(logits, targets):
    """Mean cross-entropy over the batch.

    Returns ``(loss, probabilities, dloss/dlogits)``.
    """
    logits = np.atleast_2d(logits)
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    z = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    n = logits.shape[0]
    logp = z - lse[:, None]
    loss = -logp[np.arange(n), targets].mean()
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(n), targets] -= 1
    return float(loss), probs, dlogits / n


LAYER_TYPES = {cls.kind: cls for cls in (Conv2D, MaxPool2D, ReLU, Dropout, Flatten, Linear, Softmax)}

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegconv.exceptions import NonFiniteGradientError, ShapeError
from eegconv.nn import (Adamax, Conv2D, Dropout, Flatten, Linear, MaxPool2D, Network, ReLU,
                        Softmax, gradient_check, init_weights, layer_gradient_check, softmax,
                        softmax_crossentropy)


def _init(layer, seed=0, dtype=np.float64):
    layer.init_params(np.random.default_rng(seed), dtype)
    return layer


def conv_oracle(x, w, b, stride, pad):
    """Direct nested-loop cross-correlation."""
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad[0], pad[0]), (pad[1], pad[1])))
    ho = (h + 2 * pad[0] - kh) // stride[0] + 1
    wo = (wd + 2 * pad[1] - kw) // stride[1] + 1
    out = np.zeros((n, f, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, :, i * stride[0]:i * stride[0] + kh, j * stride[1]:j * stride[1] + kw]
            out[:, :, i, j] = np.tensordot(patch, w, axes=([1, 2, 3], [1, 2, 3])) + b
    return out


class TestConv2D:
    def test_ones_example(self):
        layer = _init(Conv2D(1, 1, 3))
        layer.params["weight"][:] = 1
        layer.params["bias"][:] = 0
        out = layer.forward(np.ones((1, 1, 3, 3)))
        np.testing.assert_array_equal(out, [[[[9.0]]]])

    def test_shapes(self):
        assert Conv2D(1, 100, 3).output_shape((1, 24, 256)) == (100, 22, 254)
        assert Conv2D(300, 300, (1, 7), padding=1).output_shape((300, 1, 7)) == (300, 3, 3)
        with pytest.raises(ShapeError, match="conv9"):
            Conv2D(1, 1, (3, 3), name="conv9").output_shape((1, 2, 5))
        with pytest.raises(ShapeError):
            Conv2D(2, 1, 1).output_shape((3, 4, 4))

    @pytest.mark.parametrize("stride,pad", [((1, 1), (0, 0)), ((1, 1), (1, 1)),
                                            ((2, 1), (1, 0)), ((2, 3), (0, 2))])
    def test_matches_loop_oracle(self, stride, pad, rng):
        layer = _init(Conv2D(3, 4, (2, 3), stride=stride, padding=pad))
        x = rng.standard_normal((2, 3, 7, 9))
        ref = conv_oracle(x, layer.params["weight"], layer.params["bias"], stride, pad)
        np.testing.assert_allclose(layer.forward(x), ref, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
    def test_linear_in_input(self, seed, a, b):
        rng = np.random.default_rng(seed)
        layer = _init(Conv2D(2, 3, 3, padding=1), seed)
        layer.params["bias"][:] = 0
        x, y = rng.standard_normal((2, 1, 2, 5, 6))
        lhs = layer.forward(a * x + b * y)
        rhs = a * layer.forward(x) + b * layer.forward(y)
        np.testing.assert_allclose(lhs, rhs, atol=1e-5)

    def test_parameter_count(self):
        assert Conv2D(100, 300, (2, 3)).n_params() == 2 * 3 * 100 * 300 + 300


class TestPool:
    def test_examples(self):
        out = MaxPool2D(2).forward(np.array([[[[1.0, 2], [3, 4]]]]))
        np.testing.assert_array_equal(out, [[[[4.0]]]])
        assert MaxPool2D((1, 2), (1, 1)).output_shape((5, 1, 24)) == (5, 1, 23)
        with pytest.raises(ShapeError):
            MaxPool2D(2, 2).output_shape((5, 1, 24))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from([(2, 2), (3, 3), (1, 2), (2, 1)]),
           st.booleans())
    def test_outputs_come_from_windows(self, seed, kernel, overlap):
        stride = (1, 1) if overlap else kernel
        x = np.random.default_rng(seed).standard_normal((2, 2, 7, 8))
        layer = MaxPool2D(kernel, stride)
        out = layer.forward(x)
        kh, kw = kernel
        for i in range(out.shape[2]):
            for j in range(out.shape[3]):
                win = x[:, :, i * stride[0]:i * stride[0] + kh, j * stride[1]:j * stride[1] + kw]
                np.testing.assert_array_equal(out[:, :, i, j], win.max(axis=(2, 3)))

    def test_constant_input_only_reduces_shape(self):
        out = MaxPool2D(2).forward(np.full((1, 2, 6, 4), 3.0))
        assert out.shape == (1, 2, 3, 2) and np.all(out == 3.0)

    def test_tie_routes_gradient_to_first_maximum(self):
        layer = MaxPool2D(2)
        layer.forward(np.ones((1, 1, 2, 2)))
        dx = layer.backward(np.ones((1, 1, 1, 1)))
        np.testing.assert_array_equal(dx[0, 0], [[1, 0], [0, 0]])


class TestActivations:
    def test_relu(self):
        np.testing.assert_array_equal(ReLU().forward(np.array([[-1.0, 2.0]])), [[0, 2]])

    def test_dropout_inference_identity_and_scaling(self):
        layer = Dropout(0.25)
        layer.rng = np.random.default_rng(0)
        x = np.ones((1000, 1000), dtype=np.float32)
        assert layer.forward(x, training=False) is x
        assert 0.99 <= layer.forward(x, training=True).mean() <= 1.01

    def test_dropout_rate_validation(self):
        for bad in (-0.1, 1.0):
            with pytest.raises(ValueError):
                Dropout(bad)

    def test_linear_examples(self):
        layer = _init(Linear(4, 4))
        layer.params["weight"][:] = np.eye(4)
        layer.params["bias"][:] = 0
        x = np.arange(8.0).reshape(2, 4)
        np.testing.assert_array_equal(layer.forward(x), x)
        layer.params["weight"][:] = 0
        layer.params["bias"][:] = [1, 2, 3, 4]
        np.testing.assert_array_equal(layer.forward(x), [[1, 2, 3, 4]] * 2)
        assert Linear(1900, 6144).n_params() == 6144 * 1900 + 6144
        with pytest.raises(ShapeError):
            layer.output_shape((5,))


class TestSoftmaxCE:
    def test_examples(self):
        loss, p, _ = softmax_crossentropy(np.array([[0.0, 0.0]]), [1])
        np.testing.assert_allclose(p, [[0.5, 0.5]])
        assert loss == pytest.approx(np.log(2))
        loss, p, _ = softmax_crossentropy(np.array([[1000.0, 0.0]]), [0])
        assert np.all(np.isfinite(p)) and p[0, 0] == pytest.approx(1.0) and loss < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.floats(0.1, 50))
    def test_probabilities(self, seed, scale):
        z = np.random.default_rng(seed).standard_normal((5, 2)) * scale
        p = softmax(z)
        assert np.all(p > 0) and np.allclose(p.sum(axis=1), 1, atol=1e-6)

    def test_gradient_is_p_minus_onehot(self, rng):
        z = rng.standard_normal((4, 2))
        y = np.array([0, 1, 1, 0])
        _, p, d = softmax_crossentropy(z, y)
        np.testing.assert_allclose(d, (p - np.eye(2)[y]) / 4)
        eps = 1e-6
        for i in range(4):
            for j in range(2):
                zp, zm = z.copy(), z.copy()
                zp[i, j] += eps
                zm[i, j] -= eps
                num = (softmax_crossentropy(zp, y)[0] - softmax_crossentropy(zm, y)[0]) / (2 * eps)
                assert abs(num - d[i, j]) < 1e-7


LAYER_CASES = [
    ("conv2d", lambda: Conv2D(3, 4, (2, 3), padding=1), (2, 3, 5, 6)),
    ("conv2d_strided", lambda: Conv2D(2, 3, 3, stride=2), (2, 2, 7, 7)),
    ("maxpool2d", lambda: MaxPool2D(2), (2, 3, 6, 7)),
    ("maxpool2d_overlapping", lambda: MaxPool2D((1, 2), (1, 1)), (2, 3, 1, 8)),
    ("relu", lambda: ReLU(), (4, 10)),
    ("dropout", lambda: Dropout(0.25), (4, 10)),
    ("flatten", lambda: Flatten(), (2, 3, 4, 4)),
    ("linear", lambda: Linear(12, 5), (3, 12)),
]


@pytest.mark.parametrize("name,make,shape", LAYER_CASES, ids=[c[0] for c in LAYER_CASES])
def test_layer_gradients(name, make, shape, rng):
    layer = _init(make())
    report = layer_gradient_check(layer, rng.standard_normal(shape))
    assert report.n_checked > 0
    assert report.max_rel_error < 1e-6


def _toy_net(dtype=np.float64, seed=0, dropout=0.0):
    layers = [Conv2D(1, 3, 3, name="c1"), ReLU(name="r1"), MaxPool2D(2, name="p1"),
              Dropout(dropout, name="d1"), Flatten(name="f"), Linear(27, 4, name="l1"),
              ReLU(name="r2"), Linear(4, 2, name="l2"), Softmax(name="s")]
    return Network(layers, (1, 8, 8), seed=seed, dtype=dtype)


class TestNetwork:
    def test_toy_gradient_check(self, rng):
        net = _toy_net(dropout=0.3)
        report = gradient_check(net, rng.standard_normal((3, 1, 8, 8)), [0, 1, 1],
                                n_per_tensor=20)
        assert report.max_rel_error < 1e-4

    def test_linear_only_net(self, rng):
        net = Network([Flatten(), Linear(6, 3), Linear(3, 2), Softmax()], (6,), dtype=np.float64)
        report = gradient_check(net, rng.standard_normal((4, 6)), [0, 1, 0, 1])
        assert report.max_rel_error < 1e-7

    def test_inference_repeatable_and_batch(self, rng):
        net = _toy_net(np.float32, dropout=0.5)
        x = rng.standard_normal((70, 1, 8, 8)).astype(np.float32)
        a, b = net.forward(x), net.forward(x)
        assert a.shape == (70, 2) and np.array_equal(a, b)

    def test_shape_errors(self):
        net = _toy_net()
        with pytest.raises(ShapeError):
            net.forward(np.zeros((1, 1, 9, 8)))
        with pytest.raises(ShapeError):
            Network([Conv2D(1, 1, 5), Softmax()], (1, 3, 3))

    def test_seed_determines_parameters(self):
        a = _toy_net(seed=3).named_parameters()
        b = _toy_net(seed=3).named_parameters()
        c = _toy_net(seed=4).named_parameters()
        assert all(np.array_equal(a[k], b[k]) for k in a)
        assert not all(np.array_equal(a[k], c[k]) for k in a)

    def test_fan_in_init_range(self):
        layer = _init(Conv2D(4, 50, 3))
        bound = 1 / np.sqrt(36)
        w = layer.params["weight"]
        assert np.abs(w).max() <= bound and abs(w.mean()) < 0.1 * bound
        assert np.abs(layer.params["bias"]).max() <= bound

    def test_other_init_schemes(self, rng):
        w, b = init_weights(rng, (64, 100), 100, 64, "glorot")
        assert np.abs(w).max() <= np.sqrt(6 / 164) and not b.any()
        w, b = init_weights(rng, (64, 100), 100, 64, "he")
        assert np.abs(w).max() <= np.sqrt(6 / 100) and np.abs(w).max() > np.sqrt(6 / 164)
        with pytest.raises(ValueError):
            init_weights(rng, (2, 2), 2, 2, "xavier")

    def test_float64_trajectories_identical(self, rng):
        x = rng.standard_normal((10, 1, 8, 8))
        y = np.arange(10) % 2
        finals = []
        for _ in range(2):
            net = _toy_net(seed=5, dropout=0.3).train()
            opt = Adamax(net.named_parameters(), weight_decay=0.001)
            for _ in range(5):
                opt.step(net.loss_and_gradients(x, y)[2])
            finals.append({k: v.copy() for k, v in net.named_parameters().items()})
        assert all(np.array_equal(finals[0][k], finals[1][k]) for k in finals[0])


class TestAdamax:
    def test_hand_example(self):
        theta = {"w": np.array([1.0])}
        opt = Adamax(theta)
        opt.step({"w": np.array([1.0])})
        assert opt.m["w"][0] == pytest.approx(0.1)
        assert opt.u["w"][0] == 1.0
        assert theta["w"][0] == pytest.approx(1 - (0.002 / 0.1) * 0.1 / (1 + 1e-8))
        assert theta["w"][0] == pytest.approx(0.998)

    def test_matches_reference_loop(self, rng):
        # scalar re-implementation of the update rule as an oracle
        theta = {"w": rng.standard_normal(5)}
        start = theta["w"].copy()
        grads = rng.standard_normal((6, 5))
        opt = Adamax(theta, lr=0.01, weight_decay=0.1)
        for g in grads:
            opt.step({"w": g.copy()})
        for i in range(5):
            th, m, u = start[i], 0.0, 0.0
            for t, g in enumerate(grads[:, i], start=1):
                g = g + 0.1 * th
                m = 0.9 * m + 0.1 * g
                u = max(0.999 * u, abs(g))
                th = th - 0.01 / (1 - 0.9 ** t) * m / (u + 1e-8)
            assert theta["w"][i] == pytest.approx(th, rel=1e-12)

    def test_no_op_cases(self):
        theta = {"w": np.array([0.5, -2.0])}
        opt = Adamax(theta)
        opt.step({"w": np.zeros(2)})
        np.testing.assert_array_equal(theta["w"], [0.5, -2.0])
        opt = Adamax(theta, lr=0.0)
        opt.step({"w": np.ones(2)})
        np.testing.assert_array_equal(theta["w"], [0.5, -2.0])
        assert opt.t == 1 and opt.m["w"][0] > 0

    def test_non_finite_gradient(self):
        theta = {"a": np.ones(2), "b": np.ones(2)}
        opt = Adamax(theta)
        with pytest.raises(NonFiniteGradientError, match="'b'"):
            opt.step({"a": np.ones(2), "b": np.array([1.0, np.nan])})
        np.testing.assert_array_equal(theta["a"], 1.0)
        assert opt.t == 0

    def test_state_round_trip(self, rng):
        theta = {"w": rng.standard_normal(3)}
        opt = Adamax(theta)
        opt.step({"w": rng.standard_normal(3)})
        clone = Adamax({"w": theta["w"].copy()})
        clone.load_state_dict(opt.state_dict())
        g = rng.standard_normal(3)
        opt.step({"w": g})
        clone.step({"w": g})
        np.testing.assert_array_equal(opt.params["w"], clone.params["w"])

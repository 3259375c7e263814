"""Central finite-difference verification of analytic gradients."""
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .layers import MaxPool2D, ReLU


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_parameter: Dict[str, float] = field(default_factory=dict)
    n_checked: int = 0
    n_skipped: int = 0

    def passed(self, tolerance=1e-4):
        return self.max_rel_error < tolerance


def relative_error(analytic, numeric, floor=1e-8):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _switch_pattern(net):
    """Current ReLU masks and max-pool winners, i.e. which linear piece is active."""
    out = []
    for layer in net.layers:
        if isinstance(layer, ReLU):
            out.append(layer._mask.copy())
        elif isinstance(layer, MaxPool2D):
            out.append(layer.switch_pattern())
    return out


def _same_pattern(a, b):
    return all(np.array_equal(p, q) for p, q in zip(a, b))


def gradient_check(net, x, y, n_per_tensor=5, step=1e-5, seed=0, training=True,
                   max_attempts=20):
    """Compare backprop gradients with central differences on sampled entries.

    The network must be in 64-bit precision. Dropout masks are drawn once and
    frozen so the loss surface is deterministic during the check. A sampled
    entry whose +/- step perturbation flips any ReLU or max-pool switch
    straddles a kink, where a finite difference does not estimate the
    derivative; such entries are counted in ``n_skipped`` and another entry of
    the same tensor is drawn instead.
    """
    if net.dtype != np.float64:
        raise ValueError("gradient checks require a float64 network")
    rng = np.random.default_rng(seed)
    net.training = training
    net.freeze_dropout(True)
    try:
        _, _, grads = net.loss_and_gradients(x, y)
        grads = {k: g.copy() for k, g in grads.items()}
        net.loss(x, y)
        base = _switch_pattern(net)
        report = GradCheckReport(0.0)
        for name, theta in net.named_parameters().items():
            flat = theta.reshape(-1)
            order = rng.permutation(flat.size)
            want = min(n_per_tensor, flat.size)
            worst, done = 0.0, 0
            for i in order[:want + max_attempts]:
                if done == want:
                    break
                orig = flat[i]
                flat[i] = orig + step
                lp = net.loss(x, y)
                ok = _same_pattern(base, _switch_pattern(net))
                flat[i] = orig - step
                lm = net.loss(x, y)
                ok = ok and _same_pattern(base, _switch_pattern(net))
                flat[i] = orig
                if not ok:
                    report.n_skipped += 1
                    continue
                numeric = (lp - lm) / (2 * step)
                worst = max(worst, relative_error(grads[name].reshape(-1)[i], numeric))
                done += 1
                report.n_checked += 1
            report.per_parameter[name] = worst
            report.max_rel_error = max(report.max_rel_error, worst)
    finally:
        net.freeze_dropout(False)
    return report


def _layer_pattern(layer):
    if isinstance(layer, ReLU):
        return [layer._mask.copy()]
    if isinstance(layer, MaxPool2D):
        return [layer.switch_pattern()]
    return []


def layer_gradient_check(layer, x, n_per_tensor=10, step=1e-5, seed=0, training=True,
                         max_attempts=40):
    """Check one layer's input and parameter gradients in float64.

    The scalar objective is ``sum(r * layer(x))`` for a fixed random ``r``,
    so ``backward(r)`` must equal its gradient. Entries whose perturbation
    crosses a ReLU or max-pool switch are skipped as in :func:`gradient_check`.
    """
    x = np.array(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    if hasattr(layer, "frozen"):
        layer.frozen = True
        if layer.rng is None:
            layer.rng = np.random.default_rng(seed)
    try:
        out = layer.forward(x, training)
        r = rng.standard_normal(out.shape)
        base = _layer_pattern(layer)
        dx = layer.backward(r)
        grads = {k: g.copy() for k, g in layer.grads.items()}

        def objective():
            value = float(np.sum(r * layer.forward(x, training)))
            return value, _same_pattern(base, _layer_pattern(layer))

        tensors = {"input": (x, dx)}
        tensors.update({k: (layer.params[k], grads[k]) for k in layer.params})
        report = GradCheckReport(0.0)
        for name, (theta, g) in tensors.items():
            if g is None:
                continue
            flat, gflat = theta.reshape(-1), g.reshape(-1)
            want = min(n_per_tensor, flat.size)
            worst, done = 0.0, 0
            for i in rng.permutation(flat.size)[:want + max_attempts]:
                if done == want:
                    break
                orig = flat[i]
                flat[i] = orig + step
                lp, ok_p = objective()
                flat[i] = orig - step
                lm, ok_m = objective()
                flat[i] = orig
                if not (ok_p and ok_m):
                    report.n_skipped += 1
                    continue
                worst = max(worst, relative_error(gflat[i], (lp - lm) / (2 * step)))
                done += 1
                report.n_checked += 1
            report.per_parameter[name] = worst
            report.max_rel_error = max(report.max_rel_error, worst)
    finally:
        if hasattr(layer, "frozen"):
            layer.frozen = False
    return report

import numpy as np

from ..exceptions import NonFiniteGradientError


class Adamax:
    """Adamax with L2 weight decay folded into the gradient.

    Update per parameter, with ``t`` counting steps from 1::

        g <- g + weight_decay * theta
        m <- beta1 * m + (1 - beta1) * g
        u <- max(beta2 * u, |g|)
        theta <- theta - lr / (1 - beta1**t) * m / (u + eps)
    """

    def __init__(self, params, lr=0.002, beta1=0.9, beta2=0.999, eps=1e-8,
                 weight_decay=0.0):
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.u = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads):
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step_size = self.lr / (1 - b1 ** self.t)
        for name, theta in self.params.items():
            g = grads[name]
            if self.weight_decay:
                g = g + self.weight_decay * theta
            m, u = self.m[name], self.u[name]
            m *= b1
            m += (1 - b1) * g
            np.maximum(b2 * u, np.abs(g), out=u)
            theta -= (step_size * m / (u + self.eps)).astype(theta.dtype, copy=False)

    def state_dict(self):
        state = {"t": np.array(self.t, dtype=np.int64)}
        for k in self.params:
            state[f"m/{k}"] = self.m[k]
            state[f"u/{k}"] = self.u[k]
        return state

    def load_state_dict(self, state):
        self.t = int(state["t"])
        for k in self.params:
            self.m[k] = np.array(state[f"m/{k}"], dtype=self.params[k].dtype)
            self.u[k] = np.array(state[f"u/{k}"], dtype=self.params[k].dtype)

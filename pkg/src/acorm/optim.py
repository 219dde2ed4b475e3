"""Adam optimizer and parameter-blend updates on flat param dicts."""

import numpy as np


class Adam:
    """Adam over a fixed subset of a flat parameter dict."""

    def __init__(self, keys, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.keys = list(keys)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads, lr=None):
        lr = self.lr if lr is None else lr
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for k in self.keys:
            g = grads[k]
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state(self):
        return {"t": self.t, "m": dict(self.m), "v": dict(self.v)}

    def load_state(self, state):
        self.t = int(state["t"])
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}


def clip_grad_norm(grads, keys, max_norm):
    """Global-norm clipping over a key subset; returns the pre-clip norm."""
    total = 0.0
    for k in keys:
        g = grads[k]
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for k in keys:
            grads[k] *= scale
    return norm


def soft_update(target, online, tau):
    """target <- (1 - tau) * target + tau * online, key by key.

    Computed as online + (1 - tau) * (target - online) so the gap to the
    online network shrinks by exactly (1 - tau) per update.
    """
    for k in target:
        target[k] = online[k] + (1.0 - tau) * (target[k] - online[k])


def hard_update(target, online):
    for k in target:
        target[k] = online[k].copy()

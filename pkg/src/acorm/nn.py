"""Parameter containers and layer math shared by all networks.

Parameters live in one flat ``dict[str, np.ndarray]`` keyed by dotted names
("agent.gru.Wih", "role.W", ...), which keeps momentum blends, target soft
updates, checkpointing and finite-difference perturbation trivially generic.
All math is float64; gradients are accumulated into a parallel dict.
"""

import numpy as np

from . import kernels

Params = dict


def uniform_init(rng, shape, fan_in):
    """Uniform fan-in scaled init, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def zeros_like_params(params, keys=None):
    keys = params.keys() if keys is None else keys
    return {k: np.zeros_like(params[k]) for k in keys}


def add_linear(params, rng, prefix, d_in, d_out):
    params[prefix + ".W"] = uniform_init(rng, (d_out, d_in), d_in)
    params[prefix + ".b"] = uniform_init(rng, (d_out,), d_in)


def linear(params, prefix, x):
    return x @ params[prefix + ".W"].T + params[prefix + ".b"]


def linear_backward(params, prefix, x, dy, grads):
    """Accumulate dW/db into grads; return dx.  x/dy may be (..., d)."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[prefix + ".W"] += dy2.T @ x2
    grads[prefix + ".b"] += dy2.sum(axis=0)
    return (dy2 @ params[prefix + ".W"]).reshape(x.shape)


def relu(x):
    return np.maximum(x, 0.0)


def softmax(x, axis=-1):
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def add_gru(params, rng, prefix, d_in, d_hid):
    params[prefix + ".Wih"] = uniform_init(rng, (3 * d_hid, d_in), d_hid)
    params[prefix + ".Whh"] = uniform_init(rng, (3 * d_hid, d_hid), d_hid)
    params[prefix + ".bih"] = uniform_init(rng, (3 * d_hid,), d_hid)
    params[prefix + ".bhh"] = uniform_init(rng, (3 * d_hid,), d_hid)


def gru_cell(params, prefix, x, h):
    """Single GRU step for rollouts. x: (B,Din), h: (B,H) -> (B,H)."""
    H = h.shape[-1]
    gi = x @ params[prefix + ".Wih"].T + params[prefix + ".bih"]
    gh = h @ params[prefix + ".Whh"].T + params[prefix + ".bhh"]
    r = 1.0 / (1.0 + np.exp(-(gi[..., :H] + gh[..., :H])))
    z = 1.0 / (1.0 + np.exp(-(gi[..., H : 2 * H] + gh[..., H : 2 * H])))
    n = np.tanh(gi[..., 2 * H :] + r * gh[..., 2 * H :])
    return (1.0 - z) * n + z * h


def gru_seq(params, prefix, x, h0):
    """Unroll over a padded batch. x: (T,B,Din), h0: (B,H).

    Returns (h, cache) with h: (T,B,H).  The input-side projection is one
    big GEMM; the sequential part runs in the backend kernel.
    """
    T, B, _ = x.shape
    wih = params[prefix + ".Wih"]
    gi = (x.reshape(T * B, -1) @ wih.T + params[prefix + ".bih"]).reshape(T, B, -1)
    whh = params[prefix + ".Whh"]
    h, r, z, n, ghn = kernels.gru_seq_forward(
        gi, np.ascontiguousarray(h0), np.ascontiguousarray(whh.T), params[prefix + ".bhh"]
    )
    cache = (x, h0, h, r, z, n, ghn)
    return h, cache


def gru_seq_backward(params, prefix, cache, dh_out, grads):
    """Backward through gru_seq.  dh_out: (T,B,H) per-step upstream grads.

    Accumulates parameter grads; returns (dx, dh0).
    """
    x, h0, h, r, z, n, ghn = cache
    T, B, H = dh_out.shape
    whh = params[prefix + ".Whh"]
    dgi, dgh, dh0 = kernels.gru_seq_backward(
        np.ascontiguousarray(dh_out), h, r, z, n, ghn, np.ascontiguousarray(h0), whh
    )
    x2 = x.reshape(T * B, -1)
    dgi2 = dgi.reshape(T * B, -1)
    dgh2 = dgh.reshape(T * B, -1)
    hp_all = np.concatenate([h0[None], h[:-1]], axis=0).reshape(T * B, H)
    grads[prefix + ".Wih"] += dgi2.T @ x2
    grads[prefix + ".bih"] += dgi2.sum(axis=0)
    grads[prefix + ".Whh"] += dgh2.T @ hp_all
    grads[prefix + ".bhh"] += dgh2.sum(axis=0)
    dx = (dgi2 @ params[prefix + ".Wih"]).reshape(x.shape)
    return dx, dh0

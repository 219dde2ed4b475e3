"""State encoding, multi-head attention over role representations, and the
monotonic mixing network.

The global-state history is encoded by a GRU into a state embedding, which
queries the agents' role representations through scaled dot-product
multi-head attention.  The attention output concatenated with the state
embedding conditions the hypernetworks that generate the mixing weights;
generated weights pass through abs() so the mixed joint value is monotone
in every per-agent utility.
"""

import numpy as np

from . import nn


def state_params(rng, state_dim, embed_dim=64):
    p = {}
    nn.add_gru(p, rng, "state.gru", state_dim, embed_dim)
    return p


def encode_state(params, state, prev):
    """One recurrent step over the global state; prev is zero at t=0."""
    single = state.ndim == 1
    if single:
        state, prev = state[None], prev[None]
    h = nn.gru_cell(params, "state.gru", state, prev)
    return h[0] if single else h


def state_sequence(params, state_seq, h0):
    """state_seq: (T,B,state_dim) -> (tau, cache), tau: (T,B,embed_dim)."""
    return nn.gru_seq(params, "state.gru", state_seq, h0)


def state_sequence_backward(params, cache, dtau_out, grads):
    return nn.gru_seq_backward(params, "state.gru", cache, dtau_out, grads)


# ---------------------------------------------------------------------------
# multi-head attention: state embedding attends to role representations
# ---------------------------------------------------------------------------


def attention_params(rng, query_dim=64, role_dim=64, n_heads=4, attn_embed_dim=128,
                     out_dim=64):
    """Per-head projections with d_k = d_v = attn_embed_dim / n_heads."""
    if attn_embed_dim % n_heads:
        raise ValueError("attn_embed_dim must be divisible by n_heads")
    dk = attn_embed_dim // n_heads
    p = {}
    p["attn.Wq"] = nn.uniform_init(rng, (n_heads, query_dim, dk), query_dim)
    p["attn.Wk"] = nn.uniform_init(rng, (n_heads, role_dim, dk), role_dim)
    p["attn.Wv"] = nn.uniform_init(rng, (n_heads, role_dim, dk), role_dim)
    p["attn.Wo"] = nn.uniform_init(rng, (attn_embed_dim, out_dim), attn_embed_dim)
    return p


def attend(params, tau, roles):
    """Single-query attention. tau: (ds,) or (M,ds); roles: (n,d) or (M,n,d).

    Returns (tau_mha, weights): the aggregated output and the per-head
    attention weights over agents, shapes (out_dim,) / (H,n) in the single
    case.  Each head's weight row is a softmax over the n agents.
    """
    out, alpha, _ = attend_with_cache(params, tau, roles)
    return out, alpha


def _head_flat(w):
    """(H, d, k) parameter stack -> (d, H*k) matrix for one-GEMM projection."""
    h, d, k = w.shape
    return w.transpose(1, 0, 2).reshape(d, h * k)


def attend_with_cache(params, tau, roles):
    single = tau.ndim == 1
    if single:
        tau, roles = tau[None], roles[None]
    wq, wk, wv, wo = (params["attn.Wq"], params["attn.Wk"],
                      params["attn.Wv"], params["attn.Wo"])
    nh, _, dk = wq.shape
    m, n, d = roles.shape
    with np.errstate(invalid="ignore", over="ignore"):
        q = (tau @ _head_flat(wq)).reshape(m, nh, dk)
        rflat = roles.reshape(m * n, d)
        key = (rflat @ _head_flat(wk)).reshape(m, n, nh, dk).transpose(0, 2, 1, 3)
        val = (rflat @ _head_flat(wv)).reshape(m, n, nh, dk).transpose(0, 2, 1, 3)
        logits = (key @ q[:, :, :, None])[:, :, :, 0] / np.sqrt(dk)  # (m, H, n)
    if not np.isfinite(logits).all():
        raise FloatingPointError("non-finite attention logits")
    alpha = nn.softmax(logits, axis=2)
    heads = (alpha[:, :, None, :] @ val)[:, :, 0, :]  # (m, H, dk)
    u = heads.reshape(m, -1)
    tau_mha = u @ wo
    cache = (tau, roles, q, key, val, alpha, u, single)
    if single:
        return tau_mha[0], alpha[0], cache
    return tau_mha, alpha, cache


def attend_backward(params, cache, dtau_mha, grads):
    """Backward through attend; returns (dtau, droles)."""
    tau, roles, q, key, val, alpha, u, single = cache
    if single:
        dtau_mha = dtau_mha[None]
    wq, wk, wv, wo = (params["attn.Wq"], params["attn.Wk"],
                      params["attn.Wv"], params["attn.Wo"])
    nh, _, dk = wq.shape
    m, n, d = roles.shape
    grads["attn.Wo"] += u.T @ dtau_mha
    du = dtau_mha @ wo.T
    dheads = du.reshape(m, nh, dk)
    dalpha = (val @ dheads[:, :, :, None])[:, :, :, 0]  # (m, H, n)
    dval = alpha[:, :, :, None] * dheads[:, :, None, :]  # (m, H, n, dk)
    dlogits = alpha * (dalpha - (dalpha * alpha).sum(axis=2, keepdims=True))
    dlogits = dlogits / np.sqrt(dk)
    dq = (dlogits[:, :, None, :] @ key)[:, :, 0, :]  # (m, H, dk)
    dkey = dlogits[:, :, :, None] * q[:, :, None, :]  # (m, H, n, dk)
    dq_flat = dq.reshape(m, nh * dk)
    dkey_flat = dkey.transpose(0, 2, 1, 3).reshape(m * n, nh * dk)
    dval_flat = dval.transpose(0, 2, 1, 3).reshape(m * n, nh * dk)
    rflat = roles.reshape(m * n, d)

    def _unflat(g):  # (din, H*k) grad -> (H, din, k)
        return g.reshape(g.shape[0], nh, dk).transpose(1, 0, 2)

    grads["attn.Wq"] += _unflat(tau.T @ dq_flat)
    grads["attn.Wk"] += _unflat(rflat.T @ dkey_flat)
    grads["attn.Wv"] += _unflat(rflat.T @ dval_flat)
    dtau = dq_flat @ _head_flat(wq).T
    droles = (dkey_flat @ _head_flat(wk).T + dval_flat @ _head_flat(wv).T).reshape(m, n, d)
    if single:
        return dtau[0], droles[0]
    return dtau, droles


# ---------------------------------------------------------------------------
# monotonic mixing network with hypernetwork-generated weights
# ---------------------------------------------------------------------------


def mixer_params(rng, n_agents, cond_dim, mix_hidden=32, hyper_hidden=32):
    """Hypernetworks conditioned on ``cond_dim`` inputs.

    Weight generators are two-layer MLPs; the first-layer bias generator is
    a single affine map and the final bias a two-layer MLP, mirroring the
    standard monotonic-mixing setup.  Only generated *weights* get abs().
    """
    p = {}
    nn.add_linear(p, rng, "mixer.w1.l1", cond_dim, hyper_hidden)
    nn.add_linear(p, rng, "mixer.w1.l2", hyper_hidden, n_agents * mix_hidden)
    nn.add_linear(p, rng, "mixer.b1", cond_dim, mix_hidden)
    nn.add_linear(p, rng, "mixer.w2.l1", cond_dim, hyper_hidden)
    nn.add_linear(p, rng, "mixer.w2.l2", hyper_hidden, mix_hidden)
    nn.add_linear(p, rng, "mixer.v.l1", cond_dim, hyper_hidden)
    nn.add_linear(p, rng, "mixer.v.l2", hyper_hidden, 1)
    return p


def mix(params, per_agent_q, cond):
    """Monotonic mix of per-agent utilities under conditioning vector(s).

    per_agent_q: (n,) or (M,n); cond: (C,) or (M,C).  Returns scalar / (M,).
    """
    out, _ = mix_with_cache(params, per_agent_q, cond)
    return out


def mix_with_cache(params, per_agent_q, cond):
    single = per_agent_q.ndim == 1
    if single:
        per_agent_q, cond = per_agent_q[None], cond[None]
    m, n = per_agent_q.shape
    pre1 = nn.linear(params, "mixer.w1.l1", cond)
    h1 = nn.relu(pre1)
    w1raw = nn.linear(params, "mixer.w1.l2", h1)
    w1 = np.abs(w1raw).reshape(m, n, -1)
    b1 = nn.linear(params, "mixer.b1", cond)
    pre2 = nn.linear(params, "mixer.w2.l1", cond)
    h2 = nn.relu(pre2)
    w2raw = nn.linear(params, "mixer.w2.l2", h2)
    w2 = np.abs(w2raw)
    prev = nn.linear(params, "mixer.v.l1", cond)
    hv = nn.relu(prev)
    b2 = nn.linear(params, "mixer.v.l2", hv)
    hidden_pre = np.einsum("mn,mnj->mj", per_agent_q, w1) + b1
    hidden = nn.relu(hidden_pre)
    qtot = (hidden * w2).sum(axis=1) + b2[:, 0]
    cache = (per_agent_q, cond, pre1, h1, w1raw, w1, pre2, h2, w2raw, w2,
             prev, hv, hidden_pre, hidden, single)
    return (qtot[0] if single else qtot), cache


def mix_backward(params, cache, dqtot, grads):
    """Backward through mix; returns (dq, dcond)."""
    (per_agent_q, cond, pre1, h1, w1raw, w1, pre2, h2, w2raw, w2,
     prev, hv, hidden_pre, hidden, single) = cache
    if single:
        dqtot = np.asarray([dqtot])
    m, n = per_agent_q.shape
    dqtot_col = dqtot[:, None]
    db2 = dqtot_col
    dw2 = dqtot_col * hidden
    dhidden = dqtot_col * w2
    dhidden_pre = dhidden * (hidden_pre > 0)
    db1 = dhidden_pre
    dw1 = np.einsum("mn,mj->mnj", per_agent_q, dhidden_pre)
    dq = np.einsum("mj,mnj->mn", dhidden_pre, w1)
    dw1raw = dw1.reshape(m, -1) * np.sign(w1raw)
    dw2raw = dw2 * np.sign(w2raw)
    dcond = np.zeros_like(cond)
    dh1 = nn.linear_backward(params, "mixer.w1.l2", h1, dw1raw, grads)
    dcond += nn.linear_backward(params, "mixer.w1.l1", cond, dh1 * (pre1 > 0), grads)
    dcond += nn.linear_backward(params, "mixer.b1", cond, db1, grads)
    dh2 = nn.linear_backward(params, "mixer.w2.l2", h2, dw2raw, grads)
    dcond += nn.linear_backward(params, "mixer.w2.l1", cond, dh2 * (pre2 > 0), grads)
    dhv = nn.linear_backward(params, "mixer.v.l2", hv, db2, grads)
    dcond += nn.linear_backward(params, "mixer.v.l1", cond, dhv * (prev > 0), grads)
    if single:
        return dq[0], dcond[0]
    return dq, dcond

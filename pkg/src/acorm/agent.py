"""Shared per-agent trajectory encoder and utility head.

One set of parameters serves every agent (no agent-ID input).  The encoder
is a ReLU input projection feeding a GRU with 128-dim hidden state; the
hidden state *is* the agent embedding.  The utility head is an affine map
from the embedding to per-action values; action masking happens only at
selection time.
"""

import numpy as np

from . import nn


def agent_params(rng, obs_dim, n_actions, embed_dim=128):
    """Build the parameter block under the ``agent.`` prefix."""
    p = {}
    nn.add_linear(p, rng, "agent.proj", obs_dim + n_actions, embed_dim)
    nn.add_gru(p, rng, "agent.gru", embed_dim, embed_dim)
    nn.add_linear(p, rng, "agent.head", embed_dim, n_actions)
    return p


def embed_step(params, observation, last_action_onehot, prev_embedding):
    """One recurrent step.  Inputs may be single vectors or (B, .) batches.

    At t=0 pass a zero prev_embedding and a zero last-action one-hot.
    """
    x = np.concatenate([observation, last_action_onehot], axis=-1)
    expect = params["agent.proj.W"].shape[1]
    if x.shape[-1] != expect:
        raise ValueError(f"input dim {x.shape[-1]} != expected {expect}")
    if prev_embedding.shape[-1] != params["agent.gru.Whh"].shape[1]:
        raise ValueError("prev_embedding dimension mismatch")
    x = nn.relu(nn.linear(params, "agent.proj", x))
    single = x.ndim == 1
    if single:
        x, prev_embedding = x[None], prev_embedding[None]
    h = nn.gru_cell(params, "agent.gru", x, prev_embedding)
    return h[0] if single else h


def q_values(params, embedding):
    """Per-action utilities from an embedding; no masking applied."""
    return nn.linear(params, "agent.head", embedding)


def embed_sequence(params, obs_seq, last_action_seq, h0):
    """Unrolled encoder over a padded batch.

    obs_seq: (T,B,obs_dim), last_action_seq: (T,B,A), h0: (B,E).
    Returns (e, cache) with e: (T,B,E).
    """
    x = np.concatenate([obs_seq, last_action_seq], axis=-1)
    pre = nn.linear(params, "agent.proj", x)
    proj = nn.relu(pre)
    e, gru_cache = nn.gru_seq(params, "agent.gru", proj, h0)
    return e, (x, pre, gru_cache)


def embed_sequence_backward(params, cache, de_out, grads):
    """Backward through embed_sequence; de_out: (T,B,E) per-step grads."""
    x, pre, gru_cache = cache
    dproj, dh0 = nn.gru_seq_backward(params, "agent.gru", gru_cache, de_out, grads)
    dpre = dproj * (pre > 0)
    dx = nn.linear_backward(params, "agent.proj", x, dpre, grads)
    return dx, dh0


def select_action(q, mask, epsilon, rng):
    """Masked epsilon-greedy: uniform over available with prob epsilon,
    else argmax over available utilities with ties to the lowest index."""
    mask = np.asarray(mask, dtype=bool)
    avail = np.flatnonzero(mask)
    if avail.size == 0:
        raise ValueError("no available actions")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(avail[rng.integers(avail.size)])
    masked = np.where(mask, q, -np.inf)
    return int(np.argmax(masked))

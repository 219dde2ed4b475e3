"""Contrastive role representations.

A query encoder and a momentum key encoder (identical MLPs, agent embedding
-> role vector) produce per-agent role representations.  Agents are
partitioned per timestep by K-means over their embeddings; same-cluster
pairs are positives and cross-cluster pairs negatives for a bilinear
InfoNCE loss.  Only the query side ever receives gradients; the key encoder
tracks it through a convex blend of parameter tensors.
"""

import numpy as np

from . import nn

QUERY = "query"
KEY = "key"
_PREFIX = {QUERY: "role_q", KEY: "role_k"}


def role_params(rng, embed_dim=128, role_dim=64, hidden_dim=64):
    """Query/key encoder MLPs plus the bilinear score matrix ``role.W``.

    The key encoder starts as an exact copy of the query encoder.
    """
    p = {}
    nn.add_linear(p, rng, "role_q.fc1", embed_dim, hidden_dim)
    nn.add_linear(p, rng, "role_q.fc2", hidden_dim, role_dim)
    for k in list(p.keys()):
        p[k.replace("role_q", "role_k")] = p[k].copy()
    p["role.W"] = nn.uniform_init(rng, (role_dim, role_dim), role_dim)
    return p


def encode_role(params, embedding, which=QUERY):
    """Deterministic forward through the chosen encoder.

    embedding: (..., embed_dim).  KEY outputs carry no gradient anywhere;
    there is simply no backward path through the key parameters.
    """
    prefix = _PREFIX[which]
    h = nn.relu(nn.linear(params, prefix + ".fc1", embedding))
    return nn.linear(params, prefix + ".fc2", h)


def encode_role_with_cache(params, embedding, which=QUERY):
    prefix = _PREFIX[which]
    pre = nn.linear(params, prefix + ".fc1", embedding)
    h = nn.relu(pre)
    z = nn.linear(params, prefix + ".fc2", h)
    return z, (embedding, pre, h)


def encode_role_backward(params, cache, dz, grads, which=QUERY):
    """Backward through the query encoder; returns d(embedding)."""
    prefix = _PREFIX[which]
    e, pre, h = cache
    dh = nn.linear_backward(params, prefix + ".fc2", h, dz, grads)
    dpre = dh * (pre > 0)
    return nn.linear_backward(params, prefix + ".fc1", e, dpre, grads)


def momentum_update(params, beta):
    """role_k <- beta * role_k + (1 - beta) * role_q, every tensor.

    Computed as q + beta * (k - q): algebraically identical, and the
    k == q fixed point holds bitwise.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    for k in list(params.keys()):
        if k.startswith("role_k."):
            qk = "role_q." + k[len("role_k.") :]
            if params[k].shape != params[qk].shape:
                raise ValueError(f"shape mismatch between {k} and {qk}")
            params[k] = params[qk] + beta * (params[k] - params[qk])


# ---------------------------------------------------------------------------
# K-means (Lloyd) with declared deterministic init and tie rules
# ---------------------------------------------------------------------------


def kmeans(points, k, seed, max_iters=50):
    """Cluster n points into k groups.

    Rules, all deterministic under ``seed``:
      * centroids start at k distinct points drawn uniformly at random;
      * assignment ties go to the lowest-index centroid;
      * an empty cluster is re-seeded at the point currently farthest from
        its own centroid (processed in ascending cluster index);
      * iterate until assignments are stable or ``max_iters``.

    Returns (labels, centroids, wss_history) where wss_history holds the
    within-cluster sum of squares after each centroid update.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    centroids = points[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    wss_history = []
    for _ in range(max_iters):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        own = d2[np.arange(n), new_labels]
        for j in range(k):
            if not np.any(new_labels == j):
                far = int(np.argmax(own))
                centroids[j] = points[far]
                new_labels[far] = j
                own[far] = 0.0
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = points[labels == j]
            centroids[j] = members.mean(axis=0)
        wss = float(
            (((points - centroids[labels]) ** 2).sum())
        )
        wss_history.append(wss)
    return labels, centroids, wss_history


# ---------------------------------------------------------------------------
# Bilinear InfoNCE over clustered agents
# ---------------------------------------------------------------------------


def _infonce_terms(query_reps, key_reps, labels, w):
    n = query_reps.shape[0]
    with np.errstate(invalid="ignore", over="ignore"):
        scores = query_reps @ w @ key_reps.T  # (n, n), s_ij = q_i . W k_j
    if not np.isfinite(scores).all():
        i, j = np.argwhere(~np.isfinite(scores))[0]
        raise FloatingPointError(f"non-finite score for pair ({i}, {j})")
    same = labels[None, :] == labels[:, None]
    pos = same & ~np.eye(n, dtype=bool)
    singleton = ~pos.any(axis=1)
    pos[singleton, singleton] = True  # lone agents pair with their own key
    neg = ~same
    allowed = pos | neg
    return scores, pos, allowed


def infonce_loss(query_reps, key_reps, labels, w):
    """Mean per-agent InfoNCE loss of the clustered bilinear form.

    Per agent: -log( sum_pos exp(s) / (sum_pos exp(s) + sum_neg exp(s)) ),
    evaluated via log-sum-exp.  With no negatives the loss is exactly 0.
    """
    labels = np.asarray(labels)
    scores, pos, allowed = _infonce_terms(query_reps, key_reps, labels, w)
    lse_all = _masked_lse(scores, allowed)
    lse_pos = _masked_lse(scores, pos)
    return float(np.mean(lse_all - lse_pos))


def infonce_loss_and_grads(query_reps, key_reps, labels, w):
    """Loss plus analytic gradients d(loss)/dW and d(loss)/d(query_reps).

    Key representations are contrastive constants: no gradient exists for
    them or for the key encoder by construction.
    """
    labels = np.asarray(labels)
    n = query_reps.shape[0]
    scores, pos, allowed = _infonce_terms(query_reps, key_reps, labels, w)
    p_all = _masked_softmax(scores, allowed)
    p_pos = _masked_softmax(scores, pos)
    lse_all = _masked_lse(scores, allowed)
    lse_pos = _masked_lse(scores, pos)
    loss = float(np.mean(lse_all - lse_pos))
    dscores = (p_all - p_pos) / n
    dw = query_reps.T @ dscores @ key_reps
    dq = dscores @ key_reps @ w.T
    return loss, dw, dq


def _masked_lse(scores, mask):
    neg_inf = np.where(mask, scores, -np.inf)
    m = neg_inf.max(axis=1, keepdims=True)
    return (m + np.log(np.sum(np.exp(neg_inf - m), axis=1, keepdims=True)))[:, 0]


def _masked_softmax(scores, mask):
    neg_inf = np.where(mask, scores, -np.inf)
    m = neg_inf.max(axis=1, keepdims=True)
    e = np.exp(neg_inf - m)
    return e / e.sum(axis=1, keepdims=True)

"""Diagnostic exports from a greedy evaluation episode.

Per timestep: agent embeddings, role representations, K-means cluster
labels, multi-head attention weights and an ASCII grid snapshot.  A 2-D
projection of embeddings and role vectors (PCA, labeled in the metadata)
supports scatter rendering; only data files are the contract here, plots
are up to the consumer.
"""

import json
import os

import numpy as np

from . import agent, mixer, roles
from .env import PRESETS, RoleArena, TraceWriter
from .trainer import derive_seed

DIAG_SCHEMA = "acorm-diagnostics/v1"


def greedy_episode_diagnostics(trainer, episode_seed, env=None, trace_path=None):
    """Roll one greedy episode capturing per-step internals."""
    cfg = trainer.cfg
    params = trainer.params
    env = env or RoleArena(PRESETS[cfg.env_preset](seed=cfg.env_seed))
    if env.obs_dim != trainer.env.obs_dim or env.n_actions != trainer.env.n_actions:
        raise ValueError("environment preset incompatible with checkpoint dimensions")
    tracer = TraceWriter(trace_path, env.cfg) if trace_path else None
    res = env.reset(episode_seed)
    n, A = env.n_agents, env.n_actions
    h = np.zeros((n, cfg.agent_embed_dim))
    tau = np.zeros(cfg.state_embed_dim)
    last_onehot = np.zeros((n, A))
    emb, zs, labels_all, alphas, renders, rewards, actions_all = [], [], [], [], [], [], []
    t = 0
    while not res.terminated:
        e = agent.embed_step(params, res.observations, last_onehot, h)
        z = roles.encode_role(params, e, roles.QUERY)
        k = min(cfg.cluster_k, n)
        labels, _, _ = roles.kmeans(e, k, derive_seed(cfg.seed, 8, t))
        if cfg.use_state_encoding:
            tau = mixer.encode_state(params, res.state, tau)
        if cfg.use_attention:
            _, alpha = mixer.attend(params, tau, z)
        else:
            alpha = np.full((cfg.attn_heads, n), np.nan)
        renders.append(env.render_text())
        q = agent.q_values(params, e)
        acts = [agent.select_action(q[i], res.available_actions[i], 0.0, None)
                for i in range(n)]
        res = env.step(acts)
        if tracer:
            tracer.write_step(env, acts, res)
        emb.append(e)
        zs.append(z)
        labels_all.append(labels)
        alphas.append(alpha)
        actions_all.append(acts)
        rewards.append(res.reward)
        h = e
        last_onehot = np.zeros((n, A))
        last_onehot[np.arange(n), acts] = 1.0
        t += 1
    if tracer:
        tracer.close()
    return {
        "embeddings": np.asarray(emb),  # (T, n, E)
        "role_reps": np.asarray(zs),  # (T, n, d)
        "labels": np.asarray(labels_all),  # (T, n)
        "attention": np.asarray(alphas),  # (T, H, n)
        "renders": renders,
        "actions": np.asarray(actions_all),
        "rewards": np.asarray(rewards),
        "won": res.won,
        "episode_seed": int(episode_seed),
    }


def pca_2d(points):
    """Distance-preserving 2-D projection via principal components."""
    flat = points.reshape(-1, points.shape[-1])
    centered = flat - flat.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros_like(vt[:1])])
    return (centered @ comps.T).reshape(points.shape[:-1] + (2,))


def export_diagnostics(out_dir, diag):
    """Write the diagnostic bundle; returns the list of files created."""
    os.makedirs(out_dir, exist_ok=True)
    files = []

    arrays_path = os.path.join(out_dir, "episode_arrays.npz")
    np.savez_compressed(
        arrays_path,
        embeddings=diag["embeddings"],
        role_reps=diag["role_reps"],
        labels=diag["labels"],
        attention=diag["attention"],
        actions=diag["actions"],
        rewards=diag["rewards"],
    )
    files.append(arrays_path)

    proj_path = os.path.join(out_dir, "projection_2d.npz")
    np.savez_compressed(
        proj_path,
        embeddings_2d=pca_2d(diag["embeddings"]),
        role_reps_2d=pca_2d(diag["role_reps"]),
    )
    files.append(proj_path)

    clusters_path = os.path.join(out_dir, "clusters.jsonl")
    with open(clusters_path, "w") as fh:
        for t in range(diag["labels"].shape[0]):
            fh.write(json.dumps({"t": t, "labels": diag["labels"][t].tolist()}) + "\n")
    files.append(clusters_path)

    grid_path = os.path.join(out_dir, "grid_snapshots.txt")
    with open(grid_path, "w") as fh:
        for t, snap in enumerate(diag["renders"]):
            fh.write(f"t={t}\n{snap}\n\n")
    files.append(grid_path)

    meta_path = os.path.join(out_dir, "meta.json")
    with open(meta_path, "w") as fh:
        json.dump(
            {
                "schema": DIAG_SCHEMA,
                "projection": "pca",
                "episode_seed": diag["episode_seed"],
                "won": bool(diag["won"]),
                "timesteps": int(diag["labels"].shape[0]),
                "attention_shape": list(diag["attention"].shape),
            },
            fh,
            indent=2,
        )
    files.append(meta_path)
    return files

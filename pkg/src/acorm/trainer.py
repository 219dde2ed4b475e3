"""Episode collection, TD learning with target networks, contrastive role
updates, and the end-to-end training loop.

One TD update runs per collected episode once the buffer holds a full
batch; the contrastive update fires every ``contrastive_interval`` TD
updates.  Target networks follow the online networks through a soft blend
(default) or a periodic hard copy.  Everything is deterministic given the
config seed: per-episode action RNGs, buffer sampling, K-means seeds and
evaluation seeds all derive from it.
"""

import json
import os

import numpy as np

from . import agent, mixer, nn, optim, roles
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .env import PRESETS, RoleArena
from .replay import EpisodeRecord, ReplayBuffer, assemble_batch

METRICS_SCHEMA = "acorm-metrics/v1"


def epsilon_by_step(cfg: TrainConfig, env_steps):
    """Linear anneal from epsilon_start to epsilon_finish, then constant."""
    frac = min(env_steps / cfg.epsilon_decay_steps, 1.0)
    return cfg.epsilon_start + frac * (cfg.epsilon_finish - cfg.epsilon_start)


def derive_seed(*parts):
    """Stable unsigned 32-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


class MetricsWriter:
    """Line-delimited JSON metrics: one header record, then
    {"step", "metric", "value", "seed"} records."""

    def __init__(self, path, config: TrainConfig):
        self.records = []
        self.seed = config.seed
        self.fh = open(path, "w") if path else None
        header = {"record": "header", "schema": METRICS_SCHEMA, "config": config.to_dict()}
        if self.fh:
            self.fh.write(json.dumps(header) + "\n")

    def log(self, step, metric, value):
        rec = {"step": int(step), "metric": metric, "value": float(value), "seed": self.seed}
        self.records.append(rec)
        if self.fh:
            self.fh.write(json.dumps(rec) + "\n")

    def close(self):
        if self.fh:
            self.fh.close()
            self.fh = None


class Trainer:
    def __init__(self, config: TrainConfig):
        config.validate()
        self.cfg = config
        self.env = RoleArena(PRESETS[config.env_preset](seed=config.env_seed))
        self.n_agents = self.env.n_agents
        self.n_actions = self.env.n_actions
        if config.cluster_k > self.n_agents:
            raise ValueError(
                f"cluster_k={config.cluster_k} exceeds n_agents={self.n_agents}"
            )
        self.cond_dim = self._conditioning_dim()
        rng = np.random.default_rng([config.seed, 0])
        self.params = self._build_params(rng)
        self.target = {k: v.copy() for k, v in self.params.items()}
        self.opt_td = optim.Adam(self._td_keys(), config.learning_rate, eps=config.adam_eps)
        self.opt_cl = optim.Adam(self._cl_keys(), config.contrastive_learning_rate,
                                 eps=config.adam_eps)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.env_steps = 0
        self.episode_count = 0
        self.td_updates = 0
        self.cl_updates = 0
        self.eval_count = 0
        self._sample_rng = np.random.default_rng([config.seed, 4])

    # -- construction --------------------------------------------------------

    def _conditioning_dim(self):
        cfg = self.cfg
        if cfg.use_attention:
            return cfg.attn_out_dim + cfg.state_embed_dim
        if cfg.use_state_encoding:
            return cfg.state_embed_dim
        return self.env.state_dim

    def _build_params(self, rng):
        cfg = self.cfg
        p = {}
        p.update(agent.agent_params(rng, self.env.obs_dim, self.n_actions,
                                    cfg.agent_embed_dim))
        p.update(roles.role_params(rng, cfg.agent_embed_dim, cfg.role_dim,
                                   cfg.role_hidden_dim))
        p.update(mixer.state_params(rng, self.env.state_dim, cfg.state_embed_dim))
        p.update(mixer.attention_params(rng, cfg.state_embed_dim, cfg.role_dim,
                                        cfg.attn_heads, cfg.attn_embed_dim,
                                        cfg.attn_out_dim))
        p.update(mixer.mixer_params(rng, self.n_agents, self.cond_dim,
                                    cfg.mix_hidden_dim, cfg.hyper_hidden_dim))
        return p

    def _td_keys(self):
        keys = [k for k in self.params if k.startswith(("agent.", "mixer."))]
        if self.cfg.use_state_encoding:
            keys += [k for k in self.params if k.startswith("state.")]
        if self.cfg.use_attention:
            keys += [k for k in self.params if k.startswith(("attn.", "role_q."))]
        return keys

    def _cl_keys(self):
        return [
            k for k in self.params
            if k.startswith(("role_q.", "agent.proj.", "agent.gru.")) or k == "role.W"
        ]

    # -- rollouts -------------------------------------------------------------

    def collect_episode(self, epsilon, episode_seed, params=None, env=None,
                        greedy=False) -> EpisodeRecord:
        """Roll one full episode under masked epsilon-greedy control."""
        params = self.params if params is None else params
        env = self.env if env is None else env
        rng = np.random.default_rng([int(episode_seed), 5])
        eps = 0.0 if greedy else epsilon
        res = env.reset(episode_seed)
        n, A = env.n_agents, env.n_actions
        h = np.zeros((n, self.cfg.agent_embed_dim))
        last_onehot = np.zeros((n, A))
        obs_l, state_l, avail_l = [res.observations], [res.state], [res.available_actions]
        act_l, rew_l, term_l = [], [], []
        while not res.terminated:
            e = agent.embed_step(params, obs_l[-1], last_onehot, h)
            q = agent.q_values(params, e)
            acts = [
                agent.select_action(q[i], res.available_actions[i], eps, rng)
                for i in range(n)
            ]
            res = env.step(acts)
            h = e
            last_onehot = np.zeros((n, A))
            last_onehot[np.arange(n), acts] = 1.0
            obs_l.append(res.observations)
            state_l.append(res.state)
            avail_l.append(res.available_actions)
            act_l.append(acts)
            rew_l.append(res.reward)
            term_l.append(res.terminated)
        return EpisodeRecord(
            obs=np.asarray(obs_l, dtype=np.float32),
            state=np.asarray(state_l, dtype=np.float32),
            avail=np.asarray(avail_l, dtype=bool),
            actions=np.asarray(act_l, dtype=np.int16),
            rewards=np.asarray(rew_l, dtype=np.float64),
            terminated=np.asarray(term_l, dtype=bool),
            won=res.won,
            episode_seed=int(episode_seed),
        )

    def evaluate(self, episodes=None, seed=0, params=None):
        """Greedy rollouts on fresh env instances; (win_rate, mean_return)."""
        episodes = self.cfg.evaluate_episodes if episodes is None else episodes
        if episodes <= 0:
            raise ValueError("evaluate needs at least one episode")
        params = self.params if params is None else params
        wins, returns = 0, []
        for i in range(episodes):
            env = RoleArena(PRESETS[self.cfg.env_preset](seed=self.cfg.env_seed))
            ep = self.collect_episode(0.0, derive_seed(seed, i), params=params,
                                      env=env, greedy=True)
            wins += int(ep.won)
            returns.append(ep.episode_return)
        return wins / episodes, float(np.mean(returns))

    # -- TD learning -----------------------------------------------------------

    def _unroll_values(self, params, batch):
        """Embeddings, per-action utilities and conditioning sequence.

        Returns (e, q_all, cond, caches) with e: (T+1,BN,E),
        q_all: (T+1,BN,A), cond: (T+1,B,C).
        """
        cfg = self.cfg
        Tp1, B, n, _ = batch["obs"].shape
        obs_flat = batch["obs"].reshape(Tp1, B * n, -1)
        la_flat = batch["last_onehot"].reshape(Tp1, B * n, -1)
        h0 = np.zeros((B * n, cfg.agent_embed_dim))
        e, cache_e = agent.embed_sequence(params, obs_flat, la_flat, h0)
        q_all = agent.q_values(params, e)
        caches = {"e": cache_e, "e_seq": e}
        if cfg.use_attention:
            z_flat, cache_z = roles.encode_role_with_cache(
                params, e.reshape(Tp1 * B * n, -1)
            )
            z3 = z_flat.reshape(Tp1 * B, n, -1)
            tau, cache_s = mixer.state_sequence(
                params, batch["state"], np.zeros((B, cfg.state_embed_dim))
            )
            tau_flat = tau.reshape(Tp1 * B, -1)
            tmha, _, cache_a = mixer.attend_with_cache(params, tau_flat, z3)
            cond = np.concatenate([tmha, tau_flat], axis=1).reshape(Tp1, B, -1)
            caches.update({"z": cache_z, "s": cache_s, "a": cache_a})
        elif cfg.use_state_encoding:
            tau, cache_s = mixer.state_sequence(
                params, batch["state"], np.zeros((B, cfg.state_embed_dim))
            )
            cond = tau
            caches["s"] = cache_s
        else:
            cond = batch["state"]
        return e, q_all, cond, caches

    def td_update(self, episodes, lr=None):
        """One optimizer step of masked TD learning on an episode batch."""
        if not episodes:
            raise ValueError("td_update needs a non-empty batch")
        batch = assemble_batch(episodes, self.n_actions)
        loss, grads = self.td_loss_and_grads(batch)
        td_keys = self.opt_td.keys
        optim.clip_grad_norm(grads, td_keys, self.cfg.grad_clip_norm)
        self.opt_td.step(self.params, grads, lr=lr)
        self.td_updates += 1
        if self.cfg.target_update_mode == "soft":
            optim.soft_update(self.target, self.params, self.cfg.target_soft_coeff)
        elif self.td_updates % self.cfg.target_update_interval == 0:
            optim.hard_update(self.target, self.params)
        return loss

    def td_loss_and_grads(self, batch):
        """Masked TD loss on an assembled batch plus parameter gradients."""
        cfg = self.cfg
        Tp1, B, n, A = batch["avail"].shape
        T = Tp1 - 1

        e, q_all, cond, caches = self._unroll_values(self.params, batch)
        _, qt_all, cond_t, _ = self._unroll_values(self.target, batch)

        # online Q_tot over chosen actions, t in [0, T)
        q4 = q_all[:T].reshape(T, B, n, A)
        ti, bi, ni = np.indices((T, B, n))
        q_chosen = q4[ti, bi, ni, batch["actions"]]
        qtot, cache_m = mixer.mix_with_cache(
            self.params, q_chosen.reshape(T * B, n), cond[:T].reshape(T * B, -1)
        )
        qtot = qtot.reshape(T, B)

        # target Q_tot over available-masked maxima, t in [1, T]
        qt4 = qt_all.reshape(Tp1, B, n, A)
        u_t = np.where(batch["avail"], qt4, -np.inf).max(axis=3)
        qtot_next = mixer.mix(
            self.target, u_t[1:].reshape(T * B, n), cond_t[1:].reshape(T * B, -1)
        ).reshape(T, B)

        y = batch["rewards"] + cfg.gamma * (1.0 - batch["terminated"]) * qtot_next
        td = qtot - y
        mask = batch["mask"]
        denom = mask.sum()
        loss = float((mask * td * td).sum() / denom)

        # backward
        grads = nn.zeros_like_params(self.params)
        dqtot = (2.0 * mask * td / denom).reshape(T * B)
        dq_chosen, dcond_valid = mixer.mix_backward(self.params, cache_m, dqtot, grads)

        dq_all = np.zeros_like(q_all)
        dq4 = dq_all[:T].reshape(T, B, n, A)
        dq4[ti, bi, ni, batch["actions"]] = dq_chosen.reshape(T, B, n)
        de = nn.linear_backward(self.params, "agent.head", e, dq_all, grads)

        dcond = np.zeros((Tp1, B, cond.shape[-1]))
        dcond[:T] = dcond_valid.reshape(T, B, -1)
        if cfg.use_attention:
            out_dim = cfg.attn_out_dim
            dtmha = dcond[:, :, :out_dim].reshape(Tp1 * B, -1)
            dtau_direct = dcond[:, :, out_dim:].reshape(Tp1 * B, -1)
            dtau_flat, dz3 = mixer.attend_backward(self.params, caches["a"], dtmha, grads)
            dtau = (dtau_flat + dtau_direct).reshape(Tp1, B, -1)
            de_roles = roles.encode_role_backward(
                self.params, caches["z"], dz3.reshape(Tp1 * B * n, -1), grads
            )
            de = de + de_roles.reshape(Tp1, B * n, -1)
            mixer.state_sequence_backward(self.params, caches["s"], dtau, grads)
        elif cfg.use_state_encoding:
            mixer.state_sequence_backward(self.params, caches["s"], dcond, grads)

        agent.embed_sequence_backward(self.params, caches["e"], de, grads)
        return loss, grads

    def online_qtot(self, batch):
        """Online-network Q_tot over chosen actions, shape (T, B); no grads."""
        _, q_all, cond, _ = self._unroll_values(self.params, batch)
        Tp1, B, n, A = batch["avail"].shape
        T = Tp1 - 1
        q4 = q_all[:T].reshape(T, B, n, A)
        ti, bi, ni = np.indices((T, B, n))
        q_chosen = q4[ti, bi, ni, batch["actions"]]
        return mixer.mix(
            self.params, q_chosen.reshape(T * B, n), cond[:T].reshape(T * B, -1)
        ).reshape(T, B)

    # -- contrastive role learning ----------------------------------------------

    def contrastive_samples(self, lengths):
        """Deterministic (episode, timestep) sample grid: up to
        ``contrastive_timesteps`` uniformly spaced steps per trajectory."""
        samples = []
        for b, L in enumerate(lengths):
            k = min(self.cfg.contrastive_timesteps, int(L))
            ts = np.unique(np.round(np.linspace(0, int(L) - 1, k)).astype(int))
            samples.extend((b, int(t)) for t in ts)
        return samples

    def contrastive_update(self, episodes, frozen_assignments=None, lr=None):
        """One optimizer step on the clustered InfoNCE loss.

        Re-embeds the batch under the current trajectory encoder, clusters
        each sampled timestep with K-means (or reuses ``frozen_assignments``,
        a list aligned with the sample grid), steps {query encoder, bilinear
        W, trajectory encoder}, then blends the key encoder toward the query.
        Returns (loss_before_step, info).
        """
        loss, grads, info = self.contrastive_loss_and_grads(
            episodes, frozen_assignments
        )
        self.opt_cl.step(self.params, grads, lr=lr)
        roles.momentum_update(self.params, self.cfg.momentum_beta)
        self.cl_updates += 1
        return loss, info

    def contrastive_loss_and_grads(self, episodes, frozen_assignments=None):
        """Clustered InfoNCE loss over the sample grid plus gradients for
        {query encoder, bilinear score matrix, trajectory encoder}."""
        cfg = self.cfg
        batch = assemble_batch(episodes, self.n_actions)
        Tp1, B, n, _ = batch["obs"].shape
        obs_flat = batch["obs"].reshape(Tp1, B * n, -1)
        la_flat = batch["last_onehot"].reshape(Tp1, B * n, -1)
        e, cache_e = agent.embed_sequence(
            self.params, obs_flat, la_flat, np.zeros((B * n, cfg.agent_embed_dim))
        )
        samples = self.contrastive_samples(batch["lengths"])
        S = len(samples)
        e_sel = np.stack([e[t, b * n : (b + 1) * n] for b, t in samples])
        zq, cache_z = roles.encode_role_with_cache(self.params, e_sel.reshape(S * n, -1))
        zq3 = zq.reshape(S, n, -1)
        zk3 = roles.encode_role(self.params, e_sel.reshape(S * n, -1), roles.KEY).reshape(
            S, n, -1
        )

        w = self.params["role.W"]
        total = 0.0
        dw = np.zeros_like(w)
        dzq3 = np.zeros_like(zq3)
        labels_list, dists_list = [], []
        for s, (b, t) in enumerate(samples):
            if frozen_assignments is not None:
                labels = np.asarray(frozen_assignments[s])
            else:
                seed = derive_seed(cfg.seed, 6, self.cl_updates, b, t)
                labels, centroids, _ = roles.kmeans(e_sel[s], cfg.cluster_k, seed)
                dists_list.append(
                    np.linalg.norm(e_sel[s] - centroids[labels], axis=1).tolist()
                )
            loss_s, dw_s, dzq_s = roles.infonce_loss_and_grads(zq3[s], zk3[s], labels, w)
            total += loss_s
            dw += dw_s
            dzq3[s] = dzq_s
            labels_list.append(labels.tolist())
        loss = total / S

        grads = nn.zeros_like_params(self.params)
        grads["role.W"] += dw / S
        de_sel = roles.encode_role_backward(
            self.params, cache_z, dzq3.reshape(S * n, -1) / S, grads
        ).reshape(S, n, -1)
        de = np.zeros_like(e)
        for s, (b, t) in enumerate(samples):
            de[t, b * n : (b + 1) * n] += de_sel[s]
        agent.embed_sequence_backward(self.params, cache_e, de, grads)

        info = {"samples": samples, "labels": labels_list, "centroid_dists": dists_list}
        return loss, grads, info

    # -- training loop -------------------------------------------------------------

    def train(self, out_dir=None, metrics_path=None):
        """Run the full loop; returns the list of metric records."""
        cfg = self.cfg
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
            if metrics_path is None:
                metrics_path = os.path.join(out_dir, "metrics.jsonl")
        writer = MetricsWriter(metrics_path, cfg)
        diag_fh = open(os.path.join(out_dir, "cl_diag.jsonl"), "w") if out_dir else None
        next_eval = cfg.evaluate_interval
        try:
            while self.env_steps < cfg.total_steps:
                eps = epsilon_by_step(cfg, self.env_steps)
                ep = self.collect_episode(eps, derive_seed(cfg.seed, 2, self.episode_count))
                self.buffer.add(ep)
                self.episode_count += 1
                self.env_steps += ep.length
                writer.log(self.env_steps, "episode_return", ep.episode_return)
                writer.log(self.env_steps, "epsilon", eps)

                if len(self.buffer) >= cfg.batch_size:
                    lr = self._lr_now(cfg.learning_rate)
                    batch = self.buffer.sample(cfg.batch_size, self._sample_rng)
                    loss = self.td_update(batch, lr=lr)
                    self._check_finite(loss, out_dir)
                    writer.log(self.env_steps, "td_loss", loss)
                    if cfg.use_contrastive and self.td_updates % cfg.contrastive_interval == 0:
                        cl_batch = self.buffer.sample(cfg.batch_size, self._sample_rng)
                        cl_loss, info = self.contrastive_update(
                            cl_batch, lr=self._lr_now(cfg.contrastive_learning_rate)
                        )
                        self._check_finite(cl_loss, out_dir)
                        writer.log(self.env_steps, "contrastive_loss", cl_loss)
                        if diag_fh:
                            diag_fh.write(json.dumps({
                                "step": self.env_steps,
                                "loss": cl_loss,
                                "samples": info["samples"],
                                "labels": info["labels"],
                                "centroid_dists": info["centroid_dists"],
                            }) + "\n")

                while self.env_steps >= next_eval:
                    win, ret = self.evaluate(seed=derive_seed(cfg.seed, 3, self.eval_count))
                    self.eval_count += 1
                    writer.log(self.env_steps, "test_win_rate", win)
                    writer.log(self.env_steps, "test_return", ret)
                    if out_dir:
                        save_checkpoint(
                            os.path.join(out_dir, "checkpoints", f"ckpt_{self.env_steps}.npz"),
                            self,
                        )
                    next_eval += cfg.evaluate_interval

            if cfg.total_steps > 0:
                win, ret = self.evaluate(seed=derive_seed(cfg.seed, 3, self.eval_count))
                self.eval_count += 1
                writer.log(self.env_steps, "final_win_rate", win)
                writer.log(self.env_steps, "final_return", ret)
            if out_dir:
                save_checkpoint(os.path.join(out_dir, "checkpoints", "ckpt_final.npz"), self)
        finally:
            writer.close()
            if diag_fh:
                diag_fh.close()
        return writer.records

    def _lr_now(self, base):
        if not self.cfg.use_lr_decay or self.cfg.total_steps <= 0:
            return base
        return base * max(0.0, 1.0 - self.env_steps / self.cfg.total_steps)

    def _check_finite(self, loss, out_dir):
        if np.isfinite(loss):
            return
        if out_dir:
            save_checkpoint(os.path.join(out_dir, "checkpoints", "ckpt_diagnostic.npz"), self)
        raise FloatingPointError(
            f"non-finite loss at env_step {self.env_steps}; diagnostic checkpoint written"
        )


def evaluate_random_policy(config: TrainConfig, episodes, seed):
    """Uniform-random-over-available baseline; (win_rate, mean_return)."""
    if episodes <= 0:
        raise ValueError("need at least one episode")
    wins, returns = 0, []
    for i in range(episodes):
        env = RoleArena(PRESETS[config.env_preset](seed=config.env_seed))
        rng = np.random.default_rng([derive_seed(seed, i), 7])
        res = env.reset(derive_seed(seed, i))
        total = 0.0
        while not res.terminated:
            acts = []
            for a in range(env.n_agents):
                avail = np.flatnonzero(res.available_actions[a])
                acts.append(int(avail[rng.integers(avail.size)]))
            res = env.step(acts)
            total += res.reward
        wins += int(res.won)
        returns.append(total)
    return wins / episodes, float(np.mean(returns))

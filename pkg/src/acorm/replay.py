"""Episode records and the FIFO replay buffer.

Episodes store one extra trailing entry of observations / state / masks (the
post-terminal view) so temporal-difference targets can always index t+1.
Storage is float32 to keep the 5000-episode buffer small; batches are
assembled time-major in float64 for the learner.  Padded steps carry mask 0
and, to keep the masked max well-defined, an availability row with only the
first action set.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class EpisodeRecord:
    obs: np.ndarray  # (L+1, n, obs_dim) float32
    state: np.ndarray  # (L+1, state_dim) float32
    avail: np.ndarray  # (L+1, n, A) bool
    actions: np.ndarray  # (L, n) int16
    rewards: np.ndarray  # (L,) float64
    terminated: np.ndarray  # (L,) bool
    won: bool
    episode_seed: int

    @property
    def length(self):
        return self.actions.shape[0]

    @property
    def episode_return(self):
        return float(self.rewards.sum())


class ReplayBuffer:
    """Ring buffer of episodes with FIFO eviction and uniform sampling."""

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._episodes = []
        self._next = 0

    def __len__(self):
        return len(self._episodes)

    def add(self, episode: EpisodeRecord):
        if len(self._episodes) < self.capacity:
            self._episodes.append(episode)
        else:
            self._episodes[self._next] = episode
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size, rng):
        """Uniform sample without replacement within the batch."""
        if batch_size < 1:
            raise ValueError("batch_size must be positive")
        if batch_size > len(self._episodes):
            raise ValueError(
                f"cannot sample {batch_size} episodes from buffer of {len(self._episodes)}"
            )
        idx = rng.choice(len(self._episodes), size=batch_size, replace=False)
        return [self._episodes[i] for i in idx]

    def episodes(self):
        return list(self._episodes)


def assemble_batch(episodes, n_actions):
    """Pad a list of EpisodeRecords into time-major float64 arrays.

    Returns a dict with:
      obs (T+1,B,n,obs), state (T+1,B,ds), avail (T+1,B,n,A) bool,
      last_onehot (T+1,B,n,A), actions (T,B,n) int64, rewards (T,B),
      terminated (T,B), mask (T,B), lengths (B,)
    """
    B = len(episodes)
    lengths = np.array([ep.length for ep in episodes])
    T = int(lengths.max())
    n = episodes[0].obs.shape[1]
    obs_dim = episodes[0].obs.shape[2]
    state_dim = episodes[0].state.shape[1]

    obs = np.zeros((T + 1, B, n, obs_dim))
    state = np.zeros((T + 1, B, state_dim))
    avail = np.zeros((T + 1, B, n, n_actions), dtype=bool)
    avail[:, :, :, 0] = True  # padded rows: STAY only, keeps maxes finite
    last_onehot = np.zeros((T + 1, B, n, n_actions))
    actions = np.zeros((T, B, n), dtype=np.int64)
    rewards = np.zeros((T, B))
    terminated = np.zeros((T, B))
    mask = np.zeros((T, B))

    for b, ep in enumerate(episodes):
        L = ep.length
        obs[: L + 1, b] = ep.obs
        state[: L + 1, b] = ep.state
        avail[: L + 1, b] = ep.avail
        actions[:L, b] = ep.actions
        rewards[:L, b] = ep.rewards
        terminated[:L, b] = ep.terminated
        mask[:L, b] = 1.0
        acts = ep.actions.astype(np.int64)
        rows = np.arange(n)
        for t in range(1, L + 1):
            last_onehot[t, b, rows, acts[t - 1]] = 1.0

    return {
        "obs": obs,
        "state": state,
        "avail": avail,
        "last_onehot": last_onehot,
        "actions": actions,
        "rewards": rewards,
        "terminated": terminated,
        "mask": mask,
        "lengths": lengths,
    }

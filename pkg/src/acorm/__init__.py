"""ACORM: attention-guided contrastive role representations for cooperative MARL.

The package bundles a deterministic grid-combat environment (RoleArena), a
recurrent per-agent utility network, contrastive role-representation learning
(per-timestep K-means partitioning, bilinear InfoNCE with a momentum key
encoder), an attention-guided monotonic mixing network, and a replay-based
trainer that ties them together.  All numerics are double-precision numpy
with hand-derived gradients; the hot recurrent kernels are numba-jitted with
a pure-numpy fallback (see `acorm.backend`).
"""

__version__ = "0.1.0"

from .env import EnvConfig, RoleArena, default_config, easy_config
from .config import TrainConfig

__all__ = ["EnvConfig", "RoleArena", "TrainConfig", "default_config", "easy_config"]

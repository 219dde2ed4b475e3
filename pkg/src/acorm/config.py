"""Training configuration: every tunable in one validated dataclass.

Defaults are the canonical hyperparameters for this method; anything that
diverges in an experiment shows up explicitly in the config snapshot that
the run manifest records.  Configs load from YAML key-value files and can
be overridden field-by-field from the CLI.
"""

from dataclasses import dataclass, field, fields, asdict

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # environment
    env_preset: str = "easy"
    env_seed: int = 0
    total_steps: int = 200_000
    seed: int = 0

    # optimization
    learning_rate: float = 6e-4
    contrastive_learning_rate: float = 8e-4
    use_lr_decay: bool = False  # optional linear decay to zero over total_steps
    batch_size: int = 32
    buffer_capacity: int = 5000
    gamma: float = 0.99
    grad_clip_norm: float = 10.0
    adam_eps: float = 1e-8

    # exploration
    epsilon_start: float = 1.0
    epsilon_finish: float = 0.02
    epsilon_decay_steps: int = 80_000

    # targets: soft blend per update (default) or periodic hard copy
    target_update_mode: str = "soft"
    target_soft_coeff: float = 0.005
    target_update_interval: int = 200

    # contrastive role learning
    contrastive_interval: int = 100  # T_cl, counted in Q-network updates
    cluster_k: int = 3
    momentum_beta: float = 0.005
    contrastive_timesteps: int = 8  # sampled timesteps per trajectory

    # evaluation
    evaluate_interval: int = 5000
    evaluate_episodes: int = 32

    # network dimensions
    agent_embed_dim: int = 128
    role_dim: int = 64
    role_hidden_dim: int = 64
    state_embed_dim: int = 64
    attn_heads: int = 4
    attn_embed_dim: int = 128
    attn_out_dim: int = 64
    hyper_hidden_dim: int = 32
    mix_hidden_dim: int = 32

    # ablation switches
    use_contrastive: bool = True
    use_attention: bool = True
    use_state_encoding: bool = True

    # bookkeeping
    deterministic: bool = True
    checkpoint_buffer: bool = False  # include replay buffer for exact resume
    run_name: str = "run"

    def validate(self):
        positive = [
            "learning_rate", "contrastive_learning_rate",
            "batch_size", "buffer_capacity", "grad_clip_norm",
            "epsilon_decay_steps", "contrastive_interval", "cluster_k",
            "evaluate_interval", "evaluate_episodes", "contrastive_timesteps",
            "agent_embed_dim", "role_dim", "role_hidden_dim",
            "state_embed_dim", "attn_heads", "attn_embed_dim", "attn_out_dim",
            "hyper_hidden_dim", "mix_hidden_dim", "target_update_interval",
        ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.total_steps < 0:
            raise ConfigError("total_steps must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError("gamma must be in [0, 1]")
        if not 0.0 <= self.momentum_beta < 1.0:
            raise ConfigError("momentum_beta must be in [0, 1)")
        if not 0.0 < self.target_soft_coeff <= 1.0:
            raise ConfigError("target_soft_coeff must be in (0, 1]")
        if not (0.0 <= self.epsilon_finish <= self.epsilon_start <= 1.0):
            raise ConfigError("need 0 <= epsilon_finish <= epsilon_start <= 1")
        if self.target_update_mode not in ("soft", "interval"):
            raise ConfigError("target_update_mode must be 'soft' or 'interval'")
        if self.attn_embed_dim % self.attn_heads:
            raise ConfigError("attn_embed_dim must be divisible by attn_heads")
        if self.use_attention and not self.use_state_encoding:
            raise ConfigError("use_attention requires use_state_encoding")
        from .env import PRESETS

        if self.env_preset not in PRESETS:
            raise ConfigError(
                f"unknown env_preset {self.env_preset!r}; valid: {sorted(PRESETS)}"
            )
        return self

    def to_dict(self):
        return asdict(self)

    @staticmethod
    def field_names():
        return [f.name for f in fields(TrainConfig)]

    @staticmethod
    def from_dict(d):
        known = set(TrainConfig.field_names())
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = TrainConfig(**d)
        cfg.validate()
        return cfg

    @staticmethod
    def load(path):
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}")
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a key-value mapping")
        return TrainConfig.from_dict(raw)

    def replace(self, **overrides):
        d = self.to_dict()
        d.update(overrides)
        return TrainConfig.from_dict(d)


# ablation suite: variant name -> switch overrides
ABLATION_VARIANTS = {
    "ACORM": {},
    "ACORM_w/o_CL": {"use_contrastive": False},
    "ACORM_w/o_MHA": {"use_attention": False},
    "ACORM_w/o_MHA(Vanilla)": {"use_attention": False, "use_state_encoding": False},
    "QMIX": {
        "use_contrastive": False,
        "use_attention": False,
        "use_state_encoding": False,
    },
}

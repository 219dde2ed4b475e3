"""Versioned checkpoint container.

A checkpoint is an ``.npz`` holding every named parameter tensor (online and
target), both Adam states, step counters and RNG state, plus the config
snapshot, all under a schema tag.  Loading validates shapes against a
freshly built model.  With ``checkpoint_buffer`` enabled the replay buffer
rides along so a resumed run continues bit-identically.
"""

import json

import numpy as np

from .config import TrainConfig
from .replay import EpisodeRecord

CHECKPOINT_SCHEMA = "acorm-checkpoint/v1"


def save_checkpoint(path, trainer, include_buffer=None):
    include_buffer = (
        trainer.cfg.checkpoint_buffer if include_buffer is None else include_buffer
    )
    arrays = {}
    for k, v in trainer.params.items():
        arrays[f"param/{k}"] = v
    for k, v in trainer.target.items():
        arrays[f"target/{k}"] = v
    for name, opt in (("opt_td", trainer.opt_td), ("opt_cl", trainer.opt_cl)):
        for k, v in opt.m.items():
            arrays[f"{name}/m/{k}"] = v
        for k, v in opt.v.items():
            arrays[f"{name}/v/{k}"] = v
    buffer_meta = []
    if include_buffer:
        for i, ep in enumerate(trainer.buffer.episodes()):
            arrays[f"buffer/{i}/obs"] = ep.obs
            arrays[f"buffer/{i}/state"] = ep.state
            arrays[f"buffer/{i}/avail"] = ep.avail
            arrays[f"buffer/{i}/actions"] = ep.actions
            arrays[f"buffer/{i}/rewards"] = ep.rewards
            arrays[f"buffer/{i}/terminated"] = ep.terminated
            buffer_meta.append({"won": bool(ep.won), "episode_seed": ep.episode_seed})
    meta = {
        "schema": CHECKPOINT_SCHEMA,
        "config": trainer.cfg.to_dict(),
        "counters": {
            "env_steps": trainer.env_steps,
            "episode_count": trainer.episode_count,
            "td_updates": trainer.td_updates,
            "cl_updates": trainer.cl_updates,
            "eval_count": trainer.eval_count,
        },
        "opt_t": {"opt_td": trainer.opt_td.t, "opt_cl": trainer.opt_cl.t},
        "sample_rng": trainer._sample_rng.bit_generator.state,
        "buffer": buffer_meta,
        "buffer_next": trainer.buffer._next,
        "param_shapes": {k: list(v.shape) for k, v in trainer.params.items()},
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez_compressed(path, **arrays)


def load_checkpoint(path):
    """Rebuild a Trainer from a checkpoint; raises on schema/shape mismatch."""
    from .trainer import Trainer

    try:
        data = np.load(path, allow_pickle=False)
    except Exception as exc:
        raise ValueError(f"cannot read checkpoint {path}: {exc}")
    if "__meta__" not in data:
        raise ValueError(f"checkpoint {path} has no metadata record")
    meta = json.loads(bytes(data["__meta__"]).decode())
    if meta.get("schema") != CHECKPOINT_SCHEMA:
        raise ValueError(
            f"checkpoint schema {meta.get('schema')!r} != {CHECKPOINT_SCHEMA!r}"
        )
    cfg = TrainConfig.from_dict(meta["config"])
    trainer = Trainer(cfg)
    for k, v in trainer.params.items():
        key = f"param/{k}"
        if key not in data:
            raise ValueError(f"checkpoint missing parameter {k}")
        if data[key].shape != v.shape:
            raise ValueError(
                f"shape mismatch for {k}: checkpoint {data[key].shape}, model {v.shape}"
            )
        trainer.params[k] = data[key].copy()
    for k in trainer.target:
        trainer.target[k] = data[f"target/{k}"].copy()
    for name, opt in (("opt_td", trainer.opt_td), ("opt_cl", trainer.opt_cl)):
        opt.t = int(meta["opt_t"][name])
        for k in opt.keys:
            mk, vk = f"{name}/m/{k}", f"{name}/v/{k}"
            if mk in data:
                opt.m[k] = data[mk].copy()
                opt.v[k] = data[vk].copy()
    c = meta["counters"]
    trainer.env_steps = int(c["env_steps"])
    trainer.episode_count = int(c["episode_count"])
    trainer.td_updates = int(c["td_updates"])
    trainer.cl_updates = int(c["cl_updates"])
    trainer.eval_count = int(c["eval_count"])
    trainer._sample_rng.bit_generator.state = meta["sample_rng"]
    for i, ep_meta in enumerate(meta["buffer"]):
        trainer.buffer.add(
            EpisodeRecord(
                obs=data[f"buffer/{i}/obs"].copy(),
                state=data[f"buffer/{i}/state"].copy(),
                avail=data[f"buffer/{i}/avail"].copy(),
                actions=data[f"buffer/{i}/actions"].copy(),
                rewards=data[f"buffer/{i}/rewards"].copy(),
                terminated=data[f"buffer/{i}/terminated"].copy(),
                won=bool(ep_meta["won"]),
                episode_seed=int(ep_meta["episode_seed"]),
            )
        )
    trainer.buffer._next = int(meta.get("buffer_next", 0))
    return trainer

"""Command-line harness.

Verbs: ``train``, ``ablate``, ``diagnose``, ``sweep-k``, ``eval``.  Flags
mirror the TrainConfig fields (``--cluster-k``, ``--learning-rate``, ...).
Exit codes: 0 ok, 1 config error, 2 runtime error.  The output root comes
from ``--out``, the ``ACORM_OUTPUT_ROOT`` environment variable, or
``./runs``.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import MISSING, fields

import numpy as np

from .config import ABLATION_VARIANTS, ConfigError, TrainConfig
from .env import PRESETS, RoleArena
from .manifest import build_manifest, load_manifest, write_manifest
from .trainer import Trainer


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; bad flags are config errors here (exit 1)
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _add_config_flags(parser):
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool" or isinstance(f.default, bool):
            parser.add_argument(flag, dest=f.name, default=None,
                                action=argparse.BooleanOptionalAction)
        else:
            typ = type(f.default) if f.default is not MISSING else str
            parser.add_argument(flag, dest=f.name, default=None, type=typ)


def _config_from_args(args):
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(TrainConfig)
        if getattr(args, f.name, None) is not None
    }
    return cfg.replace(**overrides) if overrides else cfg.validate()


def _out_root(args):
    return args.out or os.environ.get("ACORM_OUTPUT_ROOT") or "runs"


def _parse_int_list(text, what):
    try:
        return [int(x) for x in str(text).split(",") if x != ""]
    except ValueError:
        raise ConfigError(f"cannot parse {what} list from {text!r}")


def _safe_name(name):
    return "".join(c if c.isalnum() or c in "._-" else "-" for c in name)


def _final_win_rate(records):
    rates = [r["value"] for r in records if r["metric"] == "final_win_rate"]
    if rates:
        return rates[-1]
    rates = [r["value"] for r in records if r["metric"] == "test_win_rate"]
    return rates[-1] if rates else 0.0


def _bootstrap_ci(values, iters=10_000, seed=12345):
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return float(values[0]), float(values[0])
    rng = np.random.default_rng(seed)
    means = rng.choice(values, size=(iters, values.size), replace=True).mean(axis=1)
    return float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5))


def _run_one(cfg, seed, run_dir, variant=None):
    cfg_s = cfg.replace(seed=seed)
    os.makedirs(run_dir, exist_ok=True)
    manifest = build_manifest(cfg_s, [seed], run_dir, variant=variant)
    write_manifest(os.path.join(run_dir, "manifest.json"), manifest)
    trainer = Trainer(cfg_s)
    records = trainer.train(out_dir=run_dir)
    return records


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_train(args):
    if args.from_manifest:
        manifest = load_manifest(args.from_manifest)
        cfg = TrainConfig.from_dict(manifest["config"])
        seeds = manifest["seeds"]
    else:
        cfg = _config_from_args(args)
        seeds = _parse_int_list(args.seeds, "seed")
    root = os.path.join(_out_root(args), _safe_name(cfg.run_name))
    summary = {}
    for seed in seeds:
        run_dir = os.path.join(root, f"seed_{seed}")
        records = _run_one(cfg, seed, run_dir)
        summary[seed] = _final_win_rate(records)
        print(f"seed {seed}: final win rate {summary[seed]:.3f}  ({run_dir})")
    print(json.dumps({"final_win_rates": summary}))
    return 0


def cmd_ablate(args):
    cfg = _config_from_args(args)
    names = args.variants.split(",") if args.variants else list(ABLATION_VARIANTS)
    unknown = [v for v in names if v not in ABLATION_VARIANTS]
    if unknown:
        raise ConfigError(
            f"unknown variants {unknown}; valid: {list(ABLATION_VARIANTS)}"
        )
    seeds = _parse_int_list(args.seeds, "seed")
    root = os.path.join(_out_root(args), _safe_name(cfg.run_name) + "_ablation")
    os.makedirs(root, exist_ok=True)
    finals = {v: [] for v in names}
    curves = []
    for variant in names:
        switches = ABLATION_VARIANTS[variant]
        cfg_v = cfg.replace(**switches)
        for seed in seeds:
            run_dir = os.path.join(root, _safe_name(variant), f"seed_{seed}")
            records = _run_one(cfg_v, seed, run_dir, variant=variant)
            finals[variant].append(_final_win_rate(records))
            for r in records:
                if r["metric"] in ("test_win_rate", "final_win_rate"):
                    curves.append((variant, seed, r["step"], r["value"]))
            print(f"{variant} seed {seed}: final win rate {finals[variant][-1]:.3f}")

    comparison = os.path.join(root, "comparison.csv")
    with open(comparison, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "final_win_rate", "mean", "ci_lo", "ci_hi"])
        for variant in names:
            vals = finals[variant]
            lo, hi = _bootstrap_ci(vals)
            for seed, v in zip(seeds, vals):
                w.writerow([variant, seed, v, float(np.mean(vals)), lo, hi])
    curves_path = os.path.join(root, "curves.csv")
    with open(curves_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "step", "test_win_rate"])
        w.writerows(curves)
    print(f"comparison table: {comparison}")
    return 0


def cmd_diagnose(args):
    from .checkpoint import load_checkpoint
    from .diagnostics import export_diagnostics, greedy_episode_diagnostics

    trainer = load_checkpoint(args.checkpoint)
    env = None
    if args.preset:
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; valid: {sorted(PRESETS)}")
        env = RoleArena(PRESETS[args.preset](seed=trainer.cfg.env_seed))
    out_dir = args.out or os.path.join(_out_root(args), "diagnostics")
    os.makedirs(out_dir, exist_ok=True)
    trace_path = os.path.join(out_dir, "episode_trace.jsonl")
    diag = greedy_episode_diagnostics(trainer, args.episode_seed, env=env,
                                      trace_path=trace_path)
    files = export_diagnostics(out_dir, diag)
    for f in files + [trace_path]:
        print(f)
    return 0


def cmd_sweep_k(args):
    cfg = _config_from_args(args)
    k_values = _parse_int_list(args.k_values, "k")
    seeds = _parse_int_list(args.seeds, "seed")
    n_agents = RoleArena(PRESETS[cfg.env_preset](seed=cfg.env_seed)).n_agents
    bad = [k for k in k_values if not 1 <= k <= n_agents]
    if bad:
        raise ConfigError(f"k values {bad} outside [1, n_agents={n_agents}]")
    root = os.path.join(_out_root(args), _safe_name(cfg.run_name) + "_sweep_k")
    os.makedirs(root, exist_ok=True)
    rows = []
    for k in k_values:
        for seed in seeds:
            run_dir = os.path.join(root, f"k_{k}", f"seed_{seed}")
            records = _run_one(cfg.replace(cluster_k=k), seed, run_dir)
            for r in records:
                if r["metric"] in ("test_win_rate", "final_win_rate"):
                    rows.append((k, seed, r["step"], r["value"]))
            print(f"k={k} seed {seed}: final win rate {_final_win_rate(records):.3f}")
    sweep_path = os.path.join(root, "sweep.csv")
    with open(sweep_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "seed", "step", "test_win_rate"])
        w.writerows(rows)
    print(f"sweep data: {sweep_path}")
    return 0


def cmd_eval(args):
    from .checkpoint import load_checkpoint

    trainer = load_checkpoint(args.checkpoint)
    win, ret = trainer.evaluate(episodes=args.episodes, seed=args.seed)
    print(json.dumps({"win_rate": win, "mean_return": ret, "episodes": args.episodes}))
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="acorm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one run per seed")
    p_train.add_argument("--config", help="YAML config file")
    p_train.add_argument("--seeds", default="0", help="comma-separated seed list")
    p_train.add_argument("--out", help="output root directory")
    p_train.add_argument("--from-manifest", help="re-run from a manifest file")
    _add_config_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_abl = sub.add_parser("ablate", help="run the ablation variant suite")
    p_abl.add_argument("--config")
    p_abl.add_argument("--variants", help="comma-separated variant names")
    p_abl.add_argument("--seeds", default="0")
    p_abl.add_argument("--out")
    _add_config_flags(p_abl)
    p_abl.set_defaults(func=cmd_ablate)

    p_diag = sub.add_parser("diagnose", help="export episode diagnostics")
    p_diag.add_argument("--checkpoint", required=True)
    p_diag.add_argument("--preset", help="environment preset override")
    p_diag.add_argument("--episode-seed", type=int, default=0)
    p_diag.add_argument("--out")
    p_diag.set_defaults(func=cmd_diagnose)

    p_sweep = sub.add_parser("sweep-k", help="train across cluster counts")
    p_sweep.add_argument("--config")
    p_sweep.add_argument("--k-values", default="2,3,4,5")
    p_sweep.add_argument("--seeds", default="0")
    p_sweep.add_argument("--out")
    _add_config_flags(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep_k)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint greedily")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--episodes", type=int, default=32)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

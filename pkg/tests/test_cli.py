import json

import numpy as np

from acorm import cli

FAST = [
    "--total-steps", "60", "--batch-size", "2", "--buffer-capacity", "20",
    "--evaluate-interval", "50", "--evaluate-episodes", "1",
    "--contrastive-interval", "5",
]


def run_cli(args):
    return cli.main(args)


def test_missing_config_file_names_path(tmp_path, capsys):
    rc = run_cli(["train", "--config", "/nope/missing.yaml", "--out", str(tmp_path)])
    assert rc == 1
    assert "/nope/missing.yaml" in capsys.readouterr().err


def test_unknown_config_field_rejected(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("not_a_field: 3\n")
    rc = run_cli(["train", "--config", str(cfg), "--out", str(tmp_path)])
    assert rc == 1
    assert "not_a_field" in capsys.readouterr().err


def test_invalid_flag_value_is_config_error(tmp_path, capsys):
    rc = run_cli(["train", "--gamma", "1.5", "--out", str(tmp_path)] + FAST)
    assert rc == 1
    assert "gamma" in capsys.readouterr().err


def test_train_writes_manifest_with_override(tmp_path):
    rc = run_cli([
        "train", "--env-preset", "default", "--cluster-k", "5",
        "--total-steps", "15", "--batch-size", "2", "--buffer-capacity", "10",
        "--evaluate-interval", "1000", "--evaluate-episodes", "1",
        "--run-name", "ovr", "--out", str(tmp_path),
    ])
    assert rc == 0
    manifest = json.load(open(tmp_path / "ovr" / "seed_0" / "manifest.json"))
    assert manifest["config"]["cluster_k"] == 5
    assert manifest["schema"] == "acorm-manifest/v1"
    assert len(manifest["code_hash"]) == 64


def test_train_metrics_schema_and_win_rate(tmp_path):
    rc = run_cli(["train", "--run-name", "m", "--out", str(tmp_path)] + FAST)
    assert rc == 0
    lines = [json.loads(l) for l in open(tmp_path / "m" / "seed_0" / "metrics.jsonl")]
    assert lines[0]["record"] == "header"
    assert lines[0]["schema"] == "acorm-metrics/v1"
    body = lines[1:]
    for rec in body:
        assert set(rec) == {"step", "metric", "value", "seed"}
    assert any(r["metric"] == "test_win_rate" for r in body)
    assert any(r["metric"] == "final_win_rate" for r in body)


def test_train_from_manifest_reproduces_metrics(tmp_path):
    rc = run_cli(["train", "--run-name", "a", "--out", str(tmp_path / "one")] + FAST)
    assert rc == 0
    manifest = tmp_path / "one" / "a" / "seed_0" / "manifest.json"
    rc = run_cli(["train", "--from-manifest", str(manifest),
                  "--out", str(tmp_path / "two")])
    assert rc == 0
    m1 = (tmp_path / "one" / "a" / "seed_0" / "metrics.jsonl").read_bytes()
    m2 = (tmp_path / "two" / "a" / "seed_0" / "metrics.jsonl").read_bytes()
    assert m1 == m2


def test_ablate_unknown_variant_lists_valid(tmp_path, capsys):
    rc = run_cli(["ablate", "--variants", "ACORM,NOPE", "--out", str(tmp_path)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "NOPE" in err and "QMIX" in err


def test_ablate_qmix_manifest_switches_false(tmp_path):
    rc = run_cli(["ablate", "--variants", "QMIX", "--run-name", "ab",
                  "--out", str(tmp_path)] + FAST)
    assert rc == 0
    root = tmp_path / "ab_ablation"
    mpath = root / "QMIX" / "seed_0" / "manifest.json"
    manifest = json.load(open(mpath))
    assert manifest["variant"] == "QMIX"
    cfgd = manifest["config"]
    assert not cfgd["use_contrastive"]
    assert not cfgd["use_attention"]
    assert not cfgd["use_state_encoding"]
    assert (root / "comparison.csv").exists()
    assert (root / "curves.csv").exists()


def test_ablate_comparison_table_columns(tmp_path):
    rc = run_cli(["ablate", "--variants", "QMIX,ACORM_w/o_CL", "--run-name", "cmp",
                  "--out", str(tmp_path)] + FAST)
    assert rc == 0
    rows = open(tmp_path / "cmp_ablation" / "comparison.csv").read().splitlines()
    assert rows[0] == "variant,seed,final_win_rate,mean,ci_lo,ci_hi"
    assert len(rows) == 3


def test_sweep_k_rejects_oversized_k_before_launch(tmp_path, capsys):
    rc = run_cli(["sweep-k", "--k-values", "2,9", "--out", str(tmp_path)] + FAST)
    assert rc == 1
    assert "9" in capsys.readouterr().err
    assert not (tmp_path / "run_sweep_k").exists()


def test_sweep_k_degenerate_k1_and_output_rows(tmp_path):
    rc = run_cli(["sweep-k", "--k-values", "1", "--run-name", "sw",
                  "--out", str(tmp_path)] + FAST)
    assert rc == 0
    rows = open(tmp_path / "sw_sweep_k" / "sweep.csv").read().splitlines()
    assert rows[0] == "k,seed,step,test_win_rate"
    assert all(r.startswith("1,0,") for r in rows[1:])
    assert len(rows) > 1


def test_eval_and_diagnose_roundtrip(tmp_path):
    rc = run_cli(["train", "--run-name", "d", "--out", str(tmp_path),
                  "--checkpoint-buffer"] + FAST)
    assert rc == 0
    ckpt = tmp_path / "d" / "seed_0" / "checkpoints" / "ckpt_final.npz"
    assert ckpt.exists()
    rc = run_cli(["eval", "--checkpoint", str(ckpt), "--episodes", "2"])
    assert rc == 0
    out = tmp_path / "diag"
    rc = run_cli(["diagnose", "--checkpoint", str(ckpt), "--episode-seed", "4",
                  "--out", str(out)])
    assert rc == 0
    arrays = np.load(out / "episode_arrays.npz")
    T, H, n = arrays["attention"].shape
    assert (H, n) == (4, 3)
    assert arrays["embeddings"].shape == (T, 3, 128)
    assert arrays["role_reps"].shape == (T, 3, 64)
    assert arrays["labels"].shape == (T, 3)
    proj = np.load(out / "projection_2d.npz")
    assert proj["embeddings_2d"].shape == (T, 3, 2)
    meta = json.load(open(out / "meta.json"))
    assert meta["projection"] == "pca"
    lines = [json.loads(l) for l in open(out / "clusters.jsonl")]
    assert len(lines) == T
    trace = [json.loads(l) for l in open(out / "episode_trace.jsonl")]
    assert trace[0]["schema"] == "rolearena-trace/v1"
    assert len(trace) == T + 1


def test_diagnose_corrupt_checkpoint_runtime_error(tmp_path, capsys):
    bad = tmp_path / "bad.npz"
    bad.write_bytes(b"not a checkpoint")
    rc = run_cli(["diagnose", "--checkpoint", str(bad)])
    assert rc == 2


def test_output_root_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("ACORM_OUTPUT_ROOT", str(tmp_path / "envroot"))
    rc = run_cli(["train", "--run-name", "e", "--total-steps", "12",
                  "--batch-size", "2", "--buffer-capacity", "10",
                  "--evaluate-interval", "1000", "--evaluate-episodes", "1"])
    assert rc == 0
    assert (tmp_path / "envroot" / "e" / "seed_0" / "metrics.jsonl").exists()

"""End-to-end tests for the command-line front end: config parsing,
precedence, determinism, output schemas, and the run manifest."""

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from plexpress.cli import ConfigError, parse_config, read_config_file

TINY_GROWTH = ["--widths", "8", "--sigma-w2", "4", "--depth", "4",
               "--replicas", "3", "--input-dim", "8"]


def run_cli(args, env=None):
    import os
    full_env = dict(os.environ)
    full_env.update(env or {})
    return subprocess.run([sys.executable, "-m", "plexpress.cli"] + args,
                          capture_output=True, text=True, env=full_env)


# ---------------------------------------------------------------------------
# config parsing


def test_minimal_config_fills_defaults():
    cfg = parse_config("traj-growth", {"widths": "32", "sigma_w2": "4", "depth": "12"}, {})
    assert cfg["sigma_b2"] == 1.0
    assert cfg["replicas"] == 50
    assert cfg["seed"] == 0


def test_unknown_key_named_in_error():
    with pytest.raises(ConfigError, match="bogus_key"):
        parse_config("traj-growth", {"bogus_key": "1"}, {})


def test_flag_overrides_file_value():
    cfg = parse_config("traj-growth", {"sigma_w2": "4"}, {"sigma_w2": "16"})
    assert cfg["sigma_w2"] == (16.0,)


def test_malformed_value_has_field_precise_error():
    with pytest.raises(ConfigError, match="depth"):
        parse_config("traj-growth", {"depth": "twelve"}, {})


def test_config_file_format(tmp_path):
    path = tmp_path / "cfg"
    path.write_text("# comment\nwidths = 8, 16  # trailing comment\n\ndepth = 3\n")
    values = read_config_file(path)
    assert values == {"widths": "8, 16", "depth": "3"}
    bad = tmp_path / "bad"
    bad.write_text("oops\n")
    with pytest.raises(ConfigError, match="key = value"):
        read_config_file(bad)


# ---------------------------------------------------------------------------
# end-to-end runs


def _digests(out_dir):
    man = json.loads((Path(out_dir) / "manifest.json").read_text())
    return {o["path"]: o["sha256"] for o in man["outputs"]}


def test_traj_growth_outputs_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        r = run_cli(["traj-growth", "--out", str(out)] + TINY_GROWTH)
        assert r.returncode == 0, r.stderr
    assert _digests(a) == _digests(b)
    for name in ("lengths.csv", "ratios.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_manifest_digests_match_files(tmp_path):
    out = tmp_path / "g"
    assert run_cli(["traj-growth", "--out", str(out)] + TINY_GROWTH).returncode == 0
    for name, digest in _digests(out).items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest


def test_csv_headers(tmp_path):
    out = tmp_path / "g"
    run_cli(["traj-growth", "--out", str(out)] + TINY_GROWTH)
    assert (out / "lengths.csv").read_text().splitlines()[0] == \
        "width,sigma_w2,sigma_b2,depth,replica,layer,length"
    assert (out / "ratios.csv").read_text().splitlines()[0] == \
        "width,sigma_w2,sigma_b2,depth,layer,mean_ratio,std_ratio,bound_factor"


def test_grid_cardinality(tmp_path):
    out = tmp_path / "g"
    r = run_cli(["traj-growth", "--out", str(out), "--widths", "4,8",
                 "--sigma-w2", "2,4", "--depth", "3", "--replicas", "2",
                 "--input-dim", "8"])
    assert r.returncode == 0
    rows = (out / "ratios.csv").read_text().splitlines()[1:]
    configs = {tuple(row.split(",")[:2]) for row in rows}
    assert len(configs) == 4
    assert len(rows) == 4 * 3  # per config: one row per layer


def test_overwrite_protection(tmp_path):
    out = tmp_path / "g"
    assert run_cli(["traj-growth", "--out", str(out)] + TINY_GROWTH).returncode == 0
    r = run_cli(["traj-growth", "--out", str(out)] + TINY_GROWTH)
    assert r.returncode == 4
    assert "overwrite" in r.stderr
    r = run_cli(["traj-growth", "--out", str(out), "--overwrite"] + TINY_GROWTH)
    assert r.returncode == 0


def test_config_error_exit_code(tmp_path):
    cfg = tmp_path / "cfg"
    cfg.write_text("bogus_key = 1\n")
    r = run_cli(["traj-growth", "--out", str(tmp_path / "x"), "--config", str(cfg)])
    assert r.returncode == 2
    assert "bogus_key" in r.stderr


def test_regions_outputs(tmp_path):
    out = tmp_path / "r"
    r = run_cli(["regions", "--out", str(out), "--width", "4", "--resolution", "128"])
    assert r.returncode == 0
    summary = json.loads((out / "summary.jsonl").read_text())
    assert summary["count"] == 11  # 1 + k + k(k-1)/2 at k=4
    grid_rows = (out / "grid.csv").read_text().splitlines()
    assert len(grid_rows) == 128


def test_boundaries_csv_schema(tmp_path):
    out = tmp_path / "b"
    r = run_cli(["boundaries", "--out", str(out), "--width", "4", "--depth", "2",
                 "--resolution", "64"])
    assert r.returncode == 0
    lines = (out / "boundaries.csv").read_text().splitlines()
    assert lines[0] == "layer,neuron,polyline,x,y"
    assert len(lines) > 1


def test_dichotomies_csv_schema(tmp_path):
    out = tmp_path / "d"
    r = run_cli(["dichotomies", "--out", str(out), "--s", "4", "--width", "6",
                 "--depth", "3", "--samples", "50", "--layers", "1,2"])
    assert r.returncode == 0
    lines = (out / "dichotomies.csv").read_text().splitlines()
    assert lines[0] == "mode,layer,s,samples,distinct"
    assert len(lines) == 4  # header + all-mode + two layer rows


def test_train_freeze_shares_init_digest(tmp_path):
    out = tmp_path / "tf"
    r = run_cli(["train-freeze", "--out", str(out), "--width", "16", "--depth", "3",
                 "--steps", "30", "--checkpoint-every", "30", "--data-subset", "500",
                 "--layers", "1,2,3"],
                env={"PLEXPRESS_CACHE_DIR": str(tmp_path / "cache")})
    assert r.returncode == 0, r.stderr
    man = json.loads((out / "manifest.json").read_text())
    assert "init_digest" in man
    files = {o["path"] for o in man["outputs"]}
    assert {"accuracy_layer1.csv", "accuracy_layer2.csv", "accuracy_layer3.csv",
            "summary.csv"} <= files


def test_train_traj_checkpoint_csv(tmp_path):
    out = tmp_path / "tt"
    r = run_cli(["train-traj", "--out", str(out), "--width", "16", "--depth", "3",
                 "--steps", "30", "--checkpoint-every", "15", "--data-subset", "500"],
                env={"PLEXPRESS_CACHE_DIR": str(tmp_path / "cache")})
    assert r.returncode == 0, r.stderr
    lines = (out / "checkpoints.csv").read_text().splitlines()
    assert lines[0] == "step,split,accuracy,loss,layer,probe_kind,length"
    steps = {line.split(",")[0] for line in lines[1:]}
    assert steps == {"0", "15", "30"}
    assert (out / "network.json").exists()


def test_plot_data_requires_manifest(tmp_path):
    (tmp_path / "empty").mkdir()
    r = run_cli(["plot-data", "--out", str(tmp_path / "p"),
                 "--input-dir", str(tmp_path / "empty")])
    assert r.returncode == 2

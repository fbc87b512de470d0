"""Render tests: each figure kind renders from a real experiment directory
produced by the plexpress CLI, and schema/manifest problems fail loudly."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from figplots import cli as fp


@pytest.fixture(scope="session")
def experiment_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("exp")
    cache = {"PLEXPRESS_CACHE_DIR": str(base / "cache")}

    def run(args, env=None):
        import os
        full = dict(os.environ)
        full.update(env or {})
        r = subprocess.run([sys.executable, "-m", "plexpress.cli"] + args,
                           capture_output=True, text=True, env=full)
        assert r.returncode == 0, r.stderr

    run(["traj-growth", "--out", str(base / "growth"), "--widths", "8",
         "--sigma-w2", "4,8", "--depth", "4", "--replicas", "3",
         "--input-dim", "8"])
    run(["transitions", "--out", str(base / "transitions"), "--widths", "8",
         "--sigma-w2", "2", "--depth", "3", "--replicas", "2",
         "--input-dim", "8"])
    run(["boundaries", "--out", str(base / "boundaries"), "--width", "4",
         "--depth", "3", "--resolution", "128"])
    run(["train-traj", "--out", str(base / "train-traj"), "--width", "16",
         "--depth", "3", "--steps", "30", "--checkpoint-every", "10",
         "--data-subset", "500"], env=cache)
    run(["train-freeze", "--out", str(base / "train-freeze"), "--width", "16",
         "--depth", "3", "--steps", "20", "--checkpoint-every", "20",
         "--data-subset", "500", "--layers", "1,2"], env=cache)
    return base


KIND_TO_DIR = {
    "growth": "growth",
    "ratios": "growth",
    "transitions": "transitions",
    "boundaries": "boundaries",
    "train-traj": "train-traj",
    "train-freeze": "train-freeze",
}


@pytest.mark.parametrize("kind", sorted(fp.FIGURE_KINDS))
def test_kind_renders(kind, experiment_dirs, tmp_path):
    out = tmp_path / f"{kind}.svg"
    spec = fp.FigureSpec(kind=kind, input_dir=experiment_dirs / KIND_TO_DIR[kind],
                         output_path=out)
    fp.render(spec)
    assert out.exists() and out.stat().st_size > 0


def test_growth_uses_log_scale(experiment_dirs, tmp_path, monkeypatch):
    captured = {}
    original = fp._finish

    def spy(fig, spec, digest):
        captured["yscale"] = fig.axes[0].get_yscale()
        original(fig, spec, digest)

    monkeypatch.setattr(fp, "_finish", spy)
    fp.render(fp.FigureSpec("growth", experiment_dirs / "growth",
                            tmp_path / "g.svg"))
    assert captured["yscale"] == "log"


def test_ratios_contains_dashed_bound_series(experiment_dirs, tmp_path):
    out = tmp_path / "r.svg"
    fp.render(fp.FigureSpec("ratios", experiment_dirs / "growth", out))
    assert "stroke-dasharray" in out.read_text()


def test_manifest_digest_embedded(experiment_dirs, tmp_path):
    import hashlib
    out = tmp_path / "g.svg"
    fp.render(fp.FigureSpec("growth", experiment_dirs / "growth", out))
    digest = hashlib.sha256(
        (experiment_dirs / "growth" / "manifest.json").read_bytes()).hexdigest()
    assert digest[:16] in out.read_text()


def test_incompatible_kind_rejected(experiment_dirs, tmp_path):
    with pytest.raises(fp.RenderError, match="not\\s+compatible"):
        fp.render(fp.FigureSpec("growth", experiment_dirs / "transitions",
                                tmp_path / "x.svg"))


def test_missing_manifest_rejected(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(fp.RenderError, match="manifest"):
        fp.render(fp.FigureSpec("growth", tmp_path / "empty", tmp_path / "x.svg"))


def test_schema_mismatch_names_column(experiment_dirs, tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    src = experiment_dirs / "growth"
    (bad / "manifest.json").write_text((src / "manifest.json").read_text())
    lines = (src / "lengths.csv").read_text().splitlines()
    header = lines[0].replace("length", "len")
    (bad / "lengths.csv").write_text("\n".join([header] + lines[1:]) + "\n")
    with pytest.raises(fp.RenderError, match="length"):
        fp.render(fp.FigureSpec("growth", bad, tmp_path / "x.svg"))


def test_empty_data_rows_rejected(experiment_dirs, tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    src = experiment_dirs / "growth"
    (bad / "manifest.json").write_text((src / "manifest.json").read_text())
    header = (src / "lengths.csv").read_text().splitlines()[0]
    (bad / "lengths.csv").write_text(header + "\n")
    with pytest.raises(fp.RenderError, match="no data rows"):
        fp.render(fp.FigureSpec("growth", bad, tmp_path / "x.svg"))
    assert not (tmp_path / "x.svg").exists()  # no empty image written

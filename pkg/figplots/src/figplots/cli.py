"""Render figures from plexpress experiment output directories.

Six figure kinds, one per invocation:

  boundaries   per-layer activation-boundary overlays (multi-panel)
  growth       mean trajectory length vs. layer, log-scale length axis
  ratios       per-layer growth ratios with the bound factor as a dashed line
  transitions  transitions vs. trajectory length scatter
  train-traj   per-layer probe lengths per checkpoint, start->end color ramp
  train-freeze accuracy curves, one per trained layer

These scripts contain no numerical logic: every mark comes straight from a
CSV column emitted by the experiment CLI. The input directory must contain a
``manifest.json`` of a compatible experiment kind; its sha256 digest is
embedded in the rendered figure (caption and image metadata) for provenance.

Usage: figplots <kind> --in <dir> --out <file> [--format svg|png] [--log-y]
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402


class RenderError(Exception):
    pass


@dataclass
class FigureSpec:
    kind: str
    input_dir: Path
    output_path: Path
    format: str = "svg"
    log_y: bool = False
    style: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# input handling


def _load_manifest(spec: FigureSpec, expected_kinds) -> tuple[dict, str]:
    path = Path(spec.input_dir) / "manifest.json"
    if not path.exists():
        raise RenderError(f"{spec.input_dir}: missing manifest.json")
    manifest = json.loads(path.read_text())
    if manifest.get("kind") not in expected_kinds:
        raise RenderError(
            f"{spec.input_dir}: experiment kind {manifest.get('kind')!r} is not "
            f"compatible with figure kind {spec.kind!r} (expected one of {sorted(expected_kinds)})")
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    return manifest, digest


def _load_csv(spec: FigureSpec, name: str, required_columns) -> dict:
    """Column-oriented CSV load; empty cells become NaN in numeric columns."""
    path = Path(spec.input_dir) / name
    if not path.exists():
        raise RenderError(f"{path}: file missing")
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise RenderError(f"{path}: empty file") from None
        for col in required_columns:
            if col not in header:
                raise RenderError(f"{path}: missing column '{col}'")
        rows = list(reader)
    if not rows:
        raise RenderError(f"{path}: no data rows")
    columns = {}
    for j, col in enumerate(header):
        cells = [row[j] for row in rows]
        try:
            columns[col] = np.array([float(c) if c != "" else np.nan for c in cells])
        except ValueError:
            columns[col] = np.array(cells)
    return columns


def _finish(fig, spec: FigureSpec, digest: str) -> None:
    fig.text(0.01, 0.005, f"manifest sha256: {digest[:16]}", fontsize=5,
             color="0.55", family="monospace")
    spec.output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output_path, format=spec.format,
                metadata={"Description": f"manifest-sha256={digest}"})
    plt.close(fig)


def _config_label(width, sw2):
    return f"k={int(width)}, σ_w²={sw2:g}"


# ---------------------------------------------------------------------------
# figure kinds


def _render_boundaries(spec: FigureSpec) -> None:
    _, digest = _load_manifest(spec, {"boundaries"})
    cols = _load_csv(spec, "boundaries.csv", ("layer", "neuron", "polyline", "x", "y"))
    layers = sorted(int(v) for v in np.unique(cols["layer"]))
    fig, axes = plt.subplots(1, len(layers), figsize=(3.2 * len(layers), 3.4),
                             squeeze=False)
    cmap = plt.get_cmap("tab10")
    for panel, up_to in enumerate(layers):
        ax = axes[0][panel]
        for layer in layers:
            if layer > up_to:
                continue
            sel = cols["layer"] == layer
            # first layer drawn in gray, deeper layers colored
            color = "0.6" if layer == layers[0] else cmap((layer - 1) % 10)
            segments = []
            for pid in np.unique(cols["polyline"][sel]):
                s = sel & (cols["polyline"] == pid)
                segments.append(np.stack([cols["x"][s], cols["y"][s]], axis=1))
            ax.add_collection(LineCollection(segments, colors=[color],
                                             linewidths=0.9))
        ax.autoscale_view()
        ax.set_aspect("equal")
        ax.set_title(f"layers 1..{up_to}" if up_to > 1 else "layer 1", fontsize=9)
    fig.suptitle("activation boundaries in the input plane", fontsize=11)
    _finish(fig, spec, digest)


def _render_growth(spec: FigureSpec) -> None:
    _, digest = _load_manifest(spec, {"traj-growth"})
    cols = _load_csv(spec, "lengths.csv",
                     ("width", "sigma_w2", "replica", "layer", "length"))
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    configs = sorted(set(zip(cols["width"], cols["sigma_w2"])))
    for width, sw2 in configs:
        sel = (cols["width"] == width) & (cols["sigma_w2"] == sw2)
        layers = sorted(int(v) for v in np.unique(cols["layer"][sel]))
        means = [cols["length"][sel & (cols["layer"] == d)].mean() for d in layers]
        ax.plot(layers, means, marker="o", markersize=3,
                label=_config_label(width, sw2))
    ax.set_yscale("log")
    ax.set_xlabel("layer")
    ax.set_ylabel("trajectory length")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, spec, digest)


def _render_ratios(spec: FigureSpec) -> None:
    _, digest = _load_manifest(spec, {"traj-growth"})
    cols = _load_csv(spec, "ratios.csv",
                     ("width", "sigma_w2", "layer", "mean_ratio", "std_ratio",
                      "bound_factor"))
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    cmap = plt.get_cmap("tab10")
    configs = sorted(set(zip(cols["width"], cols["sigma_w2"])))
    for i, (width, sw2) in enumerate(configs):
        sel = (cols["width"] == width) & (cols["sigma_w2"] == sw2)
        layers = cols["layer"][sel]
        order = np.argsort(layers)
        ax.errorbar(layers[order], cols["mean_ratio"][sel][order],
                    yerr=cols["std_ratio"][sel][order], marker="o", markersize=3,
                    color=cmap(i), label=_config_label(width, sw2))
        bound = cols["bound_factor"][sel][order]
        ax.plot(layers[order], bound, linestyle="--", color=cmap(i), linewidth=1)
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("layer")
    ax.set_ylabel("length ratio layer d / layer d-1")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, spec, digest)


def _render_transitions(spec: FigureSpec) -> None:
    _, digest = _load_manifest(spec, {"transitions"})
    cols = _load_csv(spec, "transitions.csv",
                     ("width", "sigma_w2", "layer", "length", "transitions"))
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for width, sw2 in sorted(set(zip(cols["width"], cols["sigma_w2"]))):
        sel = (cols["width"] == width) & (cols["sigma_w2"] == sw2)
        ax.scatter(cols["length"][sel], cols["transitions"][sel], s=8, alpha=0.6,
                   label=_config_label(width, sw2))
    if spec.log_y:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("trajectory length")
    ax.set_ylabel("transitions")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, spec, digest)


def _render_train_traj(spec: FigureSpec) -> None:
    _, digest = _load_manifest(spec, {"train-traj"})
    cols = _load_csv(spec, "checkpoints.csv",
                     ("step", "split", "accuracy", "loss", "layer", "probe_kind",
                      "length"))
    probe_rows = cols["probe_kind"] != ""
    if not probe_rows.any():
        raise RenderError("checkpoints.csv: no probe rows")
    kinds = sorted(set(cols["probe_kind"][probe_rows]))
    steps = sorted(set(cols["step"][probe_rows]))
    # checkpoint color ramp: red at the start of training, purple at the end
    cmap = matplotlib.colors.LinearSegmentedColormap.from_list(
        "start-end", ["#d62728", "#7b2d8e"])
    fig, axes = plt.subplots(1, len(kinds), figsize=(4.2 * len(kinds), 3.6),
                             squeeze=False)
    for panel, kind in enumerate(kinds):
        ax = axes[0][panel]
        for i, step in enumerate(steps):
            sel = probe_rows & (cols["probe_kind"] == kind) & (cols["step"] == step)
            layers = cols["layer"][sel]
            order = np.argsort(layers)
            frac = i / max(len(steps) - 1, 1)
            ax.plot(layers[order], cols["length"][sel][order],
                    color=cmap(frac), linewidth=1.1)
        if spec.log_y:
            ax.set_yscale("log")
        ax.set_xlabel("layer")
        ax.set_ylabel("probe trajectory length")
        ax.set_title(f"{kind} probe", fontsize=10)
    sm = plt.cm.ScalarMappable(cmap=cmap,
                               norm=plt.Normalize(min(steps), max(steps)))
    fig.colorbar(sm, ax=axes[0].tolist(), label="train step", shrink=0.85)
    _finish(fig, spec, digest)


def _render_train_freeze(spec: FigureSpec) -> None:
    manifest, digest = _load_manifest(spec, {"train-freeze"})
    names = [o["path"] for o in manifest["outputs"]
             if o["path"].startswith("accuracy_layer")]
    if not names:
        raise RenderError("manifest lists no accuracy_layer*.csv files")
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    for name in sorted(names):
        cols = _load_csv(spec, name, ("step", "train_accuracy", "test_accuracy",
                                      "loss"))
        label = name[len("accuracy_layer"):-len(".csv")]
        line, = ax.plot(cols["step"], cols["test_accuracy"],
                        label=f"layer {label} (test)")
        ax.plot(cols["step"], cols["train_accuracy"], linestyle=":",
                color=line.get_color(), linewidth=1)
    ax.set_xlabel("train step")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _finish(fig, spec, digest)


FIGURE_KINDS = {
    "boundaries": _render_boundaries,
    "growth": _render_growth,
    "ratios": _render_ratios,
    "transitions": _render_transitions,
    "train-traj": _render_train_traj,
    "train-freeze": _render_train_freeze,
}


def render(spec: FigureSpec) -> Path:
    """Render one figure; read-only over the experiment directory."""
    if spec.kind not in FIGURE_KINDS:
        raise RenderError(f"unknown figure kind {spec.kind!r}")
    if spec.format not in ("svg", "png"):
        raise RenderError(f"unsupported format {spec.format!r}")
    FIGURE_KINDS[spec.kind](spec)
    return spec.output_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figplots",
        description="Render figures from plexpress experiment directories.")
    parser.add_argument("kind", choices=sorted(FIGURE_KINDS))
    parser.add_argument("--in", dest="input_dir", required=True)
    parser.add_argument("--out", dest="output_path", required=True)
    parser.add_argument("--format", choices=("svg", "png"), default=None)
    parser.add_argument("--log-y", action="store_true")
    args = parser.parse_args(argv)
    fmt = args.format or (Path(args.output_path).suffix.lstrip(".") or "svg")
    spec = FigureSpec(kind=args.kind, input_dir=Path(args.input_dir),
                      output_path=Path(args.output_path), format=fmt,
                      log_y=args.log_y)
    try:
        render(spec)
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: experiment configuration, deterministic
orchestration, and CSV/JSON artifact emission.

One invocation runs one experiment kind into one output directory, which
afterwards contains the kind's CSV files plus a ``manifest.json`` recording
the effective config, toolkit version, PRNG algorithm, timestamps, and a
sha256 digest of every emitted file. Output bytes are fully determined by
(config, seed, version); the ``--threads`` flag is a performance hint only.

Config files are plain ``key = value`` lines (``#`` comments allowed);
command-line flags override file values. Unknown keys are rejected.

Exit codes: 0 ok, 2 config error, 3 numeric non-convergence or training
divergence (partial outputs plus manifest are still written), 4 I/O error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, datagen, exmeasures, netcore, trainlab, trajkit
from .netcore import Activation, Architecture, InitSpec, PRNG_ID
from .trajkit import RefinePolicy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_IO = 4


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config schema and parsing


@dataclass(frozen=True)
class Field:
    name: str
    type: str          # int | float | str | bool | int_list | float_list | str_list
    default: object


_COMMON = (Field("seed", "int", 0), Field("threads", "int", 1))

SCHEMAS = {
    "traj-growth": _COMMON + (
        Field("widths", "int_list", (32, 128)),
        Field("sigma_w2", "float_list", (4.0, 16.0)),
        Field("sigma_b2", "float", 1.0),
        Field("depth", "int", 12),
        Field("replicas", "int", 50),
        Field("input_dim", "int", 32),
        Field("refine_tol", "float", 1e-3),
        Field("refine_cap", "int", 2**20),
    ),
    "transitions": _COMMON + (
        Field("widths", "int_list", (8, 64)),
        Field("sigma_w2", "float_list", (2.0, 8.0)),
        Field("sigma_b2", "float", 1.0),
        Field("depth", "int", 10),
        Field("replicas", "int", 20),
        Field("input_dim", "int", 32),
        Field("refine_tol", "float", 1e-3),
        Field("refine_cap", "int", 2**20),
    ),
    "regions": _COMMON + (
        Field("width", "int", 4),
        Field("depth", "int", 1),
        Field("activation", "str", "relu"),
        Field("sigma_w2", "float", 4.0),
        Field("sigma_b2", "float", 1.0),
        Field("resolution", "int", 1024),
    ),
    "boundaries": _COMMON + (
        Field("width", "int", 8),
        Field("depth", "int", 3),
        Field("activation", "str", "relu"),
        Field("sigma_w2", "float", 4.0),
        Field("sigma_b2", "float", 1.0),
        Field("resolution", "int", 512),
    ),
    "dichotomies": _COMMON + (
        Field("s", "int", 8),
        Field("width", "int", 8),
        Field("depth", "int", 6),
        Field("input_dim", "int", 10),
        Field("sigma_w2", "float", 16.0),
        Field("sigma_b2", "float", 1.0),
        Field("samples", "int", 10000),
        Field("layers", "int_list", (1, 5)),
    ),
    "train-traj": _COMMON + (
        Field("sigma_w2", "float", 3.0),
        Field("sigma_b2", "float", 0.01),
        Field("depth", "int", 6),
        Field("width", "int", 100),
        Field("learning_rate", "float", 0.001),
        Field("optimizer", "str", "adam"),
        Field("batch_size", "int", 64),
        Field("steps", "int", 3000),
        Field("checkpoint_every", "int", 300),
        Field("data_subset", "int", 10000),
        Field("data_dir", "str", ""),
    ),
    "train-freeze": _COMMON + (
        Field("sigma_w2", "float", 2.0),
        Field("sigma_b2", "float", 0.01),
        Field("depth", "int", 6),
        Field("width", "int", 100),
        Field("learning_rate", "float", 0.05),
        Field("optimizer", "str", "sgd"),
        Field("batch_size", "int", 64),
        Field("steps", "int", 3000),
        Field("checkpoint_every", "int", 300),
        Field("data_subset", "int", 10000),
        Field("data_dir", "str", ""),
        Field("layers", "str_list", ("1", "2", "3", "4", "5")),
    ),
    "plot-data": _COMMON + (
        Field("input_dir", "str", ""),
    ),
}


def _coerce(field: Field, raw):
    try:
        if field.type == "int":
            return int(raw)
        if field.type == "float":
            return float(raw)
        if field.type == "bool":
            if isinstance(raw, bool):
                return raw
            if str(raw).lower() in ("true", "1", "yes"):
                return True
            if str(raw).lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if field.type == "str":
            return str(raw)
        if field.type.endswith("_list"):
            if isinstance(raw, (list, tuple)):
                parts = list(raw)
            else:
                parts = [p.strip() for p in str(raw).split(",") if p.strip()]
            elem = {"int_list": int, "float_list": float, "str_list": str}[field.type]
            return tuple(elem(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field '{field.name}': cannot parse {raw!r} as {field.type}") from exc
    raise ConfigError(f"field '{field.name}': unknown type {field.type}")


def read_config_file(path) -> dict:
    """Parse a ``key = value`` config file; '#' starts a comment."""
    values = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, val = line.partition("=")
        values[key.strip()] = val.strip()
    return values


def parse_config(kind: str, file_values: dict | None, flag_values: dict | None) -> dict:
    """Validate file + flag values against the kind's schema; flags win.
    Unknown keys raise with the offending key named; defaults fill gaps."""
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    schema = {f.name: f for f in SCHEMAS[kind]}
    merged = dict(file_values or {})
    for key, val in (flag_values or {}).items():
        if val is not None:
            merged[key] = val
    config = {}
    for key, raw in merged.items():
        if key == "kind":
            continue
        if key not in schema:
            raise ConfigError(f"unknown key '{key}' for experiment kind '{kind}'")
        config[key] = _coerce(schema[key], raw)
    for name, fld in schema.items():
        config.setdefault(name, fld.default)
    config["kind"] = kind
    return config


# ---------------------------------------------------------------------------
# CSV / manifest emission


def fmt(x) -> str:
    """Numeric cells at 17 significant digits so float64 values round-trip."""
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(c) for c in row) for row in rows)
    Path(path).write_text("\n".join(lines) + "\n")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: Path, config: dict, files, started: float,
                   flags: dict | None = None) -> Path:
    """Written atomically (tmp + rename) at run end; digests match the files."""
    manifest = {
        "kind": config["kind"],
        "config": {k: v for k, v in sorted(config.items()) if k != "kind"},
        "version": __version__,
        "prng": PRNG_ID,
        "started": started,
        "finished": time.time(),
        "outputs": [{"path": Path(f).name, "sha256": _sha256(f)} for f in sorted(map(str, files))],
    }
    manifest.update(flags or {})
    path = out_dir / "manifest.json"
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    tmp.rename(path)
    return path


# ---------------------------------------------------------------------------
# experiment runners (one per kind); each returns (files, converged)


def _run_traj_growth(config, out_dir: Path):
    length_rows, ratio_rows = [], []
    converged = True
    for k in config["widths"]:
        for sw2 in config["sigma_w2"]:
            stats = trajkit.growth_config_stats(
                int(k), sw2, config["sigma_b2"], config["depth"], config["replicas"],
                config["seed"], input_dim=config["input_dim"],
                refine=RefinePolicy(rel_tol=config["refine_tol"],
                                    max_points=config["refine_cap"]),
                threads=config["threads"])
            converged &= stats.all_converged
            for r in range(config["replicas"]):
                for layer in range(config["depth"] + 1):
                    length_rows.append((k, sw2, config["sigma_b2"], config["depth"],
                                        r, layer, stats.lengths[r, layer]))
            for layer in range(1, config["depth"] + 1):
                ratio_rows.append((k, sw2, config["sigma_b2"], config["depth"], layer,
                                   stats.ratio_mean[layer - 1], stats.ratio_std[layer - 1],
                                   stats.bound_factor))
    f1 = out_dir / "lengths.csv"
    f2 = out_dir / "ratios.csv"
    write_csv(f1, ("width", "sigma_w2", "sigma_b2", "depth", "replica", "layer", "length"),
              length_rows)
    write_csv(f2, ("width", "sigma_w2", "sigma_b2", "depth", "layer",
                   "mean_ratio", "std_ratio", "bound_factor"), ratio_rows)
    return [f1, f2], converged


def _run_transitions(config, out_dir: Path):
    rows = []
    converged = True
    for k in config["widths"]:
        for sw2 in config["sigma_w2"]:
            arch = Architecture(config["input_dim"], (int(k),) * config["depth"], 1)
            for r in range(config["replicas"]):
                seed_r = trajkit.replica_seed(config["seed"], r)
                net = netcore.sample_network(arch, InitSpec(sw2, config["sigma_b2"], seed_r))
                x0, x1 = trajkit.random_unit_endpoints(seed_r, config["input_dim"])
                traj = trajkit.circular_interpolation(x0, x1, 1024)
                refine = RefinePolicy(rel_tol=config["refine_tol"],
                                      max_points=config["refine_cap"])
                profile = trajkit.layer_length_profile(net, traj, refine)
                count = exmeasures.count_transitions(net, traj, refine=refine)
                converged &= profile.converged and count.converged
                for layer in range(1, config["depth"] + 1):
                    rows.append((k, sw2, config["sigma_b2"], r, layer,
                                 profile.layer_lengths[layer - 1],
                                 int(count.per_layer[layer - 1])))
    f = out_dir / "transitions.csv"
    write_csv(f, ("width", "sigma_w2", "sigma_b2", "replica", "layer",
                  "length", "transitions"), rows)
    return [f], converged


def _regions_network(config):
    k, depth = config["width"], config["depth"]
    act = Activation(config["activation"])
    if depth == 1 and act is Activation.RELU:
        return exmeasures.line_arrangement_network(k, config["seed"])
    arch = Architecture(2, (k,) * depth, 1, activation=act)
    return netcore.sample_network(arch, InitSpec(config["sigma_w2"], config["sigma_b2"],
                                                 config["seed"]))


def _run_regions(config, out_dir: Path):
    net = _regions_network(config)
    window = exmeasures.Window2D()
    region_map = exmeasures.count_regions_2d(net, window, config["resolution"])
    f1 = out_dir / "grid.csv"
    np.savetxt(f1, region_map.ids, fmt="%d", delimiter=",")
    f2 = out_dir / "summary.jsonl"
    summary = {k: v for k, v in sorted(config.items()) if k != "kind"}
    summary["count"] = int(region_map.count)
    f2.write_text(json.dumps(summary) + "\n")
    return [f1, f2], True


def _run_boundaries(config, out_dir: Path):
    net = _regions_network(config)
    window = exmeasures.Window2D()
    bset = exmeasures.boundary_contours(net, window, config["resolution"])
    rows = []
    for polyline_id, curve in enumerate(bset.curves):
        for x, y in curve.points:
            rows.append((curve.layer, curve.neuron, polyline_id, x, y))
    f = out_dir / "boundaries.csv"
    write_csv(f, ("layer", "neuron", "polyline", "x", "y"), rows)
    return [f], True


def _run_dichotomies(config, out_dir: Path):
    arch = Architecture(config["input_dim"], (config["width"],) * config["depth"], 1)
    init = InitSpec(config["sigma_w2"], config["sigma_b2"], config["seed"])
    inputs = exmeasures.unit_sphere_points(config["s"], config["input_dim"], config["seed"])
    rows = []
    report = exmeasures.count_dichotomies(arch, init, inputs, config["samples"], mode="all")
    rows.append(("all", "", config["s"], config["samples"], report.distinct))
    for layer in config["layers"]:
        report = exmeasures.count_dichotomies(arch, init, inputs, config["samples"],
                                              mode="layer", layer=int(layer))
        rows.append(("layer", int(layer), config["s"], config["samples"], report.distinct))
    f = out_dir / "dichotomies.csv"
    write_csv(f, ("mode", "layer", "s", "samples", "distinct"), rows)
    return [f], True


def _load_datasets(config):
    if config["data_dir"]:
        paths = datagen.resolve_mnist(config["data_dir"])
    else:
        paths = datagen.resolve_mnist_or_synthetic()
    train = trainlab.load_mnist_idx(paths["train-images"], paths["train-labels"])
    test = trainlab.load_mnist_idx(paths["t10k-images"], paths["t10k-labels"], split="test")
    return train, test


def _train_config(config, freeze_mask=None) -> trainlab.TrainConfig:
    arch = Architecture(784, (config["width"],) * config["depth"], 10)
    init = InitSpec(config["sigma_w2"], config["sigma_b2"], config["seed"])
    return trainlab.TrainConfig(
        arch=arch, init=init, learning_rate=config["learning_rate"],
        batch_size=config["batch_size"], steps=config["steps"],
        freeze_mask=freeze_mask, checkpoint_every=config["checkpoint_every"],
        data_subset=config["data_subset"], seed=config["seed"],
        optimizer=config["optimizer"])


def _checkpoint_rows(run: trainlab.TrainRun):
    """One run CSV: metric rows (split/accuracy/loss filled) and probe rows
    (probe_kind/layer/length filled); unused cells are empty."""
    rows = []
    for cp in run.checkpoints:
        rows.append((cp.step, "train", cp.train_accuracy, cp.loss, "", "", ""))
        rows.append((cp.step, "test", cp.test_accuracy, "", "", "", ""))
        for kind, lengths in sorted(cp.probe_lengths.items()):
            for i, length in enumerate(lengths):
                rows.append((cp.step, "", "", "", i + 1, kind, length))
    return rows


_CHECKPOINT_HEADER = ("step", "split", "accuracy", "loss", "layer", "probe_kind", "length")


def _run_train_traj(config, out_dir: Path):
    train_ds, test_ds = _load_datasets(config)
    run = trainlab.train(_train_config(config), train_ds, test_ds)
    f1 = out_dir / "checkpoints.csv"
    write_csv(f1, _CHECKPOINT_HEADER, _checkpoint_rows(run))
    f2 = out_dir / "network.json"
    netcore.save_network(run.final_network, f2)
    return [f1, f2], not run.diverged


def _run_train_freeze(config, out_dir: Path):
    train_ds, test_ds = _load_datasets(config)
    base = _train_config(config)
    keys = [k if k == "output" else int(k) for k in config["layers"]]
    result = trainlab.remaining_depth_experiment(base, keys, train_ds, test_ds)
    files, converged = [], True
    summary_rows = [("baseline", result.baseline_train_accuracy,
                     result.baseline_test_accuracy)]
    for key in keys:
        run = result.runs[key]
        converged &= not run.diverged
        f = out_dir / f"accuracy_layer{key}.csv"
        write_csv(f, ("step", "train_accuracy", "test_accuracy", "loss"),
                  [(cp.step, cp.train_accuracy, cp.test_accuracy, cp.loss)
                   for cp in run.checkpoints])
        files.append(f)
        summary_rows.append((key, run.checkpoints[-1].train_accuracy,
                             run.checkpoints[-1].test_accuracy))
    fs = out_dir / "summary.csv"
    write_csv(fs, ("layer", "train_accuracy", "test_accuracy"), summary_rows)
    files.append(fs)
    return files, converged, {"init_digest": result.init_digest}


def _run_plot_data(config, out_dir: Path):
    """Re-emit plot-ready derived series from an existing experiment dir."""
    src = Path(config["input_dir"])
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise ConfigError(f"{src}: no manifest.json (not an experiment directory)")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("kind") != "traj-growth":
        raise ConfigError(f"plot-data supports traj-growth directories, got {manifest.get('kind')!r}")
    header, *rows = (src / "lengths.csv").read_text().splitlines()
    cols = header.split(",")
    data = np.array([[float(v) for v in row.split(",")] for row in rows])
    iw, isw, il, iv = (cols.index(c) for c in ("width", "sigma_w2", "layer", "length"))
    out_rows = []
    for k, sw2 in sorted({(r[iw], r[isw]) for r in data}):
        sel = data[(data[:, iw] == k) & (data[:, isw] == sw2)]
        for layer in sorted({int(r[il]) for r in sel}):
            vals = sel[sel[:, il] == layer][:, iv]
            out_rows.append((int(k), sw2, layer, float(np.mean(np.log(vals)))))
    f = out_dir / "growth_series.csv"
    write_csv(f, ("width", "sigma_w2", "layer", "mean_log_length"), out_rows)
    return [f], True


RUNNERS = {
    "traj-growth": _run_traj_growth,
    "transitions": _run_transitions,
    "regions": _run_regions,
    "boundaries": _run_boundaries,
    "dichotomies": _run_dichotomies,
    "train-traj": _run_train_traj,
    "train-freeze": _run_train_freeze,
    "plot-data": _run_plot_data,
}


def run_experiment(config: dict, out_dir, overwrite: bool = False) -> int:
    """Run one experiment into out_dir; returns the process exit code."""
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not overwrite:
        print(f"error: output directory {out_dir} is not empty (use --overwrite)",
              file=sys.stderr)
        return EXIT_IO
    started = time.time()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        result = RUNNERS[config["kind"]](config, out_dir)
        files, converged = result[0], result[1]
        extra = result[2] if len(result) > 2 else {}
        if not converged:
            extra["converged"] = False
        write_manifest(out_dir, config, files, started, extra)
    except ConfigError:
        raise
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    if not converged:
        print("warning: run flagged non-converged/diverged; see manifest.json",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


_FLAG_TYPES = {"int": int, "float": float, "str": str, "bool": str,
               "int_list": str, "float_list": str, "str_list": str}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plexpress",
        description="Expressivity experiments for deep piecewise-linear networks.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind, schema in SCHEMAS.items():
        p = sub.add_parser(kind)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--overwrite", action="store_true",
                       help="allow writing into a non-empty directory")
        for fld in schema:
            p.add_argument("--" + fld.name.replace("_", "-"),
                           dest=fld.name, type=_FLAG_TYPES[fld.type], default=None,
                           help=f"{fld.type} (default {fld.default})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        skip = {"kind", "config", "out", "overwrite"}
        flag_values = {k: v for k, v in vars(args).items() if k not in skip}
        config = parse_config(args.kind, file_values, flag_values)
        return run_experiment(config, args.out, overwrite=args.overwrite)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (netcore.DimensionError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

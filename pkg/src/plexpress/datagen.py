"""Synthetic image datasets in the exact on-disk formats the loaders consume.

This exists so training experiments and loader tests can run fully offline:
the generator writes IDX image/label files (and CIFAR-10-style binary
batches) that are byte-compatible with the real distributions. Samples are
noisy, randomly shifted variants of per-class smooth prototype images, which
makes the classification task non-trivial but learnable. Point the
PLEXPRESS_DATA_DIR environment variable at a directory with the real MNIST
files to run the experiments on actual data instead.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np
from scipy import ndimage


def write_idx_images(path, images: np.ndarray) -> None:
    """images: (N, rows, cols) uint8."""
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">iiii", 2051, n, rows, cols))
        f.write(np.ascontiguousarray(images, dtype=np.uint8).tobytes())


def write_idx_labels(path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">ii", 2049, len(labels)))
        f.write(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())


def _class_prototypes(rng, classes: int, size: int) -> np.ndarray:
    """Smooth random fields, one per class, normalized to [0, 1]."""
    protos = rng.uniform(size=(classes, size, size))
    protos = ndimage.gaussian_filter(protos, sigma=(0, size / 8, size / 8))
    lo = protos.min(axis=(1, 2), keepdims=True)
    hi = protos.max(axis=(1, 2), keepdims=True)
    return (protos - lo) / (hi - lo)


def _render_split(rng, protos: np.ndarray, classes: int, n: int, size: int,
                  max_shift: int, noise: float):
    modes = len(protos) // classes
    labels = rng.integers(0, classes, size=n)
    mode = rng.integers(0, modes, size=n)
    images = np.empty((n, size, size))
    shifts = rng.integers(-max_shift, max_shift + 1, size=(n, 2))
    amps = rng.uniform(0.6, 1.0, size=n)
    for i in range(n):
        proto = protos[labels[i] * modes + mode[i]]
        images[i] = np.roll(proto, tuple(shifts[i]), axis=(0, 1)) * amps[i]
    images += rng.normal(0.0, noise, size=images.shape)
    np.clip(images, 0.0, 1.0, out=images)
    return (images * 255).round().astype(np.uint8), labels.astype(np.uint8)


def make_synthetic_mnist(out_dir, n_train: int = 12000, n_test: int = 2000,
                         seed: int = 0, size: int = 28, classes: int = 10,
                         modes_per_class: int = 8, max_shift: int = 3,
                         noise: float = 0.15) -> dict:
    """Write a synthetic IDX dataset; returns the four file paths keyed like
    the canonical MNIST filenames. Each class has several prototype modes so
    the task is not linearly trivial."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 23])))
    protos = _class_prototypes(rng, classes * modes_per_class, size)
    paths = {}
    for split, n in (("train", n_train), ("t10k", n_test)):
        images, labels = _render_split(rng, protos, classes, n, size, max_shift, noise)
        img_path = out_dir / f"{split}-images-idx3-ubyte"
        lbl_path = out_dir / f"{split}-labels-idx1-ubyte"
        write_idx_images(img_path, images)
        write_idx_labels(lbl_path, labels)
        paths[f"{split}-images"] = str(img_path)
        paths[f"{split}-labels"] = str(lbl_path)
    return paths


def make_synthetic_cifar10_batch(path, n: int = 1000, seed: int = 0) -> str:
    """Write one CIFAR-10-format binary batch (3073-byte records)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 29])))
    protos = _class_prototypes(rng, 10, 32)
    images, labels = _render_split(rng, protos, 10, n, 32, 2, 0.15)
    rec = np.empty((n, 3073), dtype=np.uint8)
    rec[:, 0] = labels
    # channel-major planes, as in the real binary batches
    rec[:, 1:] = np.repeat(images.reshape(n, 1, 32 * 32), 3, axis=1).reshape(n, 3072)
    with open(path, "wb") as f:
        f.write(rec.tobytes())
    return str(path)


def resolve_mnist_or_synthetic(cache_dir=None) -> dict:
    """resolve_mnist if a dataset directory is configured, otherwise generate
    (once, into a cache directory) the synthetic stand-in dataset."""
    if os.environ.get("PLEXPRESS_DATA_DIR"):
        return resolve_mnist()
    cache_dir = Path(cache_dir or os.environ.get("PLEXPRESS_CACHE_DIR")
                     or Path.home() / ".cache" / "plexpress" / "synthetic-mnist")
    marker = cache_dir / "train-images-idx3-ubyte"
    if marker.exists():
        return {f"{split}-{kind}": str(cache_dir / f"{split}-{kind_tag}-ubyte")
                for split in ("train", "t10k")
                for kind, kind_tag in (("images", "images-idx3"), ("labels", "labels-idx1"))}
    return make_synthetic_mnist(cache_dir)


def resolve_mnist(data_dir=None) -> dict:
    """Locate MNIST IDX files. Order: explicit argument, PLEXPRESS_DATA_DIR
    environment variable; returns the file-path dict or raises if absent."""
    data_dir = data_dir or os.environ.get("PLEXPRESS_DATA_DIR")
    if not data_dir:
        raise FileNotFoundError("no dataset directory given (set PLEXPRESS_DATA_DIR)")
    data_dir = Path(data_dir)
    paths = {}
    for split in ("train", "t10k"):
        for kind, tag in (("images", "idx3"), ("labels", "idx1")):
            base = data_dir / f"{split}-{kind}-{tag}-ubyte"
            if base.exists():
                paths[f"{split}-{kind}"] = str(base)
            elif base.with_suffix(base.suffix + ".gz").exists() or (data_dir / (base.name + ".gz")).exists():
                paths[f"{split}-{kind}"] = str(data_dir / (base.name + ".gz"))
            else:
                raise FileNotFoundError(f"missing dataset file: {base}(.gz)")
    return paths

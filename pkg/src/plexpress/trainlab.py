"""Minibatch SGD trainer for fully connected piecewise-linear classifiers with
per-layer freezing, dataset ingestion (MNIST IDX, CIFAR-10 binary batches),
and checkpoint-time trajectory probes.

The trainer is deliberately plain: softmax cross-entropy on a linear output
layer, exact reverse-mode gradients (hard-tanh subgradient 1 strictly inside
(-1, 1), 0 at and beyond the kinks), no momentum, deterministic shuffling.
"""

from __future__ import annotations

import gzip
import hashlib
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import netcore, trajkit
from .netcore import Activation, Architecture, InitSpec, Network
from .trajkit import RefinePolicy


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    inputs: np.ndarray   # (N, m) float64 in [0, 1]
    labels: np.ndarray   # (N,) int64 in [0, num_classes)
    split: str = "train"
    num_classes: int = 10

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2 or len(self.inputs) < 1:
            raise ValueError("inputs must be a non-empty (N, m) array")
        if self.labels.shape != (len(self.inputs),):
            raise ValueError("labels must align with inputs")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise ValueError("label out of range")

    def __len__(self):
        return len(self.inputs)

    def subset(self, n: int) -> "Dataset":
        n = min(n, len(self))
        return Dataset(self.inputs[:n], self.labels[:n], self.split, self.num_classes)


def _read_maybe_gzip(path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
        f.seek(0)
        if head == b"\x1f\x8b":
            return gzip.GzipFile(fileobj=f).read()
        return f.read()


def load_mnist_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Parse the IDX image/label pair (big-endian magic 2051 / 2049, plain or
    gzipped). Pixels are scaled to [0, 1]; any inconsistency (bad magic,
    truncation, count mismatch) raises without producing a partial dataset."""
    raw = _read_maybe_gzip(images_path)
    if len(raw) < 16:
        raise ValueError(f"{images_path}: truncated IDX header")
    magic, n, rows, cols = struct.unpack(">iiii", raw[:16])
    if magic != 2051:
        raise ValueError(f"{images_path}: bad magic {magic}, expected 2051")
    if len(raw) != 16 + n * rows * cols:
        raise ValueError(f"{images_path}: payload size mismatch (truncated or trailing bytes)")
    images = np.frombuffer(raw, dtype=np.uint8, offset=16).reshape(n, rows * cols)

    raw_l = _read_maybe_gzip(labels_path)
    if len(raw_l) < 8:
        raise ValueError(f"{labels_path}: truncated IDX header")
    magic_l, n_l = struct.unpack(">ii", raw_l[:8])
    if magic_l != 2049:
        raise ValueError(f"{labels_path}: bad magic {magic_l}, expected 2049")
    if len(raw_l) != 8 + n_l:
        raise ValueError(f"{labels_path}: payload size mismatch")
    if n_l != n:
        raise ValueError(f"image count {n} != label count {n_l}")
    labels = np.frombuffer(raw_l, dtype=np.uint8, offset=8).astype(np.int64)
    if labels.size and labels.max() > 9:
        raise ValueError("MNIST labels must be in 0..9")
    return Dataset(images.astype(np.float64) / 255.0, labels, split=split)


def load_cifar10_binary(paths, split: str = "train") -> Dataset:
    """Parse CIFAR-10 binary-version batch files: 3073-byte records of one
    label byte plus 3072 pixel bytes."""
    if isinstance(paths, (str, bytes)) or not hasattr(paths, "__iter__"):
        paths = [paths]
    all_inputs, all_labels = [], []
    for path in paths:
        raw = _read_maybe_gzip(path)
        if len(raw) == 0 or len(raw) % 3073 != 0:
            raise ValueError(f"{path}: size {len(raw)} is not a multiple of 3073")
        rec = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3073)
        labels = rec[:, 0].astype(np.int64)
        if labels.max() > 9:
            raise ValueError(f"{path}: label byte out of range")
        all_labels.append(labels)
        all_inputs.append(rec[:, 1:].astype(np.float64) / 255.0)
    return Dataset(np.concatenate(all_inputs), np.concatenate(all_labels), split=split)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    arch: Architecture
    init: InitSpec
    learning_rate: float = 0.05
    batch_size: int = 64
    steps: int = 3000
    freeze_mask: tuple | None = None   # len = hidden layers + 1 (output last); True = frozen
    checkpoint_every: int = 300
    data_subset: int | None = 10000
    seed: int = 0
    optimizer: str = "sgd"             # "sgd" | "adam" (betas 0.9/0.999, eps 1e-8)
    eval_cap: int | None = None        # cap on examples used for accuracy/loss metrics
    probe_refine: RefinePolicy = RefinePolicy(start=512, rel_tol=1e-3, max_points=2**13)

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        n_layers = self.arch.depth + 1
        mask = self.freeze_mask if self.freeze_mask is not None else (False,) * n_layers
        mask = tuple(bool(b) for b in mask)
        if len(mask) != n_layers:
            raise ValueError(f"freeze_mask must have {n_layers} entries (hidden layers + output)")
        if all(mask):
            raise ValueError("at least one layer must be unfrozen")
        object.__setattr__(self, "freeze_mask", mask)
        if self.learning_rate <= 0 or self.batch_size < 1 or self.steps < 1:
            raise ValueError("learning_rate, batch_size and steps must be positive")
        if not (1 <= self.checkpoint_every <= self.steps):
            raise ValueError("checkpoint_every must be in 1..steps")


@dataclass
class Checkpoint:
    step: int
    train_accuracy: float
    test_accuracy: float
    loss: float
    probe_lengths: dict = field(default_factory=dict)  # kind -> per-layer lengths


@dataclass
class TrainRun:
    config: TrainConfig
    checkpoints: list
    final_network: Network
    diverged: bool = False
    init_digest: str = ""


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradients(net: Network, X, y, freeze_mask=None):
    """Mean softmax cross-entropy and exact per-parameter gradients of a
    network with a linear output layer; frozen layers get exactly zero
    gradients."""
    return _loss_and_gradients(net.weights, net.biases, net.activation, X, y, freeze_mask)


def _loss_and_gradients(weights, biases, activation: Activation, X, y,
                        freeze_mask=None):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) < 1:
        raise ValueError("batch must be non-empty")
    n_layers = len(weights)

    zs = [X]
    hs = []
    z = X
    for d in range(n_layers - 1):
        h = z @ weights[d].T + biases[d]
        hs.append(h)
        z = netcore.activate(activation, h)
        zs.append(z)
    logits = z @ weights[-1].T + biases[-1]
    p = _softmax(logits)
    eps = np.finfo(np.float64).tiny
    loss = float(-np.log(np.maximum(p[np.arange(len(y)), y], eps)).mean())
    if not np.isfinite(loss):
        raise netcore.NonFiniteError("non-finite loss")

    grads_w = [None] * n_layers
    grads_b = [None] * n_layers
    delta = p.copy()
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    for d in range(n_layers - 1, -1, -1):
        grads_w[d] = delta.T @ zs[d]
        grads_b[d] = delta.sum(axis=0)
        if d > 0:
            delta = (delta @ weights[d]) * netcore.activation_derivative(activation, hs[d - 1])
    if freeze_mask is not None:
        for d, frozen in enumerate(freeze_mask):
            if frozen:
                grads_w[d] = np.zeros_like(grads_w[d])
                grads_b[d] = np.zeros_like(grads_b[d])
    return loss, list(zip(grads_w, grads_b))


def evaluate(weights, biases, activation: Activation, X, y) -> tuple[float, float]:
    """(accuracy, mean cross-entropy loss) over the given examples."""
    z = np.asarray(X, dtype=np.float64)
    for d in range(len(weights) - 1):
        z = netcore.activate(activation, z @ weights[d].T + biases[d])
    logits = z @ weights[-1].T + biases[-1]
    p = _softmax(logits)
    eps = np.finfo(np.float64).tiny
    loss = float(-np.log(np.maximum(p[np.arange(len(y)), y], eps)).mean())
    acc = float((logits.argmax(axis=1) == y).mean())
    return acc, loss


def network_digest(net: Network) -> str:
    h = hashlib.sha256()
    for W, b in zip(net.weights, net.biases):
        h.update(W.tobytes())
        h.update(b.tobytes())
    return h.hexdigest()


def default_probe_pairs(test_ds: Dataset, input_dim: int, seed: int,
                        num_random_arcs: int = 16):
    """Probe endpoints fixed once per run: the first two test inputs with
    distinct labels, and a bank of fixed random Gaussian pairs scaled to the
    mean norm of the datapoint pair. Several random arcs are used because the
    per-layer length of any single random arc has substantial arc-to-arc
    variance; the mean over the bank is the stable statistic."""
    i0 = 0
    i1 = next(i for i in range(1, len(test_ds)) if test_ds.labels[i] != test_ds.labels[i0])
    d0, d1 = test_ds.inputs[i0], test_ds.inputs[i1]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 17])))
    scale = 0.5 * (np.linalg.norm(d0) + np.linalg.norm(d1))
    random_pairs = []
    for _ in range(num_random_arcs):
        r0 = rng.normal(size=input_dim)
        r1 = rng.normal(size=input_dim)
        r0 *= scale / np.linalg.norm(r0)
        r1 *= scale / np.linalg.norm(r1)
        random_pairs.append((r0, r1))
    return (d0, d1), tuple(random_pairs)


def _arc_layer_lengths(net: Network, a, b, refine: RefinePolicy | None) -> np.ndarray:
    traj = trajkit.circular_interpolation(np.asarray(a, float), np.asarray(b, float),
                                          (refine or RefinePolicy()).start)
    return trajkit.layer_length_profile(net, traj, refine).layer_lengths


def probe_trajectories(net: Network, datapoint_pair, random_pairs,
                       refine: RefinePolicy | None = None) -> dict:
    """Per-layer trajectory lengths (output layer excluded) for the circular
    arc between the datapoint pair, and the mean per-layer lengths over the
    bank of random arcs. Uses the trajkit code path so there is a single
    arc-length implementation in the repo."""
    if isinstance(random_pairs, tuple) and len(random_pairs) == 2 and \
            np.ndim(random_pairs[0]) == 1:
        random_pairs = (random_pairs,)
    out = {"datapoint": _arc_layer_lengths(net, *datapoint_pair, refine=refine)}
    rnd = [_arc_layer_lengths(net, a, b, refine=refine) for a, b in random_pairs]
    out["random"] = np.mean(rnd, axis=0)
    return out


def train(config: TrainConfig, train_ds: Dataset, test_ds: Dataset) -> TrainRun:
    """Minibatch gradient descent (plain SGD, or Adam) on the unfrozen
    layers, with deterministic
    per-epoch shuffling and checkpoints (metrics plus trajectory probes) at
    step 0, every checkpoint_every steps, and the final step. Divergence
    (non-finite loss) stops training and flags the partial run."""
    if config.data_subset is not None:
        train_ds = train_ds.subset(config.data_subset)
    net0 = netcore.sample_network(config.arch, config.init)
    weights = [W.copy() for W in net0.weights]
    biases = [b.copy() for b in net0.biases]
    act = config.arch.activation
    mask = config.freeze_mask

    eval_train = train_ds if config.eval_cap is None else train_ds.subset(config.eval_cap)
    eval_test = test_ds if config.eval_cap is None else test_ds.subset(config.eval_cap)
    dp_pair, rnd_pairs = default_probe_pairs(test_ds, config.arch.input_dim, config.seed)

    def snapshot() -> Network:
        return Network(weights, biases, act, linear_output=True)

    def checkpoint(step: int) -> Checkpoint:
        tr_acc, tr_loss = evaluate(weights, biases, act, eval_train.inputs, eval_train.labels)
        te_acc, _ = evaluate(weights, biases, act, eval_test.inputs, eval_test.labels)
        probes = probe_trajectories(snapshot(), dp_pair, rnd_pairs, config.probe_refine)
        return Checkpoint(step=step, train_accuracy=tr_acc, test_accuracy=te_acc,
                          loss=tr_loss, probe_lengths=probes)

    checkpoints = [checkpoint(0)]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(config.seed), 13])))
    n = len(train_ds)
    order = rng.permutation(n)
    cursor = 0
    diverged = False
    adam = config.optimizer == "adam"
    if adam:
        b1, b2, eps = 0.9, 0.999, 1e-8
        m_w = [np.zeros_like(W) for W in weights]
        v_w = [np.zeros_like(W) for W in weights]
        m_b = [np.zeros_like(b) for b in biases]
        v_b = [np.zeros_like(b) for b in biases]
    for step in range(1, config.steps + 1):
        if cursor + config.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size
        try:
            _, grads = _loss_and_gradients(weights, biases, act,
                                           train_ds.inputs[idx], train_ds.labels[idx],
                                           freeze_mask=mask)
        except netcore.NonFiniteError:
            diverged = True
            break
        for d, (gW, gb) in enumerate(grads):
            if mask[d]:
                continue
            if adam:
                m_w[d] = b1 * m_w[d] + (1 - b1) * gW
                v_w[d] = b2 * v_w[d] + (1 - b2) * gW * gW
                m_b[d] = b1 * m_b[d] + (1 - b1) * gb
                v_b[d] = b2 * v_b[d] + (1 - b2) * gb * gb
                corr1 = 1 - b1**step
                corr2 = 1 - b2**step
                weights[d] -= config.learning_rate * (m_w[d] / corr1) / (np.sqrt(v_w[d] / corr2) + eps)
                biases[d] -= config.learning_rate * (m_b[d] / corr1) / (np.sqrt(v_b[d] / corr2) + eps)
            else:
                weights[d] -= config.learning_rate * gW
                biases[d] -= config.learning_rate * gb
        if step % config.checkpoint_every == 0 or step == config.steps:
            checkpoints.append(checkpoint(step))
    return TrainRun(config=config, checkpoints=checkpoints, final_network=snapshot(),
                    diverged=diverged, init_digest=network_digest(net0))


@dataclass
class RemainingDepthResult:
    base_config: TrainConfig
    runs: dict                 # layer key (int 1..depth or "output") -> TrainRun
    baseline_train_accuracy: float
    baseline_test_accuracy: float
    init_digest: str


def remaining_depth_experiment(base_config: TrainConfig, layers_to_try,
                               train_ds: Dataset, test_ds: Dataset) -> RemainingDepthResult:
    """Train exactly one layer at a time from a shared random init. Layer keys
    are 1-based hidden-layer indices or "output". Also evaluates the fully
    frozen (untrained) baseline."""
    depth = base_config.arch.depth
    n_layers = depth + 1
    keys = list(layers_to_try)
    for key in keys:
        if key != "output" and not (1 <= int(key) <= depth):
            raise ValueError(f"layer {key!r} not a hidden layer or 'output'")

    net0 = netcore.sample_network(base_config.arch, base_config.init)
    digest = network_digest(net0)
    ds = train_ds if base_config.data_subset is None else train_ds.subset(base_config.data_subset)
    base_tr, _ = evaluate(net0.weights, net0.biases, base_config.arch.activation,
                          ds.inputs, ds.labels)
    base_te, _ = evaluate(net0.weights, net0.biases, base_config.arch.activation,
                          test_ds.inputs, test_ds.labels)

    runs = {}
    for key in keys:
        idx = n_layers - 1 if key == "output" else int(key) - 1
        mask = tuple(i != idx for i in range(n_layers))
        cfg = replace(base_config, freeze_mask=mask)
        run = train(cfg, train_ds, test_ds)
        if run.init_digest != digest:
            raise AssertionError("runs no longer share the same initial network")
        runs[key] = run
    return RemainingDepthResult(base_config=base_config, runs=runs,
                                baseline_train_accuracy=base_tr,
                                baseline_test_accuracy=base_te,
                                init_digest=digest)

"""Random fully connected piecewise-linear networks with per-layer capture.

Networks are plain lists of (weight, bias) pairs with a hard-tanh or ReLU
nonlinearity on hidden layers. Everything is float64 and deterministic:
a network is fully specified by (architecture, init spec), and the PRNG
algorithm is pinned (see PRNG_ID) so runs reproduce across platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

# Pinned PRNG: numpy's PCG64 bit generator driven through numpy.random.Generator.
# Recorded in run manifests; changing it is a format break.
PRNG_ID = "numpy-pcg64"

FORMAT_NAME = "plexpress-net"
FORMAT_VERSION = 1


class Activation(str, Enum):
    HARD_TANH = "hard_tanh"
    RELU = "relu"


class NeuronState(IntEnum):
    """Discrete per-neuron state. Boundary inputs (h = +-1 hard-tanh, h = 0
    ReLU) are assigned to the saturated / inactive state."""

    # hard-tanh states
    SAT_LOW = 0
    LINEAR = 1
    SAT_HIGH = 2
    # ReLU states
    INACTIVE = 3
    ACTIVE = 4


class DimensionError(ValueError):
    """Shapes of weights, biases or inputs do not chain."""


class NonFiniteError(FloatingPointError):
    """A NaN or infinity showed up where finite values are required."""


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int
    activation: Activation = Activation.HARD_TANH

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if not self.hidden_widths:
            raise ValueError("at least one hidden layer is required")
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be >= 1")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)


@dataclass(frozen=True)
class InitSpec:
    sigma_w_sq: float
    sigma_b_sq: float
    seed: int

    def __post_init__(self):
        if not (self.sigma_w_sq > 0):
            raise ValueError("sigma_w_sq must be > 0")
        if self.sigma_b_sq < 0:
            raise ValueError("sigma_b_sq must be >= 0")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit in 64 unsigned bits")


class Network:
    """Immutable stack of affine layers with a fixed activation.

    ``linear_output=True`` marks the last layer as a linear readout
    (classification head); the activation and state capture then apply to
    hidden layers only.
    """

    def __init__(self, weights, biases, activation: Activation, linear_output: bool = False):
        if len(weights) != len(biases):
            raise DimensionError("need one bias vector per weight matrix")
        if not weights:
            raise DimensionError("network needs at least one layer")
        self.weights = []
        self.biases = []
        fan_in = None
        for i, (W, b) in enumerate(zip(weights, biases)):
            W = np.asarray(W, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise DimensionError(f"layer {i}: weight must be (fan_out, fan_in), bias (fan_out,)")
            if fan_in is not None and W.shape[1] != fan_in:
                raise DimensionError(f"layer {i}: fan_in {W.shape[1]} != previous fan_out {fan_in}")
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise NonFiniteError(f"layer {i}: non-finite parameter")
            W = W.copy()
            b = b.copy()
            W.flags.writeable = False
            b.flags.writeable = False
            self.weights.append(W)
            self.biases.append(b)
            fan_in = W.shape[0]
        self.activation = Activation(activation)
        self.linear_output = bool(linear_output)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def num_hidden(self) -> int:
        """Number of activated (captured) layers."""
        return self.num_layers - (1 if self.linear_output else 0)

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return tuple(self.weights[d].shape[0] for d in range(self.num_hidden))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Plain forward pass; returns the final layer output (linear if
        linear_output, activated otherwise)."""
        return forward_capture(self, x).final

    def truncated(self, num_hidden: int) -> "Network":
        """The sub-network consisting of the first `num_hidden` activated layers."""
        if not (1 <= num_hidden <= self.num_hidden):
            raise ValueError("num_hidden out of range")
        return Network(self.weights[:num_hidden], self.biases[:num_hidden],
                       self.activation, linear_output=False)


@dataclass
class LayerCapture:
    """Per-hidden-layer record of a forward pass. Arrays are (width,) for a
    single input or (n, width) for a batch. `output` is the linear readout
    when the network has one, else None; `final` is whatever the last layer
    produced."""

    pre_activations: list = field(default_factory=list)
    activations: list = field(default_factory=list)
    states: list = field(default_factory=list)
    output: np.ndarray | None = None

    @property
    def final(self) -> np.ndarray:
        return self.output if self.output is not None else self.activations[-1]


def apply_activation(kind: Activation, h: float) -> float:
    """Scalar activation. Hard-tanh clamps to [-1, 1]; ReLU clamps below 0."""
    h = float(h)
    if not np.isfinite(h):
        raise NonFiniteError("activation input must be finite")
    if Activation(kind) is Activation.HARD_TANH:
        return max(-1.0, min(1.0, h))
    return max(0.0, h)


def activate(kind: Activation, h: np.ndarray) -> np.ndarray:
    """Vectorized activation."""
    if Activation(kind) is Activation.HARD_TANH:
        return np.clip(h, -1.0, 1.0)
    return np.maximum(h, 0.0)


def activation_derivative(kind: Activation, h: np.ndarray) -> np.ndarray:
    """Subgradient used by the trainer: 1 strictly inside the linear region,
    0 at and beyond the kinks."""
    if Activation(kind) is Activation.HARD_TANH:
        return ((h > -1.0) & (h < 1.0)).astype(np.float64)
    return (h > 0.0).astype(np.float64)


def neuron_states(kind: Activation, h: np.ndarray) -> np.ndarray:
    """Vectorized NeuronState codes (int8) from pre-activations."""
    if Activation(kind) is Activation.HARD_TANH:
        out = np.full(h.shape, NeuronState.LINEAR, dtype=np.int8)
        out[h <= -1.0] = NeuronState.SAT_LOW
        out[h >= 1.0] = NeuronState.SAT_HIGH
        return out
    out = np.full(h.shape, NeuronState.INACTIVE, dtype=np.int8)
    out[h > 0.0] = NeuronState.ACTIVE
    return out


def sample_network(arch: Architecture, init: InitSpec) -> Network:
    """Draw a random network: weights ~ N(0, sigma_w_sq / fan_in), biases
    ~ N(0, sigma_b_sq), all from a single PCG64 stream keyed by init.seed.
    The last layer is a linear readout of width arch.output_dim."""
    rng = np.random.Generator(np.random.PCG64(int(init.seed)))
    dims = [arch.input_dim, *arch.hidden_widths, arch.output_dim]
    weights, biases = [], []
    b_std = float(np.sqrt(init.sigma_b_sq))
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w_std = float(np.sqrt(init.sigma_w_sq / fan_in))
        weights.append(rng.normal(0.0, w_std, size=(fan_out, fan_in)))
        # scale 0 yields exact zeros while consuming the same stream positions
        biases.append(rng.normal(0.0, b_std, size=fan_out))
    return Network(weights, biases, arch.activation, linear_output=True)


def resample_layer(net: Network, layer: int, init: InitSpec) -> Network:
    """Copy of `net` with layer `layer` (0-based) redrawn from the init scheme."""
    if not (0 <= layer < net.num_layers):
        raise ValueError("layer index out of range")
    rng = np.random.Generator(np.random.PCG64(int(init.seed)))
    fan_out, fan_in = net.weights[layer].shape
    W = rng.normal(0.0, float(np.sqrt(init.sigma_w_sq / fan_in)), size=(fan_out, fan_in))
    b = rng.normal(0.0, float(np.sqrt(init.sigma_b_sq)), size=fan_out)
    weights = list(net.weights)
    biases = list(net.biases)
    weights[layer] = W
    biases[layer] = b
    return Network(weights, biases, net.activation, linear_output=net.linear_output)


def from_explicit(weights, biases, activation: Activation, linear_output: bool = False) -> Network:
    """Network with exactly the given parameters (test / experiment constructor)."""
    return Network(weights, biases, activation, linear_output=linear_output)


def forward_capture(net: Network, x: np.ndarray) -> LayerCapture:
    """Forward pass recording pre-activations, activations and neuron states
    for every hidden layer. Accepts a single vector or an (n, input_dim) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise DimensionError(f"input dim {x.shape[-1]} != network input dim {net.input_dim}")
    cap = LayerCapture()
    z = x
    for d in range(net.num_layers):
        h = z @ net.weights[d].T + net.biases[d]
        if not np.isfinite(h).all():
            raise NonFiniteError(f"non-finite pre-activation at layer {d + 1}")
        if d == net.num_layers - 1 and net.linear_output:
            cap.output = h
            return cap
        z = activate(net.activation, h)
        cap.pre_activations.append(h)
        cap.activations.append(z)
        cap.states.append(neuron_states(net.activation, h))
    return cap


def hidden_activations(net: Network, x: np.ndarray) -> list:
    """Activations z^(d) of every hidden layer, without retaining
    pre-activations or states (cheaper inner loop for sweeps)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise DimensionError(f"input dim {x.shape[-1]} != network input dim {net.input_dim}")
    out = []
    z = x
    for d in range(net.num_hidden):
        z = activate(net.activation, z @ net.weights[d].T + net.biases[d])
        out.append(z)
    return out


def save_network(net: Network, path, meta: dict | None = None) -> None:
    """Serialize to the versioned JSON format (see README: network file format).

    Header carries format name/version, PRNG id and optional metadata
    (architecture, init, seed); body is row-major float64 matrices. JSON
    float repr round-trips IEEE-754 doubles exactly.
    """
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "prng": PRNG_ID,
        "activation": net.activation.value,
        "linear_output": net.linear_output,
        "meta": meta or {},
        "layers": [
            {
                "fan_out": int(W.shape[0]),
                "fan_in": int(W.shape[1]),
                "weights": W.tolist(),
                "bias": b.tolist(),
            }
            for W, b in zip(net.weights, net.biases)
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_network(path) -> Network:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != FORMAT_NAME:
        raise ValueError(f"not a {FORMAT_NAME} file")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {doc.get('version')!r}")
    weights = [np.array(layer["weights"], dtype=np.float64) for layer in doc["layers"]]
    biases = [np.array(layer["bias"], dtype=np.float64) for layer in doc["layers"]]
    return Network(weights, biases, Activation(doc["activation"]),
                   linear_output=bool(doc["linear_output"]))

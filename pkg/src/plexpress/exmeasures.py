"""Expressivity measures: transitions, activation patterns / input-space
regions and boundaries, and dichotomies.

All operations are pure functions of (network, inputs, seed). Grid scans are
row-major and pattern ids are assigned in first-seen order, so outputs are
reproducible byte for byte.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from skimage import measure as _skmeasure

from . import netcore
from .netcore import Activation, Architecture, InitSpec, Network
from .trajkit import RefinePolicy, Trajectory

_CHUNK = 1 << 16


# ---------------------------------------------------------------------------
# activation patterns


@dataclass(frozen=True)
class ActivationPattern:
    """Concatenated NeuronState codes of every hidden neuron, layer by layer.
    Hashable, for distinct-pattern counting."""

    states: tuple
    layer_offsets: tuple  # start index of each layer's slice

    def layer(self, d: int) -> tuple:
        """States of hidden layer d (1-based)."""
        start = self.layer_offsets[d - 1]
        end = self.layer_offsets[d] if d < len(self.layer_offsets) else len(self.states)
        return self.states[start:end]


def activation_pattern(net: Network, x) -> ActivationPattern:
    cap = netcore.forward_capture(net, np.asarray(x, dtype=np.float64))
    states = np.concatenate([s.ravel() for s in cap.states])
    offsets = np.cumsum([0] + [s.size for s in cap.states[:-1]])
    return ActivationPattern(tuple(int(v) for v in states), tuple(int(v) for v in offsets))


def _state_matrix(net: Network, pts: np.ndarray) -> np.ndarray:
    """(n_points, total_hidden_neurons) int8 state codes."""
    cap = netcore.forward_capture(net, pts)
    return np.concatenate(cap.states, axis=1)


# ---------------------------------------------------------------------------
# transitions


@dataclass
class TransitionCount:
    count: int
    per_layer: np.ndarray  # counts per hidden layer in scope order
    converged: bool
    num_points: int

    def __int__(self):
        return int(self.count)


def _scope_layers(net: Network, scope) -> list[int]:
    if scope == "all":
        return list(range(1, net.num_hidden + 1))
    d = int(scope)
    if not (1 <= d <= net.num_hidden):
        raise ValueError(f"layer {d} out of range 1..{net.num_hidden}")
    return [d]


def _transition_counts_at(net: Network, pts: np.ndarray, layers: list[int],
                          boundary_mode: bool) -> np.ndarray:
    """Per-layer transition counts along the ordered point sequence.

    Default: sign changes of the activation (z > 0 flips). boundary_mode
    instead counts NeuronState changes, i.e. crossings of linear-region
    boundaries (+-1 level for hard-tanh)."""
    counts = np.zeros(len(layers), dtype=np.int64)
    prev = None
    max_layer = max(layers)
    for start in range(0, len(pts), _CHUNK):
        block = pts[start:start + _CHUNK]
        z = block
        sigs = {}
        for d in range(1, max_layer + 1):
            h = z @ net.weights[d - 1].T + net.biases[d - 1]
            z = netcore.activate(net.activation, h)
            if d in layers:
                sigs[d] = netcore.neuron_states(net.activation, h) if boundary_mode \
                    else (z > 0.0)
        for j, d in enumerate(layers):
            s = sigs[d]
            if prev is not None:
                counts[j] += int((s[0] != prev[j]).sum())
            counts[j] += int((s[1:] != s[:-1]).sum())
        prev = [sigs[d][-1] for d in layers]
    return counts


def count_transitions(net: Network, traj: Trajectory, scope="all",
                      refine: RefinePolicy | None = None,
                      boundary_mode: bool = False) -> TransitionCount:
    """Number of activation sign changes along the trajectory, summed over the
    neurons in scope ('all' or a 1-based layer index). Sampling density doubles
    until the total count is unchanged for two consecutive doublings."""
    if traj.dim != net.input_dim:
        raise netcore.DimensionError("trajectory dimension != network input dimension")
    refine = refine or RefinePolicy()
    layers = _scope_layers(net, scope)

    if not traj.refinable:
        counts = _transition_counts_at(net, traj.points, layers, boundary_mode)
        return TransitionCount(int(counts.sum()), counts, True, len(traj.points))

    n = max(refine.start, 2)
    counts = _transition_counts_at(net, traj.resample(n).points, layers, boundary_mode)
    stable = 0
    converged = False
    while n * 2 <= refine.max_points:
        n *= 2
        new = _transition_counts_at(net, traj.resample(n).points, layers, boundary_mode)
        stable = stable + 1 if new.sum() == counts.sum() else 0
        counts = new
        if stable >= 2:
            converged = True
            break
    return TransitionCount(int(counts.sum()), counts, converged, n)


# ---------------------------------------------------------------------------
# 2-D windows, region maps, boundaries


@dataclass(frozen=True)
class Window2D:
    """Axis-aligned window in a 2-plane of input space: point(a, b) =
    offset + a*u + b*v. Defaults to the first two coordinate axes."""

    x_range: tuple = (-1.0, 1.0)
    y_range: tuple = (-1.0, 1.0)
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    offset: np.ndarray | None = None

    def resolve(self, input_dim: int):
        if input_dim < 2:
            raise ValueError("2-D window needs input dim >= 2")
        u = np.asarray(self.u, dtype=np.float64) if self.u is not None else \
            np.eye(input_dim)[0]
        v = np.asarray(self.v, dtype=np.float64) if self.v is not None else \
            np.eye(input_dim)[1]
        off = np.asarray(self.offset, dtype=np.float64) if self.offset is not None else \
            np.zeros(input_dim)
        if np.linalg.matrix_rank(np.stack([u, v])) < 2:
            raise ValueError("window basis vectors are linearly dependent")
        return u, v, off

    def embed(self, ab: np.ndarray, input_dim: int) -> np.ndarray:
        u, v, off = self.resolve(input_dim)
        return off + np.outer(ab[:, 0], u) + np.outer(ab[:, 1], v)


@dataclass
class RegionMap:
    ids: np.ndarray          # (resolution, resolution) int32, pattern id per cell
    count: int
    window: Window2D
    resolution: int


def _grid_axes(window: Window2D, resolution: int):
    xs = np.linspace(window.x_range[0], window.x_range[1], resolution)
    ys = np.linspace(window.y_range[0], window.y_range[1], resolution)
    return xs, ys


def count_regions_2d(net: Network, window: Window2D | None = None,
                     resolution: int = 512) -> RegionMap:
    """Distinct activation patterns over a resolution x resolution grid.
    Pattern ids are dense in [0, count) in first-seen order under a row-major
    scan (y outer, x inner). Grid counting can miss regions thinner than a
    cell; exactness for depth-1 arrangements is checked against the
    combinatorial formula in the test suite."""
    window = window or Window2D()
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    xs, ys = _grid_axes(window, resolution)
    ids = np.empty((resolution, resolution), dtype=np.int32)
    table: dict = {}
    n_neurons = sum(net.hidden_widths)
    rows_per_block = max(1, _CHUNK // resolution)
    for i0 in range(0, resolution, rows_per_block):
        yblock = ys[i0:i0 + rows_per_block]
        ab = np.stack([np.tile(xs, len(yblock)), np.repeat(yblock, resolution)], axis=1)
        pts = window.embed(ab, net.input_dim)
        states = _state_matrix(net, pts)
        if 3 * n_neurons <= 63:
            # state codes fit in 3 bits each: pack rows into int64 keys so the
            # uniqueness pass sorts scalars instead of raw byte rows
            packer = np.int64(1) << (3 * np.arange(n_neurons, dtype=np.int64))
            keys = states.astype(np.int64) @ packer
        else:
            keys = np.ascontiguousarray(states).view(
                np.dtype((np.void, states.shape[1] * states.itemsize))).ravel()
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        # assign global ids in first-appearance order within the block
        local_to_global = np.empty(len(uniq), dtype=np.int32)
        for local in np.argsort(first):
            key = uniq[local] if uniq.dtype == np.int64 else uniq[local].tobytes()
            local_to_global[local] = table.setdefault(key, len(table))
        ids[i0:i0 + len(yblock)] = local_to_global[inv].reshape(len(yblock), resolution)
    return RegionMap(ids=ids, count=len(table), window=window, resolution=resolution)


@dataclass
class BoundaryCurve:
    layer: int    # 1-based hidden layer
    neuron: int   # 0-based within layer
    level: float
    points: np.ndarray  # (n, 2) window coordinates


@dataclass
class BoundarySet:
    curves: list = field(default_factory=list)
    window: Window2D | None = None
    resolution: int = 0

    def for_neuron(self, layer: int, neuron: int) -> list:
        return [c for c in self.curves if c.layer == layer and c.neuron == neuron]


def boundary_contours(net: Network, window: Window2D | None = None,
                      resolution: int = 256, up_to_layer: int | None = None) -> BoundarySet:
    """Level-set polylines of neuron pre-activations over the window: the zero
    set for ReLU units, the -1 and +1 sets for hard-tanh units. Marching-squares
    contouring with linear interpolation along cell edges."""
    window = window or Window2D()
    up_to_layer = up_to_layer or net.num_hidden
    if not (1 <= up_to_layer <= net.num_hidden):
        raise ValueError("up_to_layer out of range")
    xs, ys = _grid_axes(window, resolution)
    ab = np.stack([np.tile(xs, resolution), np.repeat(ys, resolution)], axis=1)
    pts = window.embed(ab, net.input_dim)
    levels = (0.0,) if net.activation is Activation.RELU else (-1.0, 1.0)
    out = BoundarySet(window=window, resolution=resolution)
    z = pts
    for d in range(1, up_to_layer + 1):
        h = z @ net.weights[d - 1].T + net.biases[d - 1]
        z = netcore.activate(net.activation, h)
        for j in range(h.shape[1]):
            # grid[i, jx] = value at (xs[jx], ys[i])
            grid = h[:, j].reshape(resolution, resolution)
            for level in levels:
                for contour in _skmeasure.find_contours(grid, level):
                    wx = np.interp(contour[:, 1], np.arange(resolution), xs)
                    wy = np.interp(contour[:, 0], np.arange(resolution), ys)
                    out.curves.append(BoundaryCurve(d, j, level, np.stack([wx, wy], axis=1)))
    return out


def line_arrangement_network(k: int, seed: int, point_radius: float = 0.35,
                             min_sep: float = 0.03) -> Network:
    """Depth-1 ReLU net whose k unit boundaries are lines in general position
    forced through the window: directions are spread (jittered around evenly
    spaced angles, so no two are near-parallel) and each line passes through a
    random point within `point_radius` of the window center. Draws are
    rejected until the arrangement is well separated — every pairwise
    intersection at least `min_sep` inside the unit window, intersections at
    least `min_sep` apart, and no intersection closer than `min_sep` to a
    non-incident line — so a grid count over [-1, 1]^2 at moderate resolution
    sees the full arrangement: 1 + k + k(k-1)/2 regions, with no cell thinner
    than the grid step."""
    if k < 1:
        raise ValueError("k must be >= 1")
    for attempt in itertools.count():
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence([int(seed), 11, attempt])))
        angles = np.pi * np.arange(k) / k + rng.uniform(-np.pi / (4 * k), np.pi / (4 * k),
                                                        size=k)
        normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        radii = point_radius * np.sqrt(rng.uniform(size=k))
        theta = rng.uniform(0, 2 * np.pi, size=k)
        pts = radii[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        biases = -(normals * pts).sum(axis=1)
        if _arrangement_separated(normals, biases, min_sep):
            return netcore.from_explicit([normals], [biases], Activation.RELU)


def _arrangement_separated(normals: np.ndarray, biases: np.ndarray,
                           min_sep: float) -> bool:
    k = len(normals)
    inter = []
    for i, j in itertools.combinations(range(k), 2):
        q = np.linalg.solve(np.stack([normals[i], normals[j]]), -biases[[i, j]])
        if np.max(np.abs(q)) > 1 - min_sep:
            return False
        inter.append(((i, j), q))
    for a, (pair_a, qa) in enumerate(inter):
        for _, qb in inter[a + 1:]:
            if np.linalg.norm(qa - qb) < min_sep:
                return False
        for l in range(k):
            if l not in pair_a and abs(normals[l] @ qa + biases[l]) < min_sep:
                return False
    return True


def deepen_with_visible_units(net: Network, extra_widths, seed: int,
                              window: Window2D | None = None,
                              calibration_resolution: int = 64) -> Network:
    """Append random ReLU layers whose units are guaranteed to kink inside the
    window: weights are Gaussian, and each new unit's bias is set so its kink
    level falls strictly between the minimum and maximum of its pre-activation
    over a coarse window grid, so the unit's boundary crosses the window
    instead of the unit sitting dead or always-on there. Used to compare a deeper network's region count
    against the depth-1 arrangement of the same first layer."""
    window = window or Window2D()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 41])))
    xs, ys = _grid_axes(window, calibration_resolution)
    ab = np.stack([np.tile(xs, calibration_resolution),
                   np.repeat(ys, calibration_resolution)], axis=1)
    z = pts = window.embed(ab, net.input_dim)
    weights = [W.copy() for W in net.weights]
    biases = [b.copy() for b in net.biases]
    for d in range(net.num_hidden):
        z = netcore.activate(net.activation, z @ weights[d].T + biases[d])
    for width in extra_widths:
        W = rng.normal(0.0, math.sqrt(2.0 / z.shape[1]), size=(width, z.shape[1]))
        pre = z @ W.T
        u = rng.uniform(0.25, 0.75, size=width)
        lo, hi = pre.min(axis=0), pre.max(axis=0)
        b = -(lo + u * (hi - lo))
        weights.append(W)
        biases.append(b)
        z = netcore.activate(net.activation, pre + b)
    return netcore.from_explicit(weights, biases, net.activation)


def general_position_region_count(k: int) -> int:
    """Regions of k lines in general position in the plane."""
    return 1 + k + k * (k - 1) // 2


# ---------------------------------------------------------------------------
# dichotomies


@dataclass
class DichotomyReport:
    s: int
    samples: int
    distinct: int
    ties: int
    mode: str            # "all" | "layer"
    layer: int | None    # 1-based hidden layer for mode "layer"
    labelings: set = field(default_factory=set, repr=False)


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


def _readout(arch: Architecture, init: InitSpec):
    k = arch.hidden_widths[-1]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(init.seed), 7])))
    w = rng.normal(0.0, float(np.sqrt(init.sigma_w_sq / k)), size=k)
    b = float(rng.normal(0.0, float(np.sqrt(init.sigma_b_sq))))
    return w, b


def count_dichotomies(arch: Architecture, init: InitSpec, S, samples: int,
                      mode: str = "all", layer: int | None = None) -> DichotomyReport:
    """Distinct sign-labelings of the input set S under weight resampling.

    mode "all": every sample is an independent network. mode "layer": one base
    network, only layer `layer`'s weights and biases are redrawn per sample.
    Labels are the sign of a fixed scalar readout of the final hidden layer,
    drawn once per experiment from the init scheme; an exact zero counts as a
    positive label and is tallied in `ties`. Per-sample seeds are derived
    deterministically from (init.seed, mode, layer, sample index), so the
    distinct count is non-decreasing in `samples` and independent of
    scheduling."""
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or len(S) < 1:
        raise ValueError("S must be a (s, input_dim) array with s >= 1")
    if len(np.unique(S, axis=0)) != len(S):
        raise ValueError("points in S must be distinct")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if mode not in ("all", "layer"):
        raise ValueError("mode must be 'all' or 'layer'")
    if mode == "layer":
        if layer is None or not (1 <= layer <= arch.depth):
            raise ValueError("mode 'layer' needs a hidden-layer index")

    w_r, b_r = _readout(arch, init)
    labelings: set[bytes] = set()
    ties = 0

    if mode == "all":
        for i in range(samples):
            net = netcore.sample_network(
                arch, InitSpec(init.sigma_w_sq, init.sigma_b_sq, _derived_seed(init.seed, 2, i)))
            z = netcore.hidden_activations(net, S)[-1]
            logits = z @ w_r + b_r
            ties += int((logits == 0.0).sum())
            labelings.add(np.packbits(logits >= 0.0).tobytes())
    else:
        base = netcore.sample_network(arch, init)
        d = layer  # 1-based; weights index d-1
        z_in = S if d == 1 else netcore.hidden_activations(base, S)[d - 2]
        tail_w = [base.weights[i] for i in range(d, base.num_hidden)]
        tail_b = [base.biases[i] for i in range(d, base.num_hidden)]
        fan_out, fan_in = base.weights[d - 1].shape
        w_std = float(np.sqrt(init.sigma_w_sq / fan_in))
        b_std = float(np.sqrt(init.sigma_b_sq))
        chunk = max(1, min(samples, (1 << 22) // max(1, fan_out * fan_in)))
        for c0 in range(0, samples, chunk):
            c = min(chunk, samples - c0)
            W = np.empty((c, fan_out, fan_in))
            B = np.empty((c, fan_out))
            for i in range(c):
                rng = np.random.Generator(np.random.PCG64(
                    np.random.SeedSequence([int(init.seed), 3, int(d), c0 + i])))
                W[i] = rng.normal(0.0, w_std, size=(fan_out, fan_in))
                B[i] = rng.normal(0.0, b_std, size=fan_out)
            z = netcore.activate(base.activation,
                                 np.einsum("coi,pi->cpo", W, z_in) + B[:, None, :])
            for Wt, bt in zip(tail_w, tail_b):
                z = netcore.activate(base.activation, z @ Wt.T + bt)
            logits = z @ w_r + b_r  # (c, s)
            ties += int((logits == 0.0).sum())
            bits = np.packbits(logits >= 0.0, axis=1)
            for row in bits:
                labelings.add(row.tobytes())

    return DichotomyReport(s=len(S), samples=samples, distinct=len(labelings),
                           ties=ties, mode=mode, layer=layer, labelings=labelings)


def unit_sphere_points(s: int, dim: int, seed: int) -> np.ndarray:
    """s i.i.d. points uniform on the unit sphere (default input-set choice
    for dichotomy experiments)."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 5])))
    pts = rng.normal(size=(s, dim))
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)

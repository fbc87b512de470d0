"""Trajectories, per-layer arc lengths, and the trajectory-growth lower bound.

A trajectory is a discretized 1-D curve in input space. Its image at every
hidden layer is a polyline whose length we measure, refining the sampling
density until the lengths stabilize. The per-layer growth factor is compared
against the theoretical lower-bound factor

    g = sigma_w / (sigma_w^2 + sigma_b^2)^(1/4)
        * sqrt(k) / sqrt(sqrt(sigma_w^2 + sigma_b^2) + k)

whose d-th power bounds the expected length at depth d (up to a constant,
reported as 1; acceptance comparisons use slopes, which are constant-free).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import netcore
from .netcore import Architecture, InitSpec, Network


class TrajectoryKind(str, Enum):
    CIRCULAR = "circular"
    SEGMENT = "segment"
    CUSTOM = "custom"


@dataclass(frozen=True)
class RefinePolicy:
    """Doubling refinement: start at `start` samples, stop when every layer's
    length changes by less than rel_tol across a doubling, give up at
    max_points."""

    start: int = 1024
    rel_tol: float = 1e-3
    max_points: int = 2**20


class Trajectory:
    """Sampled 1-D curve. Circular and segment trajectories remember their
    endpoints and can be resampled at any density; custom trajectories are
    fixed point lists."""

    def __init__(self, params, points, kind: TrajectoryKind,
                 endpoints: tuple[np.ndarray, np.ndarray] | None = None):
        params = np.asarray(params, dtype=np.float64)
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or len(points) < 2:
            raise ValueError("trajectory needs >= 2 points of equal dimension")
        if params.shape != (len(points),):
            raise ValueError("params and points must have matching length")
        if not np.all(np.diff(params) > 0):
            raise ValueError("params must be strictly increasing")
        if not np.isfinite(points).all():
            raise ValueError("trajectory points must be finite")
        self.params = params
        self.points = points
        self.kind = TrajectoryKind(kind)
        self.endpoints = endpoints

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def refinable(self) -> bool:
        return self.kind in (TrajectoryKind.CIRCULAR, TrajectoryKind.SEGMENT)

    def resample(self, num_points: int) -> "Trajectory":
        if not self.refinable:
            raise ValueError("custom trajectories cannot be resampled")
        x0, x1 = self.endpoints
        if self.kind is TrajectoryKind.CIRCULAR:
            return circular_interpolation(x0, x1, num_points)
        return segment_interpolation(x0, x1, num_points)


def circular_interpolation(x0, x1, num_points: int) -> Trajectory:
    """x(t) = cos(t) x0 + sin(t) x1 sampled uniformly on [0, pi/2]; endpoints
    are exactly x0 and x1. Rejects (anti)parallel endpoints."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape or x0.ndim != 1:
        raise ValueError("endpoints must be vectors of equal dimension")
    if num_points < 2:
        raise ValueError("num_points must be >= 2")
    n0, n1 = np.linalg.norm(x0), np.linalg.norm(x1)
    if n0 == 0 or n1 == 0 or abs(abs(float(x0 @ x1)) / (n0 * n1) - 1.0) < 1e-12:
        raise ValueError("endpoints are linearly dependent; arc is degenerate")
    t = np.linspace(0.0, math.pi / 2, num_points)
    pts = np.cos(t)[:, None] * x0 + np.sin(t)[:, None] * x1
    pts[0] = x0
    pts[-1] = x1
    return Trajectory(t, pts, TrajectoryKind.CIRCULAR, endpoints=(x0, x1))


def segment_interpolation(x0, x1, num_points: int) -> Trajectory:
    """Straight segment from x0 to x1, uniform in t on [0, 1]."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape or x0.ndim != 1:
        raise ValueError("endpoints must be vectors of equal dimension")
    if num_points < 2:
        raise ValueError("num_points must be >= 2")
    if np.array_equal(x0, x1):
        raise ValueError("segment endpoints coincide")
    t = np.linspace(0.0, 1.0, num_points)
    pts = (1 - t)[:, None] * x0 + t[:, None] * x1
    pts[0] = x0
    pts[-1] = x1
    return Trajectory(t, pts, TrajectoryKind.SEGMENT, endpoints=(x0, x1))


def arc_length(points) -> float:
    """Polyline length: sum of Euclidean norms of consecutive differences."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if len(points) < 2:
        return 0.0
    return float(np.sqrt((np.diff(points, axis=0) ** 2).sum(axis=1)).sum())


@dataclass
class LengthProfile:
    input_length: float
    layer_lengths: np.ndarray  # one entry per measured layer, depth order
    include_output: bool = False
    converged: bool = True
    num_points: int = 0


_CHUNK = 1 << 16


def _polyline_layer_lengths(net: Network, pts: np.ndarray, include_output: bool) -> np.ndarray:
    """Per-layer polyline lengths of the image of `pts`, computed in chunks
    so memory stays bounded at chunk x width."""
    n_meas = net.num_hidden + (1 if (include_output and net.linear_output) else 0)
    totals = np.zeros(n_meas)
    prev_last = None
    for start in range(0, len(pts), _CHUNK):
        block = pts[start:start + _CHUNK]
        layers = netcore.hidden_activations(net, block)
        if include_output and net.linear_output:
            layers.append(layers[-1] @ net.weights[-1].T + net.biases[-1])
        for j, z in enumerate(layers):
            if prev_last is not None:
                totals[j] += float(np.linalg.norm(z[0] - prev_last[j]))
            d = np.diff(z, axis=0)
            totals[j] += float(np.sqrt((d * d).sum(axis=1)).sum())
        prev_last = [z[-1] for z in layers]
    return totals


def layer_length_profile(net: Network, traj: Trajectory,
                         refine: RefinePolicy | None = None,
                         include_output: bool = False) -> LengthProfile:
    """Arc length of the trajectory's image at each hidden layer (output layer
    excluded unless include_output). Sampling density doubles until every
    layer's length is stable to refine.rel_tol; hitting the cap without
    stabilizing flags the result as non-converged."""
    if traj.dim != net.input_dim:
        raise netcore.DimensionError("trajectory dimension != network input dimension")
    refine = refine or RefinePolicy()

    if not traj.refinable:
        pts = traj.points
        return LengthProfile(arc_length(pts), _polyline_layer_lengths(net, pts, include_output),
                             include_output=include_output, converged=True, num_points=len(pts))

    n = max(refine.start, 2)
    pts = traj.resample(n).points
    prev = _polyline_layer_lengths(net, pts, include_output)
    converged = False
    while n * 2 <= refine.max_points:
        n *= 2
        pts = traj.resample(n).points
        cur = _polyline_layer_lengths(net, pts, include_output)
        denom = np.maximum(prev, 1e-300)
        if np.all(np.abs(cur - prev) / denom < refine.rel_tol):
            prev = cur
            converged = True
            break
        prev = cur
    return LengthProfile(arc_length(pts), prev, include_output=include_output,
                         converged=converged, num_points=n)


def theorem1_factor(k: int, sigma_w: float, sigma_b: float) -> float:
    """Per-layer lower-bound growth factor g for hard-tanh random networks."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if sigma_w <= 0 or sigma_b < 0:
        raise ValueError("sigma_w must be > 0 and sigma_b >= 0")
    s = sigma_w**2 + sigma_b**2
    return sigma_w / s**0.25 * math.sqrt(k) / math.sqrt(math.sqrt(s) + k)


def theorem1_bound(k: int, sigma_w: float, sigma_b: float, depth: int) -> float:
    """g^depth, taking the big-O constant as 1 (reported as such in metadata)."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    return theorem1_factor(k, sigma_w, sigma_b) ** depth


@dataclass
class GrowthStats:
    """Replica-averaged growth statistics for one (k, sigma_w_sq, sigma_b_sq,
    depth) configuration. lengths[r] = [input, layer1, ..., layerD]; ratio
    index d (1-based) is length(layer d) / length(layer d-1), with layer 0
    the input."""

    k: int
    sigma_w_sq: float
    sigma_b_sq: float
    depth: int
    input_dim: int
    base_seed: int
    replicas: int
    lengths: np.ndarray            # (replicas, depth + 1)
    ratio_mean: np.ndarray         # (depth,)
    ratio_std: np.ndarray          # (depth,)
    mean_log_lengths: np.ndarray   # (depth + 1,), mean over replicas of log length
    bound_factor: float
    all_converged: bool = True

    @property
    def config(self) -> dict:
        return {"k": self.k, "sigma_w_sq": self.sigma_w_sq, "sigma_b_sq": self.sigma_b_sq,
                "depth": self.depth, "input_dim": self.input_dim, "base_seed": self.base_seed}


def replica_seed(base_seed: int, replica: int) -> int:
    """Deterministic per-replica seed: base XOR replica index."""
    return (int(base_seed) ^ int(replica)) & (2**64 - 1)


def random_unit_endpoints(seed: int, dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Two i.i.d. Gaussian vectors normalized to unit norm, from a stream
    decorrelated from the network weight stream of the same seed."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 1])))
    x0 = rng.normal(size=dim)
    x1 = rng.normal(size=dim)
    return x0 / np.linalg.norm(x0), x1 / np.linalg.norm(x1)


def _growth_replica(k, sigma_w_sq, sigma_b_sq, depth, input_dim, seed, refine,
                    activation=netcore.Activation.HARD_TANH):
    arch = Architecture(input_dim, (k,) * depth, 1, activation)
    net = netcore.sample_network(arch, InitSpec(sigma_w_sq, sigma_b_sq, seed))
    x0, x1 = random_unit_endpoints(seed, input_dim)
    traj = circular_interpolation(x0, x1, refine.start)
    prof = layer_length_profile(net, traj, refine)
    return np.concatenate([[prof.input_length], prof.layer_lengths]), prof.converged


def growth_config_stats(k: int, sigma_w_sq: float, sigma_b_sq: float, depth: int,
                        replicas: int, base_seed: int, input_dim: int = 32,
                        refine: RefinePolicy | None = None, threads: int = 1) -> GrowthStats:
    """Run `replicas` independent random networks for one configuration and
    aggregate. Aggregation order is fixed by replica index, so the result is
    independent of the parallelism hint."""
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    refine = refine or RefinePolicy()

    def task(r):
        return _growth_replica(k, sigma_w_sq, sigma_b_sq, depth, input_dim,
                               replica_seed(base_seed, r), refine)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(replicas)))
    else:
        results = [task(r) for r in range(replicas)]

    lengths = np.stack([res[0] for res in results])
    all_converged = all(res[1] for res in results)
    ratios = lengths[:, 1:] / np.maximum(lengths[:, :-1], 1e-300)
    return GrowthStats(
        k=k, sigma_w_sq=sigma_w_sq, sigma_b_sq=sigma_b_sq, depth=depth,
        input_dim=input_dim, base_seed=base_seed, replicas=replicas,
        lengths=lengths,
        ratio_mean=ratios.mean(axis=0),
        ratio_std=ratios.std(axis=0, ddof=1) if replicas > 1 else np.zeros(depth),
        mean_log_lengths=np.log(np.maximum(lengths, 1e-300)).mean(axis=0),
        bound_factor=theorem1_factor(k, math.sqrt(sigma_w_sq), math.sqrt(sigma_b_sq)),
        all_converged=all_converged,
    )


def growth_sweep(ks, sigma_w_sqs, sigma_b_sqs, depths, replicas: int, base_seed: int,
                 input_dim: int = 32, refine: RefinePolicy | None = None,
                 threads: int = 1) -> list[GrowthStats]:
    """Full grid over (k, sigma_w_sq, sigma_b_sq, depth); row order is the
    nested iteration order of the arguments."""
    out = []
    for k in ks:
        for sw in sigma_w_sqs:
            for sb in sigma_b_sqs:
                for depth in depths:
                    out.append(growth_config_stats(k, sw, sb, depth, replicas,
                                                   base_seed, input_dim, refine, threads))
    return out


def fit_line(x, y) -> tuple[float, float, float]:
    """Least-squares line fit; returns (slope, intercept, r_squared)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("need >= 2 points to fit a line")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r_sq = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r_sq

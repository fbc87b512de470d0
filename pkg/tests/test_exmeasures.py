"""Unit, oracle, and property tests for transitions, activation patterns,
input-space regions/boundaries, and dichotomies."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plexpress import exmeasures, netcore
from plexpress.exmeasures import (
    Window2D,
    activation_pattern,
    boundary_contours,
    count_dichotomies,
    count_regions_2d,
    count_transitions,
    general_position_region_count,
    line_arrangement_network,
    unit_sphere_points,
)
from plexpress.netcore import Activation, Architecture, InitSpec, NeuronState, from_explicit, sample_network
from plexpress.trajkit import RefinePolicy, Trajectory, circular_interpolation, segment_interpolation


# ---------------------------------------------------------------------------
# transitions


def _single_neuron_net():
    return from_explicit([np.array([[1.0, 0.0]])], [np.zeros(1)], Activation.HARD_TANH)


def test_one_zero_crossing():
    traj = segment_interpolation(np.array([-1.0, 0.0]), np.array([1.0, 0.0]), 64)
    assert int(count_transitions(_single_neuron_net(), traj)) == 1


def test_constant_trajectory_no_transitions():
    pts = np.tile([0.3, 0.4], (5, 1))
    traj = Trajectory(np.arange(5.0), pts, "custom")
    assert int(count_transitions(_single_neuron_net(), traj)) == 0


def test_transitions_depend_only_on_point_sequence():
    pts = segment_interpolation(np.array([-1.0, 0.0]), np.array([1.0, 0.0]), 65).points
    a = Trajectory(np.linspace(0, 1, 65), pts, "custom")
    b = Trajectory(np.linspace(0, 1, 65) ** 2 + np.linspace(0, 0.5, 65), pts, "custom")
    net = sample_network(Architecture(2, (6, 6), 1), InitSpec(4.0, 1.0, 2))
    assert int(count_transitions(net, a)) == int(count_transitions(net, b))


def test_transitions_scope_layer_sums_to_all():
    net = sample_network(Architecture(4, (8, 8, 8), 1), InitSpec(6.0, 1.0, 9))
    x0 = np.array([1.0, 0, 0, 0])
    x1 = np.array([0, 1.0, 0, 0])
    traj = circular_interpolation(x0, x1, 256)
    total = count_transitions(net, traj)
    per = [int(count_transitions(net, traj, scope=d)) for d in (1, 2, 3)]
    assert sum(per) == int(total)
    np.testing.assert_array_equal(total.per_layer, per)


def test_boundary_mode_counts_state_changes():
    # a neuron swinging from below -1 to above +1 crosses two region
    # boundaries but changes sign once
    net = _single_neuron_net()
    traj = segment_interpolation(np.array([-2.0, 0.0]), np.array([2.0, 0.0]), 128)
    assert int(count_transitions(net, traj)) == 1
    assert int(count_transitions(net, traj, boundary_mode=True)) == 2


# ---------------------------------------------------------------------------
# activation patterns


def test_bias_dominates_all_active():
    W = np.zeros((4, 2))
    net = from_explicit([W], [10.0 * np.ones(4)], Activation.RELU)
    pattern = activation_pattern(net, np.array([0.3, -0.8]))
    assert all(s == NeuronState.ACTIVE for s in pattern.states)


def test_same_region_same_pattern():
    net = sample_network(Architecture(2, (5, 5), 1), InitSpec(2.0, 1.0, 4))
    x = np.array([0.11, 0.07])
    a = activation_pattern(net, x)
    b = activation_pattern(net, x + 1e-9)
    assert a == b
    assert hash(a) == hash(b)


def test_pattern_states_hard_tanh():
    net = from_explicit([np.eye(3)], [np.zeros(3)], Activation.HARD_TANH)
    pattern = activation_pattern(net, np.array([2.0, 0.3, -5.0]))
    assert tuple(pattern.states) == (NeuronState.SAT_HIGH, NeuronState.LINEAR,
                                     NeuronState.SAT_LOW)


def test_pattern_layer_slicing():
    net = sample_network(Architecture(3, (4, 6), 1), InitSpec(2.0, 1.0, 0))
    pattern = activation_pattern(net, np.zeros(3))
    assert len(pattern.layer(1)) == 4
    assert len(pattern.layer(2)) == 6
    assert len(pattern.states) == 10


# ---------------------------------------------------------------------------
# regions


def test_single_line_two_regions():
    net = from_explicit([np.array([[1.0, 0.3]])], [np.array([0.1])], Activation.RELU)
    assert count_regions_2d(net, Window2D(), 128).count == 2


def test_general_position_formula():
    assert [general_position_region_count(k) for k in range(1, 7)] == \
        [2, 4, 7, 11, 16, 22]


def test_arrangement_matches_formula():
    net = line_arrangement_network(4, seed=0)
    assert count_regions_2d(net, Window2D(), 512).count == 11


def test_region_count_matches_sign_vector_oracle():
    # independent oracle: distinct sign vectors of W x + b over the same grid
    net = line_arrangement_network(5, seed=3)
    res = 256
    region_map = count_regions_2d(net, Window2D(), res)
    xs = np.linspace(-1, 1, res)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    h = pts @ net.weights[0].T + net.biases[0]
    signs = (h > 0).astype(np.uint8)
    assert region_map.count == len(np.unique(signs, axis=0))


def test_supersampling_monotonicity():
    net = sample_network(Architecture(2, (6, 6), 1,
                                      activation=Activation.RELU), InitSpec(6.0, 1.0, 8))
    c1 = count_regions_2d(net, Window2D(), 128).count
    c2 = count_regions_2d(net, Window2D(), 256).count
    assert c2 >= c1


def test_depth_increases_region_count():
    first = line_arrangement_network(4, seed=1)
    rng = np.random.Generator(np.random.PCG64(1))
    deeper = from_explicit(
        [first.weights[0],
         rng.normal(0, 1.0, size=(4, 4)),
         rng.normal(0, 1.0, size=(4, 4))],
        [first.biases[0], rng.normal(0, 0.5, size=4), rng.normal(0, 0.5, size=4)],
        Activation.RELU)
    shallow = count_regions_2d(first, Window2D(), 256).count
    deep = count_regions_2d(deeper, Window2D(), 256).count
    assert deep > shallow


def test_arrangement_intersections_well_separated():
    for seed in (0, 1, 2):
        net = line_arrangement_network(6, seed=seed)
        W, b = net.weights[0], net.biases[0]
        pts = []
        for i in range(6):
            for j in range(i + 1, 6):
                q = np.linalg.solve(np.stack([W[i], W[j]]), -b[[i, j]])
                assert np.max(np.abs(q)) <= 0.97
                pts.append((i, j, q))
        for a, (i, j, qa) in enumerate(pts):
            for _, _, qb in pts[a + 1:]:
                assert np.linalg.norm(qa - qb) >= 0.03
            for l in range(6):
                if l not in (i, j):
                    assert abs(W[l] @ qa + b[l]) >= 0.03


def test_deepen_preserves_first_layer_and_adds_regions():
    first = line_arrangement_network(3, seed=7)
    deeper = exmeasures.deepen_with_visible_units(first, (3, 3), seed=7)
    np.testing.assert_array_equal(deeper.weights[0], first.weights[0])
    np.testing.assert_array_equal(deeper.biases[0], first.biases[0])
    again = exmeasures.deepen_with_visible_units(first, (3, 3), seed=7)
    np.testing.assert_array_equal(deeper.weights[2], again.weights[2])
    c1 = count_regions_2d(first, Window2D(), 256).count
    c3 = count_regions_2d(deeper, Window2D(), 256).count
    assert c3 > c1


def test_deepen_units_kink_inside_window():
    first = line_arrangement_network(1, seed=0)
    deeper = exmeasures.deepen_with_visible_units(first, (1, 1), seed=0)
    res = 64
    xs = np.linspace(-1, 1, res)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    cap = netcore.forward_capture(deeper, pts)
    for h in cap.pre_activations[1:]:
        assert h.min() < 0 < h.max()


def test_region_ids_dense_first_seen_row_major():
    net = line_arrangement_network(3, seed=5)
    region_map = count_regions_2d(net, Window2D(), 64)
    ids = region_map.ids
    assert ids[0, 0] == 0
    seen = []
    for v in ids.ravel():
        if v not in seen:
            seen.append(v)
    assert seen == list(range(region_map.count))


# ---------------------------------------------------------------------------
# boundaries


def test_explicit_line_contour():
    net = from_explicit([np.array([[1.0, 0.0]])], [np.array([-0.5])], Activation.RELU)
    window = Window2D(x_range=(0.0, 1.0), y_range=(0.0, 1.0))
    res = 128
    bset = boundary_contours(net, window, res)
    assert len(bset.curves) >= 1
    cell_diag = np.hypot(1.0 / (res - 1), 1.0 / (res - 1))
    for curve in bset.curves:
        assert np.all(np.abs(curve.points[:, 0] - 0.5) <= cell_diag)


def test_no_crossing_empty_contours():
    net = from_explicit([np.array([[0.1, 0.1]])], [np.array([5.0])], Activation.RELU)
    bset = boundary_contours(net, Window2D(), 64)
    assert len(bset.curves) == 0


def test_contour_points_near_level_set():
    net = sample_network(Architecture(2, (5, 5), 1,
                                      activation=Activation.RELU), InitSpec(4.0, 1.0, 6))
    res = 128
    bset = boundary_contours(net, Window2D(), res)
    step = 2.0 / (res - 1)
    for curve in bset.curves:
        h = netcore.forward_capture(net, curve.points).pre_activations[curve.layer - 1]
        vals = h[:, curve.neuron]
        # pre-activation at each polyline point within one interpolation step
        # of the level, using the local gradient scale of that neuron
        W = net.weights[0] if curve.layer == 1 else None
        grad_bound = np.abs(net.weights[curve.layer - 1]).sum() * 4  # crude Lipschitz bound
        assert np.all(np.abs(vals - curve.level) <= grad_bound * step)


def test_layer2_contours_straight_within_layer1_regions():
    net = sample_network(Architecture(2, (3, 3), 1,
                                      activation=Activation.RELU), InitSpec(8.0, 1.0, 12))
    res = 256
    bset = boundary_contours(net, Window2D(), res)
    cell_diag = np.hypot(2.0 / (res - 1), 2.0 / (res - 1))
    checked = 0
    for curve in bset.curves:
        if curve.layer != 2 or len(curve.points) < 6:
            continue
        h1 = netcore.forward_capture(net, curve.points).pre_activations[0]
        patterns = (h1 > 0).astype(np.uint8)
        keys = [row.tobytes() for row in patterns]
        for key in set(keys):
            idx = [i for i, k in enumerate(keys) if k == key]
            if len(idx) < 6:
                continue
            pts = curve.points[idx]
            # fit a line, measure max orthogonal deviation
            center = pts.mean(axis=0)
            u, s, vt = np.linalg.svd(pts - center, full_matrices=False)
            deviation = np.abs((pts - center) @ vt[1])
            assert np.max(deviation) <= cell_diag
            checked += 1
    assert checked > 0


# ---------------------------------------------------------------------------
# dichotomies


def test_single_point_two_labelings():
    arch = Architecture(3, (4,), 1)
    report = count_dichotomies(arch, InitSpec(4.0, 1.0, 0),
                               np.array([[1.0, 0.0, 0.0]]), samples=200)
    assert report.distinct == 2


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.integers(1, 40), st.integers(0, 2**16))
def test_distinct_counting_bound(s, samples, seed):
    arch = Architecture(3, (4, 4), 1)
    S = unit_sphere_points(s, 3, seed)
    report = count_dichotomies(arch, InitSpec(4.0, 1.0, seed), S, samples=samples)
    assert report.distinct <= min(2**s, samples)


def test_distinct_non_decreasing_in_samples():
    arch = Architecture(4, (5, 5), 1)
    S = unit_sphere_points(5, 4, 7)
    init = InitSpec(4.0, 1.0, 7)
    a = count_dichotomies(arch, init, S, samples=50)
    b = count_dichotomies(arch, init, S, samples=150)
    assert b.distinct >= a.distinct
    # shared prefix of the seed stream: the first 50 labelings coincide
    assert a.labelings <= b.labelings


def test_layer_mode_matches_all_mode_contract():
    arch = Architecture(4, (5, 5, 5), 1)
    S = unit_sphere_points(4, 4, 3)
    init = InitSpec(4.0, 1.0, 3)
    report = count_dichotomies(arch, init, S, samples=100, mode="layer", layer=2)
    assert report.mode == "layer" and report.layer == 2
    assert 1 <= report.distinct <= min(2**4, 100)


def test_layer_mode_requires_valid_layer():
    arch = Architecture(4, (5, 5), 1)
    S = unit_sphere_points(2, 4, 0)
    with pytest.raises(ValueError):
        count_dichotomies(arch, InitSpec(1.0, 1.0, 0), S, samples=10, mode="layer")
    with pytest.raises(ValueError):
        count_dichotomies(arch, InitSpec(1.0, 1.0, 0), S, samples=10,
                          mode="layer", layer=3)


def test_duplicate_points_rejected():
    arch = Architecture(3, (4,), 1)
    S = np.array([[1.0, 0, 0], [1.0, 0, 0]])
    with pytest.raises(ValueError):
        count_dichotomies(arch, InitSpec(1.0, 1.0, 0), S, samples=10)


def test_unit_sphere_points_deterministic_unit_norm():
    a = unit_sphere_points(6, 10, 2)
    b = unit_sphere_points(6, 10, 2)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)

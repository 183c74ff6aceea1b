import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from sewrecon import geometry
from sewrecon.geometry import GeometryError
from sewrecon.pattern import Edge, Panel, Placement, SewingPattern

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
points = arrays(float, 2, elements=finite)


def test_curvature_straight_midpoint():
    ctrl = geometry.curvature_to_panel([0, 0], [10, 0], [0.5, 0])
    np.testing.assert_allclose(ctrl, [5, 0])


def test_curvature_perpendicular_is_ccw():
    ctrl = geometry.curvature_to_panel([0, 0], [10, 0], [0.5, 0.2])
    np.testing.assert_allclose(ctrl, [5, 2])


def test_curvature_zero_length_edge_raises():
    with pytest.raises(GeometryError):
        geometry.curvature_to_panel([1, 1], [1, 1], [0.5, 0.1])
    with pytest.raises(GeometryError):
        geometry.curvature_from_panel([1, 1], [1, 1], [0, 0])


@settings(max_examples=200)
@given(points, points, arrays(float, 2, elements=st.floats(-3, 3)))
def test_curvature_roundtrip(a, b, c):
    if np.linalg.norm(b - a) < 1e-3:
        return
    ctrl = geometry.curvature_to_panel(a, b, c)
    np.testing.assert_allclose(geometry.curvature_from_panel(a, b, ctrl), c, atol=1e-9)
    np.testing.assert_allclose(geometry.curvature_to_panel(a, b, geometry.curvature_from_panel(a, b, ctrl)),
                               ctrl, atol=1e-9)


def test_vertices_from_edges_closed_loop():
    verts, residual = geometry.vertices_from_edges([[10, 0], [0, 20], [-10, 0], [0, -20]])
    np.testing.assert_array_equal(verts, [[0, 0], [10, 0], [10, 20], [0, 20]])
    np.testing.assert_array_equal(residual, [0, 0])


def test_vertices_from_edges_open_loop():
    _, residual = geometry.vertices_from_edges([[1, 0], [0, 1]])
    assert np.linalg.norm(residual) == pytest.approx(np.sqrt(2))


def test_vertices_from_edges_empty():
    with pytest.raises(GeometryError):
        geometry.vertices_from_edges(np.zeros((0, 2)))


def test_edge_vectors_sum_to_zero(synthetic_patterns):
    for p in synthetic_patterns:
        for panel in p.panels.values():
            _, r = geometry.vertices_from_edges(geometry.edge_vectors(panel))
            assert np.linalg.norm(r) < 1e-6


def test_placement_identity(square):
    pts = geometry.apply_placement(square.panels["front"])
    np.testing.assert_allclose(pts, [[-5, -20, 0], [5, -20, 0], [5, 0, 0], [-5, 0, 0]])


def test_placement_quarter_turn(square):
    panel = square.panels["front"]
    s = np.sqrt(0.5)
    panel.placement = Placement([0, s, 0, s], [1, 2, 3])
    pts = geometry.apply_placement(panel)
    expected = Rotation.from_euler("y", 90, degrees=True).apply(
        np.column_stack([panel.vertices - [5, 20], np.zeros(4)])) + [1, 2, 3]
    np.testing.assert_allclose(pts, expected, atol=1e-12)


def test_placement_rejects_non_unit():
    with pytest.raises(GeometryError, match="non-unit"):
        geometry.place_points(np.zeros((1, 2)), [0, 0], [0, 0, 0, 2], [0, 0, 0])


def test_canonical_quaternion_sign():
    np.testing.assert_allclose(geometry.canonical_quaternion([0, 0, 0, -2]), [0, 0, 0, 1])


def _random_panel(rng, n):
    ang = np.sort(rng.uniform(0, 2 * np.pi, n))
    verts = np.column_stack([np.cos(ang), np.sin(ang)]) * rng.uniform(5, 50, (n, 1))
    return verts


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_placement_is_isometry(seed):
    rng = np.random.default_rng(seed)
    verts = _random_panel(rng, 6)
    q = Rotation.random(random_state=seed).as_quat()
    pts = geometry.place_points(verts, verts.mean(axis=0), q, rng.normal(size=3) * 30)
    d2 = np.linalg.norm(verts[:, None] - verts[None], axis=-1)
    d3 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    np.testing.assert_allclose(d3, d2, atol=1e-6)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_reference_invariant_to_cyclic_shift(seed, shift):
    rng = np.random.default_rng(seed)
    verts = _random_panel(rng, 6)
    n = len(verts)
    a = Panel("a", verts, [Edge(i, (i + 1) % n) for i in range(n)])
    rolled = np.roll(verts, -shift, axis=0)
    b = Panel("a", rolled, [Edge(i, (i + 1) % n) for i in range(n)])
    np.testing.assert_allclose(geometry.placement_reference(a), geometry.placement_reference(b))


def test_edge_feature_straight_has_zero_curvature(square):
    f = geometry.edge_feature(square, ("front", 0))
    assert f.shape == (8,)
    np.testing.assert_array_equal(f[6:], [0, 0])


def test_edge_feature_flip_preserves_control_point(square):
    square.panels["front"].edges[0] = Edge(0, 1, (0.3, 0.2))
    f = geometry.edge_feature(square, ("front", 0))
    g = geometry.edge_feature(square, ("front", 0), flip=True)
    np.testing.assert_array_equal(g[:3], f[3:6])
    np.testing.assert_allclose(g[6:], [0.7, -0.2])
    # same 3D control point from either direction (panel is in the z=0 plane)
    c_f = geometry.curvature_to_panel(f[:2], f[3:5], f[6:])
    c_g = geometry.curvature_to_panel(g[:2], g[3:5], g[6:])
    np.testing.assert_allclose(c_f, c_g, atol=1e-12)


def test_edge_feature_unknown_ref(square):
    with pytest.raises(GeometryError):
        geometry.edge_feature(square, ("nope", 0))
    with pytest.raises(GeometryError):
        geometry.edge_feature(square, ("front", 7))


def test_pair_feature_deterministic_without_rng(synthetic_patterns):
    p = synthetic_patterns[0]
    s = p.stitches[0]
    a = geometry.edge_pair_feature(p, s.first, s.second)
    b = geometry.edge_pair_feature(p, s.first, s.second)
    assert a.shape == (16,)
    np.testing.assert_array_equal(a, b)


def test_pair_feature_random_flips_describe_same_pair(synthetic_patterns):
    p = synthetic_patterns[2]
    s = p.stitches[0]
    rng = np.random.default_rng(0)
    base = {tuple(np.round(geometry.edge_feature(p, r, fl)[:6], 9)) for r in (s.first, s.second) for fl in (0, 1)}
    for _ in range(20):
        f = geometry.edge_pair_feature(p, s.first, s.second, rng)
        assert tuple(np.round(f[:6], 9)) in base
        assert tuple(np.round(f[8:14], 9)) in base


def test_outline_of_straight_panel_is_vertices(square):
    np.testing.assert_array_equal(geometry.panel_outline(square.panels["front"]), square.panels["front"].vertices)


def test_pattern_type_roundtrip_uses_panels(synthetic_patterns):
    p = synthetic_patterns[1]
    assert isinstance(p, SewingPattern)
    for panel in p.panels.values():
        q = panel.placement.rotation
        assert q[3] >= 0 and abs(np.linalg.norm(q) - 1) < 1e-9

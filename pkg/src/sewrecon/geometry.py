"""Coordinate-frame math for panels, edges and placements.

Conventions
-----------
* Curvature coordinates live in an edge-local frame: the edge start maps to
  ``(0, 0)`` and the end to ``(1, 0)``. The local y-axis is the edge
  direction rotated 90 degrees counter-clockwise (left of travel).
* A panel is lifted to 3D in the plane ``z = 0`` (panel x/y -> world x/y),
  shifted so its placement reference point sits at the origin, rotated by
  the placement quaternion and translated by the placement translation.
* Quaternions are stored scalar-last ``(x, y, z, w)``, the layout used by
  :class:`scipy.spatial.transform.Rotation`.
"""
from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

if TYPE_CHECKING:
    from .pattern import Panel, SewingPattern

QUAT_TOL = 1e-6


class GeometryError(ValueError):
    pass


def perp_ccw(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def canonical_quaternion(q: Sequence[float]) -> np.ndarray:
    """Unit quaternion with non-negative scalar (last) component."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0:
        raise GeometryError("zero quaternion")
    q = q / n
    if q[3] < 0:
        q = -q
    return q


def edge_vectors(panel: "Panel") -> np.ndarray:
    """Edge vectors ``v_end - v_start`` in loop order, shape ``(n_edges, 2)``."""
    v = panel.vertices
    starts = np.array([e.start for e in panel.edges], dtype=int)
    ends = np.array([e.end for e in panel.edges], dtype=int)
    return v[ends] - v[starts]


def vertices_from_edges(vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trace edge vectors from the origin.

    Returns the loop vertices (one per edge, first at the origin) and the
    loop residual, the sum of all vectors.
    """
    vectors = np.asarray(vectors, dtype=float).reshape(-1, 2)
    if len(vectors) == 0:
        raise GeometryError("empty edge list")
    cum = np.cumsum(vectors, axis=0)
    verts = np.vstack([np.zeros((1, 2)), cum[:-1]])
    return verts, cum[-1].copy()


def curvature_to_panel(start, end, curvature) -> np.ndarray:
    """Map edge-local curvature coordinates to a panel-space control point."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    c = np.asarray(curvature, dtype=float)
    d = end - start
    if np.any(np.linalg.norm(d, axis=-1) == 0):
        raise GeometryError("zero-length edge")
    return start + c[..., :1] * d + c[..., 1:2] * perp_ccw(d)


def curvature_from_panel(start, end, control) -> np.ndarray:
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    d = end - start
    len2 = np.sum(d * d, axis=-1, keepdims=True)
    if np.any(len2 == 0):
        raise GeometryError("zero-length edge")
    rel = np.asarray(control, dtype=float) - start
    cx = np.sum(rel * d, axis=-1, keepdims=True) / len2
    cy = np.sum(rel * perp_ccw(d), axis=-1, keepdims=True) / len2
    return np.concatenate([cx, cy], axis=-1)


def placement_reference(panel: "Panel") -> np.ndarray:
    """Top mid-point of the vertex bounding box (control points excluded)."""
    v = panel.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    return np.array([(lo[0] + hi[0]) / 2.0, hi[1]])


def _rotation(q) -> Rotation:
    q = np.asarray(q, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > QUAT_TOL:
        raise GeometryError(f"non-unit quaternion (norm {np.linalg.norm(q):.6g})")
    return Rotation.from_quat(q)


def place_points(points_2d: np.ndarray, reference, rotation, translation) -> np.ndarray:
    """Lift panel-space points to 3D with the given placement."""
    p = np.asarray(points_2d, dtype=float).reshape(-1, 2) - np.asarray(reference, dtype=float)
    p3 = np.column_stack([p, np.zeros(len(p))])
    return _rotation(rotation).apply(p3) + np.asarray(translation, dtype=float)


def apply_placement(panel: "Panel") -> np.ndarray:
    """3D body-frame positions of the panel vertices, shape ``(n_vertices, 3)``."""
    return place_points(panel.vertices, placement_reference(panel),
                        panel.placement.rotation, panel.placement.translation)


def edge_feature(pattern: "SewingPattern", ref: tuple[str, int], flip: bool = False) -> np.ndarray:
    """8 values: 3D start, 3D end and curvature of one edge.

    ``flip`` reverses the vertex order; the control point is unchanged in
    panel space, so its local coordinates become ``(1 - c_x, -c_y)``.
    Straight edges keep ``(0, 0)``.
    """
    name, idx = ref
    if name not in pattern.panels:
        raise GeometryError(f"unknown panel {name!r}")
    panel = pattern.panels[name]
    if not 0 <= idx < len(panel.edges):
        raise GeometryError(f"edge {idx} out of range for panel {name!r}")
    edge = panel.edges[idx]
    v3 = apply_placement(panel)
    a, b = v3[edge.start], v3[edge.end]
    c = np.asarray(edge.curvature, dtype=float)
    if flip:
        a, b = b, a
        if edge.is_curved:
            c = np.array([1.0 - c[0], -c[1]])
    return np.concatenate([a, b, c])


def edge_pair_feature(pattern: "SewingPattern", a: tuple[str, int], b: tuple[str, int],
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """16-value feature for an edge pair.

    With ``rng`` given, each edge's vertex order and the order of the two
    edges are flipped independently with probability 0.5.
    """
    if rng is None:
        return np.concatenate([edge_feature(pattern, a), edge_feature(pattern, b)])
    fa, fb, swap = rng.random(3) < 0.5
    first = edge_feature(pattern, a, flip=bool(fa))
    second = edge_feature(pattern, b, flip=bool(fb))
    if swap:
        first, second = second, first
    return np.concatenate([first, second])


def quadratic_bezier(start, control, end, t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)[:, None]
    return (1 - t) ** 2 * np.asarray(start) + 2 * (1 - t) * t * np.asarray(control) + t ** 2 * np.asarray(end)


def panel_outline(panel: "Panel", samples_per_curve: int = 10) -> np.ndarray:
    """Closed polyline of the panel boundary, curved edges tessellated."""
    pts = []
    t = np.linspace(0.0, 1.0, samples_per_curve, endpoint=False)
    for e in panel.edges:
        s, d = panel.vertices[e.start], panel.vertices[e.end]
        if e.is_curved:
            ctrl = curvature_to_panel(s, d, e.curvature)
            pts.append(quadratic_bezier(s, ctrl, d, t))
        else:
            pts.append(s[None, :])
    return np.vstack(pts)

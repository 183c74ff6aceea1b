"""Procedural garment generator standing in for a simulated garment dataset.

Body frame: y up, z forward, x towards the garment's right side, units cm.
Panels are placed rigidly around a torso proxy; the mesh of each panel is
bent along its normal (a bulge falling off towards the side seams) with a
small sinusoidal ripple. The rigid placement stays the ground truth.

Families
--------
``skirt``  front/back panels, side seams split at the hip (4 stitches)
``top``    sleeveless front/back bodice (side and shoulder seams, 4 stitches)
``tee``    ``top`` plus two sleeves (10 stitches)
``dress``  ``top`` sewn to ``skirt`` at the waist (10 stitches)
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from matplotlib.path import Path as MplPath
from scipy.spatial import Delaunay
from scipy.spatial.transform import Rotation

from . import geometry
from .dataio import DatasetSplit, Mesh, split_by_type, write_obj
from .pattern import Edge, Panel, PanelClassMap, Placement, SewingPattern, Stitch, default_class_map, save_pattern

FAMILIES = ("skirt", "top", "tee", "dress")

TORSO_DEPTH = 11.0
NECK_Y = 150.0


class GeneratorError(ValueError):
    pass


@dataclass
class SyntheticSpec:
    families: dict[str, int] = field(default_factory=lambda: {"skirt": 50, "top": 50, "tee": 50, "dress": 50})
    unseen: list[str] = field(default_factory=lambda: ["dress"])
    n_val: int = 5
    n_test: int = 5

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        return cls(dict(d.get("families", {})), list(d.get("unseen", [])),
                   int(d.get("n_val", 5)), int(d.get("n_test", 5)))


@dataclass
class _Outline:
    """CCW panel outline with labelled edges (edge i runs from point i to i+1)."""
    points: list
    curvatures: list
    labels: list


def _build_panel(name: str, outline: _Outline, rotation: np.ndarray,
                 anchor_world: np.ndarray) -> tuple[Panel, dict[str, int]]:
    pts = np.asarray(outline.points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    if area <= 0:
        raise GeneratorError(f"{name}: outline is not counter-clockwise")
    start = min(range(len(pts)), key=lambda i: (pts[i, 0], pts[i, 1]))
    order = [(start + i) % len(pts) for i in range(len(pts))]
    verts = pts[order] - pts[start]
    n = len(order)
    edges = [Edge(i, (i + 1) % n, tuple(float(c) for c in outline.curvatures[order[i]])) for i in range(n)]
    labels = {outline.labels[order[i]]: i for i in range(n)}
    q = geometry.canonical_quaternion(rotation)
    panel = Panel(name, verts, edges, Placement(q, np.zeros(3)))
    panel.placement.translation = np.asarray(anchor_world, dtype=float)
    return panel, labels


def _tilt(rng, about_y: float, jitter_deg: float = 3.0) -> np.ndarray:
    """Rotation about y followed by a small tilt about x and z.

    ``about_y`` stays strictly inside (-180, 180) degrees so the scalar part
    of the quaternion never changes sign under the tilt.
    """
    tx, tz = rng.uniform(-jitter_deg, jitter_deg, size=2)
    r = Rotation.from_euler("xz", [tx, tz], degrees=True) * Rotation.from_euler("y", about_y, degrees=True)
    return r.as_quat()


def _curve(rng, lo: float, hi: float) -> tuple[float, float]:
    return (float(rng.uniform(0.35, 0.65)), float(rng.uniform(lo, hi)))


STRAIGHT = (0.0, 0.0)


def _skirt_outline(rng, waist_w: float, hem_w: float, length: float) -> _Outline:
    hip_drop = rng.uniform(0.25, 0.4) * length
    flare = (hem_w - waist_w) / 2
    hip_in = flare * (1 - hip_drop / length) * rng.uniform(0.5, 0.8)
    pts = [
        (0.0, 0.0),
        (hem_w, 0.0),
        (hem_w - hip_in, length - hip_drop),
        (hem_w - flare, length),
        (flare, length),
        (hip_in, length - hip_drop),
    ]
    curv = [
        _curve(rng, -0.06, -0.01),      # hem
        STRAIGHT,                       # right lower side
        _curve(rng, -0.12, -0.03),      # right upper side (hip curve)
        _curve(rng, 0.01, 0.06),        # waist
        _curve(rng, -0.12, -0.03),      # left upper side
        STRAIGHT,                       # left lower side
    ]
    labels = ["hem", "right_lower", "right_upper", "waist", "left_upper", "left_lower"]
    return _Outline(pts, curv, labels)


def _top_outline(rng, width: float, side: float, arm_depth: float, neck_w: float, front: bool) -> _Outline:
    arm_in = rng.uniform(3.0, 5.0)
    slope = rng.uniform(2.0, 4.0)
    h = side + arm_depth
    pts = [
        (0.0, 0.0),
        (width, 0.0),
        (width, side),
        (width - arm_in, h),
        ((width + neck_w) / 2, h + slope),
        ((width - neck_w) / 2, h + slope),
        (arm_in, h),
        (0.0, side),
    ]
    neck_depth = (0.25, 0.45) if front else (0.05, 0.15)
    curv = [
        STRAIGHT,                       # bottom
        STRAIGHT,                       # right side
        _curve(rng, 0.08, 0.2),         # right armhole
        STRAIGHT,                       # right shoulder
        _curve(rng, *neck_depth),       # neckline
        STRAIGHT,                       # left shoulder
        _curve(rng, 0.08, 0.2),         # left armhole
        STRAIGHT,                       # left side
    ]
    labels = ["bottom", "right_side", "right_armhole", "right_shoulder", "neck",
              "left_shoulder", "left_armhole", "left_side"]
    return _Outline(pts, curv, labels)


def _sleeve_outline(rng, length: float, arm_h: float, cuff_h: float, cap: float) -> _Outline:
    pts = [
        (0.0, 0.0),
        (length, (arm_h - cuff_h) / 2),
        (length, (arm_h + cuff_h) / 2),
        (0.0, arm_h),
        (-cap, arm_h / 2),
    ]
    curv = [STRAIGHT, _curve(rng, -0.05, 0.05), STRAIGHT, _curve(rng, 0.05, 0.15), _curve(rng, 0.05, 0.15)]
    labels = ["under_back", "cuff", "under_front", "cap_front", "cap_back"]
    return _Outline(pts, curv, labels)


def _top_panels(rng, width: float, length: float):
    arm_depth = rng.uniform(18.0, 22.0)
    side = length - arm_depth - 3.0
    neck_w = rng.uniform(14.0, 18.0)
    bottom_y = NECK_Y - length
    panels, labels = {}, {}
    for name, front in (("top_front", True), ("top_back", False)):
        out = _top_outline(rng, width, side, arm_depth, neck_w, front)
        about_y = rng.uniform(-4, 4) if front else 180.0 - rng.uniform(3, 8)
        z = TORSO_DEPTH if front else -TORSO_DEPTH
        top_y = bottom_y + np.max(np.asarray(out.points)[:, 1])
        panels[name], labels[name] = _build_panel(name, out, _tilt(rng, about_y), [0.0, top_y, z])
    stitches = [
        (("top_front", "right_side"), ("top_back", "left_side")),
        (("top_front", "left_side"), ("top_back", "right_side")),
        (("top_front", "right_shoulder"), ("top_back", "left_shoulder")),
        (("top_front", "left_shoulder"), ("top_back", "right_shoulder")),
    ]
    return panels, labels, stitches, {"arm_y": bottom_y + side + arm_depth / 2, "width": width}


def _skirt_panels(rng, waist_y: float, waist_w: float):
    length = rng.uniform(35.0, 65.0)
    hem_w = waist_w + rng.uniform(6.0, 20.0)
    panels, labels = {}, {}
    out = _skirt_outline(rng, waist_w, hem_w, length)
    for name, front in (("skirt_front", True), ("skirt_back", False)):
        about_y = rng.uniform(-4, 4) if front else 180.0 - rng.uniform(3, 8)
        z = TORSO_DEPTH + 1.0 if front else -TORSO_DEPTH - 1.0
        panels[name], labels[name] = _build_panel(name, out, _tilt(rng, about_y), [0.0, waist_y, z])
    stitches = [
        (("skirt_front", "right_lower"), ("skirt_back", "left_lower")),
        (("skirt_front", "right_upper"), ("skirt_back", "left_upper")),
        (("skirt_front", "left_lower"), ("skirt_back", "right_lower")),
        (("skirt_front", "left_upper"), ("skirt_back", "right_upper")),
    ]
    return panels, labels, stitches


def _sleeve_panels(rng, arm_y: float, body_w: float):
    length = rng.uniform(12.0, 30.0)
    arm_h = rng.uniform(30.0, 36.0)
    cuff_h = rng.uniform(22.0, 28.0)
    cap = rng.uniform(2.0, 4.0)
    out = _sleeve_outline(rng, length, arm_h, cuff_h, cap)
    panels, labels = {}, {}
    for name, sign in (("sleeve_right", 1.0), ("sleeve_left", -1.0)):
        about_y = rng.uniform(-4, 4) if sign > 0 else 180.0 - rng.uniform(3, 8)
        # reference is the bbox top-mid; shift so the cap sits at the body side
        ref_x_from_cap = (length + cap) / 2
        anchor = [sign * (body_w / 2 + ref_x_from_cap), arm_y + arm_h / 2, 0.0]
        panels[name], labels[name] = _build_panel(name, out, _tilt(rng, about_y), anchor)
    stitches = [
        (("sleeve_right", "under_front"), ("sleeve_right", "under_back")),
        (("sleeve_left", "under_front"), ("sleeve_left", "under_back")),
        (("top_front", "right_armhole"), ("sleeve_right", "cap_front")),
        (("top_back", "left_armhole"), ("sleeve_right", "cap_back")),
        (("top_front", "left_armhole"), ("sleeve_left", "cap_front")),
        (("top_back", "right_armhole"), ("sleeve_left", "cap_back")),
    ]
    return panels, labels, stitches


def generate_pattern(family: str, rng: np.random.Generator) -> SewingPattern:
    if family not in FAMILIES:
        raise GeneratorError(f"unknown garment family {family!r}")
    panels, labels, stitches = {}, {}, []
    if family in ("top", "tee", "dress"):
        width = rng.uniform(34.0, 42.0)
        length = rng.uniform(45.0, 62.0) if family != "dress" else rng.uniform(45.0, 55.0)
        p, l, s, info = _top_panels(rng, width, length)
        panels.update(p), labels.update(l), stitches.extend(s)
        if family == "tee":
            p, l, s = _sleeve_panels(rng, info["arm_y"], width)
            panels.update(p), labels.update(l), stitches.extend(s)
        if family == "dress":
            p, l, s = _skirt_panels(rng, NECK_Y - length, width)
            panels.update(p), labels.update(l), stitches.extend(s)
            stitches += [(("top_front", "bottom"), ("skirt_front", "waist")),
                         (("top_back", "bottom"), ("skirt_back", "waist"))]
    else:
        p, l, s = _skirt_panels(rng, rng.uniform(88.0, 105.0), rng.uniform(30.0, 40.0))
        panels.update(p), labels.update(l), stitches.extend(s)
    # the wearer does not stand exactly at the origin
    offset = np.array([rng.uniform(-1.5, 1.5), 0.0, rng.uniform(-1.0, 1.0)])
    for panel in panels.values():
        panel.placement.translation = panel.placement.translation + offset
    stitch_objs = [Stitch((a[0], labels[a[0]][a[1]]), (b[0], labels[b[0]][b[1]])) for a, b in stitches]
    return SewingPattern(panels, stitch_objs, family)


# --- drape stand-in mesh ------------------------------------------------------

def _panel_mesh_2d(panel: Panel, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    outline = geometry.panel_outline(panel, samples_per_curve=8)
    lo, hi = outline.min(axis=0), outline.max(axis=0)
    gx = np.arange(lo[0] + spacing / 2, hi[0], spacing)
    gy = np.arange(lo[1] + spacing / 2, hi[1], spacing)
    grid = np.array(np.meshgrid(gx, gy)).reshape(2, -1).T
    path = MplPath(outline)
    inner = grid[path.contains_points(grid, radius=-spacing * 0.3)] if len(grid) else grid.reshape(0, 2)
    # densify boundary so triangles respect concave curves
    seg = []
    for i in range(len(outline)):
        a, b = outline[i], outline[(i + 1) % len(outline)]
        k = max(1, int(np.ceil(np.linalg.norm(b - a) / spacing)))
        seg.append(a + (b - a) * (np.arange(k)[:, None] / k))
    boundary = np.vstack(seg)
    pts = np.vstack([boundary, inner])
    tri = Delaunay(pts).simplices
    centroids = pts[tri].mean(axis=1)
    tri = tri[path.contains_points(centroids)]
    return pts, tri


def garment_mesh(pattern: SewingPattern, rng: np.random.Generator, spacing: float = 3.0) -> Mesh:
    verts, faces, offset = [], [], 0
    for panel in pattern.panels.values():
        pts2, tri = _panel_mesh_2d(panel, spacing)
        ref = geometry.placement_reference(panel)
        p3 = geometry.place_points(pts2, ref, panel.placement.rotation, panel.placement.translation)
        normal = Rotation.from_quat(panel.placement.rotation).apply([0.0, 0.0, 1.0])
        lo, hi = panel.vertices.min(axis=0), panel.vertices.max(axis=0)
        u = (pts2[:, 0] - (lo[0] + hi[0]) / 2) / max((hi[0] - lo[0]) / 2, 1e-6)
        bulge = rng.uniform(1.0, 3.0) * (1.0 - np.clip(u, -1, 1) ** 2)
        ripple = rng.uniform(0.2, 0.6) * np.sin(2 * np.pi * pts2[:, 1] / rng.uniform(8.0, 15.0)
                                                 + rng.uniform(0, 2 * np.pi))
        p3 = p3 + (bulge + ripple)[:, None] * normal[None, :]
        verts.append(p3)
        faces.append(tri + offset)
        offset += len(p3)
    return Mesh(np.vstack(verts), np.vstack(faces))


def generate_synthetic_dataset(spec: SyntheticSpec, rng: np.random.Generator):
    """Patterns, meshes, class map and split for ``spec``.

    Each sample draws from its own child generator, so a sample's content
    does not depend on how many samples precede it in other families.
    """
    unknown = set(spec.families) - set(FAMILIES)
    if unknown:
        raise GeneratorError(f"unknown garment families: {sorted(unknown)}")
    patterns, meshes, types = {}, {}, {}
    base_seed = int(rng.integers(2**31))
    for fi, (family, count) in enumerate(sorted(spec.families.items())):
        for i in range(count):
            sid = f"{family}_{i:05d}"
            sub = np.random.default_rng([base_seed, FAMILIES.index(family), i])
            patterns[sid] = generate_pattern(family, sub)
            meshes[sid] = garment_mesh(patterns[sid], sub)
            types[sid] = family
    split = split_by_type(types, spec.unseen, spec.n_val, spec.n_test, np.random.default_rng(base_seed))
    return patterns, meshes, default_class_map(), split


def write_dataset(root, patterns, meshes, class_map: PanelClassMap, split: DatasetSplit) -> Path:
    root = Path(root)
    (root / "patterns").mkdir(parents=True, exist_ok=True)
    (root / "meshes").mkdir(parents=True, exist_ok=True)
    for sid, p in patterns.items():
        save_pattern(p, root / "patterns" / f"{sid}.json")
        write_obj(meshes[sid], root / "meshes" / f"{sid}.obj")
    (root / "class_map.json").write_text(json.dumps(class_map.to_dict(), indent=1, sort_keys=True))
    (root / "split.json").write_text(json.dumps(split.to_dict(), indent=1, sort_keys=True))
    return root

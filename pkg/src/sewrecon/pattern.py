"""Sewing pattern domain model, JSON format, validation and tensor codec.

Pattern document layout::

    {
      "type": "skirt",
      "panels": {
        "skirt_front": {
          "vertices": [[0, 0], [40, 0], ...],
          "edges": [{"endpoints": [0, 1], "curvature": [0.5, 0.1]}, ...],
          "rotation": [qx, qy, qz, qw],
          "translation": [tx, ty, tz]
        }
      },
      "stitches": [[{"panel": "skirt_front", "edge": 1},
                    {"panel": "skirt_back", "edge": 3}]]
    }

``curvature`` is optional and defaults to a straight edge.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import geometry

MAX_EDGES = 14
SHAPE_FEATURES = 4
STITCH_FEATURES = 8
PLACEMENT_SIZE = 7


class PatternError(ValueError):
    """Raised for malformed pattern documents or invalid references."""


class EncodingError(ValueError):
    pass


EdgeRef = tuple[str, int]


@dataclass(frozen=True)
class Edge:
    start: int
    end: int
    curvature: tuple[float, float] = (0.0, 0.0)

    @property
    def is_curved(self) -> bool:
        return self.curvature[0] != 0.0 or self.curvature[1] != 0.0


@dataclass
class Placement:
    rotation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(4)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.rotation, self.translation])


@dataclass
class Panel:
    name: str
    vertices: np.ndarray
    edges: list[Edge]
    placement: Placement = field(default_factory=Placement)
    # set by decode_pattern: norm of the traced loop's closing gap
    loop_residual: float = 0.0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)

    def loop_vertices(self) -> np.ndarray:
        """Vertices in edge traversal order."""
        return self.vertices[[e.start for e in self.edges]]


@dataclass(frozen=True)
class Stitch:
    first: EdgeRef
    second: EdgeRef

    def key(self) -> frozenset:
        return frozenset((self.first, self.second))


@dataclass
class SewingPattern:
    panels: dict[str, Panel]
    stitches: list[Stitch] = field(default_factory=list)
    garment_type: str = ""
    decode_log: list[str] = field(default_factory=list)

    def stitch_keys(self) -> set[frozenset]:
        return {s.key() for s in self.stitches}

    def edge_refs(self) -> list[EdgeRef]:
        return [(name, i) for name, p in self.panels.items() for i in range(len(p.edges))]


@dataclass
class PanelClassMap:
    class_order: list[str]
    assignment: dict[str, dict[str, int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.class_order)

    def class_of(self, garment_type: str, panel_name: str) -> int:
        per_type = self.assignment.get(garment_type, {})
        if panel_name in per_type:
            return per_type[panel_name]
        if panel_name in self.class_order:
            return self.class_order.index(panel_name)
        raise PatternError(f"no panel class for {garment_type!r}/{panel_name!r}")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PanelClassMap":
        order = list(d["class_order"])
        assignment = {}
        for gtype, panels in d.get("assignment", {}).items():
            assignment[gtype] = {
                pname: (order.index(c) if isinstance(c, str) else int(c)) for pname, c in panels.items()
            }
        return cls(order, assignment)

    def to_dict(self) -> dict[str, Any]:
        return {
            "class_order": list(self.class_order),
            "assignment": {
                t: {p: self.class_order[c] for p, c in sorted(m.items())}
                for t, m in sorted(self.assignment.items())
            },
        }

    @classmethod
    def load(cls, path) -> "PanelClassMap":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_class_map() -> PanelClassMap:
    """Class map for the bundled synthetic garment families."""
    path = Path(__file__).parent / "data" / "synthetic_classes.json"
    return PanelClassMap.load(path)


@dataclass
class DecodeThresholds:
    edge_eps: float = 0.5
    loop_eps: float = 0.5
    min_edges: int = 3

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DecodeThresholds":
        return cls(**{k: d[k] for k in ("edge_eps", "loop_eps", "min_edges") if k in d})


@dataclass
class PatternTensor:
    edges: np.ndarray       # (C, MAX_EDGES, F)
    placement: np.ndarray   # (C, 7)
    stats_id: str | None = None

    @property
    def with_stitch_info(self) -> bool:
        return self.edges.shape[-1] == STITCH_FEATURES

    def occupied(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.edges != 0, axis=(1, 2)) | np.any(self.placement != 0, axis=1))


# --- JSON ------------------------------------------------------------------

def _require(d: dict, key: str, path: str):
    if not isinstance(d, dict) or key not in d:
        raise PatternError(f"missing key at {path}.{key}")
    return d[key]


def _floats(values, n: int, path: str) -> list[float]:
    try:
        out = [float(x) for x in values]
    except (TypeError, ValueError):
        raise PatternError(f"expected {n} numbers at {path}") from None
    if len(out) != n or not all(np.isfinite(out)):
        raise PatternError(f"expected {n} finite numbers at {path}")
    return out


def pattern_from_dict(doc: dict[str, Any]) -> SewingPattern:
    panels_doc = _require(doc, "panels", "$")
    if not isinstance(panels_doc, dict):
        raise PatternError("$.panels must be an object")
    panels: dict[str, Panel] = {}
    for name, pd in panels_doc.items():
        path = f"$.panels.{name}"
        raw_vertices = _require(pd, "vertices", path)
        if not isinstance(raw_vertices, list):
            raise PatternError(f"{path}.vertices must be a list")
        verts = np.array([_floats(v, 2, f"{path}.vertices[{i}]") for i, v in enumerate(raw_vertices)],
                         dtype=float).reshape(-1, 2)
        edges = []
        for i, ed in enumerate(_require(pd, "edges", path)):
            epath = f"{path}.edges[{i}]"
            ends = _require(ed, "endpoints", epath)
            if not isinstance(ends, list) or len(ends) != 2 or not all(isinstance(x, int) for x in ends):
                raise PatternError(f"{epath}.endpoints must be two integers")
            curv = _floats(ed.get("curvature", (0.0, 0.0)), 2, f"{epath}.curvature")
            for x in ends:
                if not 0 <= x < len(verts):
                    raise PatternError(f"{epath}.endpoints: vertex {x} out of range")
            edges.append(Edge(ends[0], ends[1], (curv[0], curv[1])))
        if not edges:
            raise PatternError(f"{path}.edges is empty")
        rot = _floats(pd.get("rotation", [0, 0, 0, 1]), 4, f"{path}.rotation")
        trans = _floats(pd.get("translation", [0, 0, 0]), 3, f"{path}.translation")
        verts = verts - verts[edges[0].start]
        panels[name] = Panel(name, verts, edges, Placement(geometry.canonical_quaternion(rot), trans))

    stitches = []
    for i, sd in enumerate(doc.get("stitches", [])):
        spath = f"$.stitches[{i}]"
        if not isinstance(sd, list) or len(sd) != 2:
            raise PatternError(f"{spath} must list two edge references")
        refs = []
        for j, r in enumerate(sd):
            pname = _require(r, "panel", f"{spath}[{j}]")
            eidx = _require(r, "edge", f"{spath}[{j}]")
            if pname not in panels:
                raise PatternError(f"{spath}[{j}]: unknown panel {pname!r}")
            if not isinstance(eidx, int) or not 0 <= eidx < len(panels[pname].edges):
                raise PatternError(f"{spath}[{j}]: edge {eidx} out of range for panel {pname!r}")
            refs.append((pname, eidx))
        stitches.append(Stitch(refs[0], refs[1]))
    return SewingPattern(panels, stitches, str(doc.get("type", "")))


def parse_pattern(text: str) -> SewingPattern:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PatternError(f"invalid JSON: {exc}") from None
    return pattern_from_dict(doc)


def pattern_to_dict(p: SewingPattern) -> dict[str, Any]:
    panels = {}
    for name, panel in p.panels.items():
        edges = []
        for e in panel.edges:
            ed: dict[str, Any] = {"endpoints": [int(e.start), int(e.end)]}
            if e.is_curved:
                ed["curvature"] = [float(e.curvature[0]), float(e.curvature[1])]
            edges.append(ed)
        panels[name] = {
            "vertices": panel.vertices.tolist(),
            "edges": edges,
            "rotation": panel.placement.rotation.tolist(),
            "translation": panel.placement.translation.tolist(),
        }
    stitches = [[{"panel": s.first[0], "edge": int(s.first[1])},
                 {"panel": s.second[0], "edge": int(s.second[1])}] for s in p.stitches]
    return {"type": p.garment_type, "panels": panels, "stitches": stitches}


def serialize_pattern(p: SewingPattern) -> str:
    # json emits shortest round-trip float repr, so values survive bit-identically
    return json.dumps(pattern_to_dict(p), sort_keys=True, indent=1)


def load_pattern(path) -> SewingPattern:
    return parse_pattern(Path(path).read_text())


def save_pattern(p: SewingPattern, path) -> None:
    Path(path).write_text(serialize_pattern(p))


# --- validation --------------------------------------------------------------

def validate_pattern(p: SewingPattern, cmap: PanelClassMap | None = None) -> list[str]:
    """List of invariant violations; empty means valid."""
    out = []
    for name, panel in p.panels.items():
        n_v, edges = len(panel.vertices), panel.edges
        if len(edges) < 3:
            out.append(f"{name}: fewer than 3 edges")
        if len(edges) > MAX_EDGES:
            out.append(f"{name}: {len(edges)} edges exceeds maximum {MAX_EDGES}")
        if any(not (0 <= e.start < n_v and 0 <= e.end < n_v) for e in edges):
            out.append(f"{name}: edge references missing vertex")
            continue
        chained = all(edges[i].end == edges[(i + 1) % len(edges)].start for i in range(len(edges)))
        starts = sorted(e.start for e in edges)
        if not chained or starts != list(range(n_v)):
            out.append(f"{name}: loop not closed")
        if any(e.start == e.end for e in edges):
            out.append(f"{name}: zero-length edge")
        q = panel.placement.rotation
        if abs(np.linalg.norm(q) - 1.0) > geometry.QUAT_TOL:
            out.append(f"{name}: rotation quaternion not unit")
        elif q[3] < 0:
            out.append(f"{name}: rotation quaternion not canonical")

    used: dict[EdgeRef, int] = {}
    for i, s in enumerate(p.stitches):
        for ref in (s.first, s.second):
            pname, eidx = ref
            if pname not in p.panels or not 0 <= eidx < len(p.panels[pname].edges):
                out.append(f"stitch {i}: unresolved reference {ref}")
            used[ref] = used.get(ref, 0) + 1
        if s.first == s.second:
            out.append(f"stitch {i}: connects an edge to itself")
    for ref, count in used.items():
        if count > 1:
            out.append(f"edge {ref} used by {count} stitches")

    if cmap is not None:
        seen: dict[int, str] = {}
        for name in p.panels:
            try:
                c = cmap.class_of(p.garment_type, name)
            except PatternError as exc:
                out.append(str(exc))
                continue
            if c in seen:
                out.append(f"duplicate class {cmap.class_order[c]!r}: {seen[c]} and {name}")
            seen[c] = name
    return out


# --- tensor codec ----------------------------------------------------------

def panel_edge_rows(panel: Panel) -> np.ndarray:
    """(n_edges, 4) rows of (e_x, e_y, c_x, c_y)."""
    ev = geometry.edge_vectors(panel)
    curv = np.array([e.curvature for e in panel.edges], dtype=float)
    return np.hstack([ev, curv])


def encode_pattern(p: SewingPattern, cmap: PanelClassMap, with_stitch_info: bool = False) -> PatternTensor:
    n_feat = STITCH_FEATURES if with_stitch_info else SHAPE_FEATURES
    edges = np.zeros((len(cmap), MAX_EDGES, n_feat))
    placement = np.zeros((len(cmap), PLACEMENT_SIZE))
    stitched = {ref for s in p.stitches for ref in (s.first, s.second)}
    for name, panel in p.panels.items():
        if len(panel.edges) > MAX_EDGES:
            raise EncodingError(f"panel {name!r} has {len(panel.edges)} edges (max {MAX_EDGES})")
        c = cmap.class_of(p.garment_type, name)
        if np.any(edges[c]) or np.any(placement[c]):
            raise EncodingError(f"class slot {c} filled twice")
        n = len(panel.edges)
        edges[c, :n, :4] = panel_edge_rows(panel)
        if with_stitch_info:
            edges[c, :n, 4] = [0.0 if (name, i) in stitched else 1.0 for i in range(n)]
        placement[c] = panel.placement.vector()
    return PatternTensor(edges, placement)


def decode_pattern(t: PatternTensor, cmap: PanelClassMap,
                   thresholds: DecodeThresholds | None = None,
                   garment_type: str = "") -> SewingPattern:
    """Rebuild a pattern from a tensor in physical units.

    Rows whose edge vector is shorter than ``edge_eps`` are padding; a slot
    becomes a panel when at least ``min_edges`` rows survive. The last
    surviving edge closes the loop back to the first vertex; its mismatch is
    kept as ``Panel.loop_residual``.
    """
    th = thresholds or DecodeThresholds()
    panels: dict[str, Panel] = {}
    log: list[str] = []
    for c in range(t.edges.shape[0]):
        rows = t.edges[c]
        keep = np.linalg.norm(rows[:, :2], axis=1) >= th.edge_eps
        if not np.any(keep) and not np.any(rows):
            continue
        if keep.sum() < th.min_edges:
            if np.any(keep):
                log.append(f"slot {c} ({cmap.class_order[c]}): {int(keep.sum())} edges, skipped")
            continue
        rows = rows[keep]
        verts, residual = geometry.vertices_from_edges(rows[:, :2])
        n = len(rows)
        edges = [Edge(i, (i + 1) % n, (float(rows[i, 2]), float(rows[i, 3]))) for i in range(n)]
        q = t.placement[c, :4]
        try:
            q = geometry.canonical_quaternion(q)
        except geometry.GeometryError:
            log.append(f"slot {c}: zero quaternion replaced by identity")
            q = np.array([0.0, 0.0, 0.0, 1.0])
        name = cmap.class_order[c]
        res = float(np.linalg.norm(residual))
        if res > th.loop_eps:
            log.append(f"{name}: loop open (residual {res:.3f})")
        panels[name] = Panel(name, verts, edges, Placement(q, t.placement[c, 4:]), loop_residual=res)
    return SewingPattern(panels, [], garment_type, log)


def stitch_slot_keys(p: SewingPattern, cmap: PanelClassMap) -> set[frozenset]:
    """Stitches as unordered pairs of (class slot, edge index)."""
    out = set()
    for s in p.stitches:
        a = (cmap.class_of(p.garment_type, s.first[0]), s.first[1])
        b = (cmap.class_of(p.garment_type, s.second[0]), s.second[1])
        out.add(frozenset((a, b)))
    return out


def patterns_close(a: SewingPattern, b: SewingPattern, tol: float = 1e-6) -> bool:
    """Structural equality with vertex/placement tolerance."""
    if set(a.panels) != set(b.panels) or a.stitch_keys() != b.stitch_keys():
        return False
    for name, pa in a.panels.items():
        pb = b.panels[name]
        if len(pa.edges) != len(pb.edges):
            return False
        if not np.allclose(pa.loop_vertices(), pb.loop_vertices(), atol=tol, rtol=0):
            return False
        ca = np.array([e.curvature for e in pa.edges])
        cb = np.array([e.curvature for e in pb.edges])
        if not np.allclose(ca, cb, atol=tol, rtol=0):
            return False
        if not np.allclose(pa.placement.vector(), pb.placement.vector(), atol=tol, rtol=0):
            return False
    return True


def iter_stitched_refs(p: SewingPattern) -> Iterable[EdgeRef]:
    for s in p.stitches:
        yield s.first
        yield s.second

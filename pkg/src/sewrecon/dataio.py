"""Point clouds, meshes, normalization statistics and dataset layout."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .pattern import (
    PanelClassMap,
    PatternTensor,
    SewingPattern,
    encode_pattern,
    load_pattern,
)

log = logging.getLogger(__name__)

DEFAULT_POINTS = 2000
MAX_SCAN_REMOVAL = 0.4


class DataError(ValueError):
    pass


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3)
    faces: np.ndarray     # (F, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def write_obj(mesh: Mesh, path) -> None:
    lines = [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path) -> Mesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
        elif parts[0] == "f":
            idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
            # fan-triangulate polygons
            faces.extend([idx[0], idx[i], idx[i + 1]] for i in range(1, len(idx) - 1))
    return Mesh(np.array(verts), np.array(faces))


@dataclass
class PointCloudSample:
    points: np.ndarray
    source_id: str = ""
    corruption: str = "clean"

    def __len__(self) -> int:
        return len(self.points)


def sample_point_cloud(mesh: Mesh, n: int = DEFAULT_POINTS, rng: np.random.Generator | None = None,
                       source_id: str = "") -> PointCloudSample:
    """Area-uniform surface sampling with barycentric coordinates."""
    if len(mesh.faces) == 0:
        raise DataError("empty mesh")
    if n < 1:
        raise DataError("point count must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    areas = mesh.triangle_areas()
    total = areas.sum()
    if total <= 0:
        raise DataError("mesh has zero area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = (mesh.vertices[mesh.faces[tri, i]] for i in range(3))
    pts = (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
    return PointCloudSample(pts, source_id)


def corrupt_scan_imitation(cloud: PointCloudSample, n_occluders: int = 3,
                           radius_range: tuple[float, float] = (4.0, 10.0),
                           rng: np.random.Generator | None = None,
                           max_attempts: int = 100) -> PointCloudSample:
    """Punch spherical holes around randomly chosen surface points.

    Occluder sets removing more than 40% of the points are redrawn; after
    ``max_attempts`` failures the radii are halved and drawing continues.
    """
    rng = rng if rng is not None else np.random.default_rng()
    pts = cloud.points
    if n_occluders == 0 or len(pts) == 0:
        return PointCloudSample(pts.copy(), cloud.source_id, cloud.corruption)
    lo, hi = radius_range
    attempts = 0
    while True:
        centers = pts[rng.choice(len(pts), size=n_occluders, replace=False)]
        radii = rng.uniform(lo, hi, size=n_occluders)
        d = np.linalg.norm(pts[:, None, :] - centers[None, :, :], axis=-1)
        removed = np.any(d <= radii[None, :], axis=1)
        if removed.mean() <= MAX_SCAN_REMOVAL:
            break
        attempts += 1
        if attempts >= max_attempts:
            lo, hi, attempts = lo / 2, hi / 2, 0
    tag = "scan" if cloud.corruption == "clean" else f"{cloud.corruption}+scan"
    return PointCloudSample(pts[~removed].copy(), cloud.source_id, tag)


def add_gaussian_noise(cloud: PointCloudSample, sigma: float,
                       rng: np.random.Generator | None = None) -> PointCloudSample:
    if sigma < 0:
        raise DataError("sigma must be non-negative")
    rng = rng if rng is not None else np.random.default_rng()
    pts = cloud.points + rng.normal(0.0, sigma, size=cloud.points.shape) if sigma > 0 else cloud.points.copy()
    tag = f"gauss({sigma:g})" if cloud.corruption == "clean" else f"{cloud.corruption}+gauss({sigma:g})"
    return PointCloudSample(pts, cloud.source_id, tag)


# --- normalization ---------------------------------------------------------

@dataclass
class NormalizationStats:
    points_mean: np.ndarray
    points_std: np.ndarray
    edge_mean: np.ndarray       # (4,) e_x, e_y, c_x, c_y
    edge_std: np.ndarray
    placement_min: np.ndarray   # (7,)
    placement_max: np.ndarray

    def __post_init__(self):
        for name in ("points_mean", "points_std", "edge_mean", "edge_std", "placement_min", "placement_max"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("points_mean", "points_std", "edge_mean", "edge_std", "placement_min", "placement_max")}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(**{k: np.asarray(v) for k, v in d.items() if k != "id"})

    @property
    def stats_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def save(self, path) -> None:
        d = self.to_dict()
        d["id"] = self.stats_id
        Path(path).write_text(json.dumps(d, indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "NormalizationStats":
        return cls.from_dict(json.loads(Path(path).read_text()))

    # points
    def standardize_points(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.points_mean) / self.points_std

    def destandardize_points(self, pts: np.ndarray) -> np.ndarray:
        return pts * self.points_std + self.points_mean

    # pattern tensors
    def standardize_tensor(self, t: PatternTensor) -> PatternTensor:
        """Scale present rows/slots; padding stays exactly zero."""
        edges = t.edges.copy()
        placement = t.placement.copy()
        row_mask = np.any(t.edges[..., :4] != 0, axis=-1)
        edges[..., :4] = np.where(row_mask[..., None], (edges[..., :4] - self.edge_mean) / self.edge_std, 0.0)
        slot_mask = np.any(t.placement != 0, axis=-1)
        rng = self.placement_max - self.placement_min
        placement = np.where(slot_mask[:, None], (placement - self.placement_min) / rng, 0.0)
        return PatternTensor(edges, placement, self.stats_id)

    def destandardize_tensor(self, t: PatternTensor) -> PatternTensor:
        edges = t.edges.copy()
        edges[..., :4] = edges[..., :4] * self.edge_std + self.edge_mean
        placement = t.placement * (self.placement_max - self.placement_min) + self.placement_min
        return PatternTensor(edges, placement, None)


def fit_normalization(clouds: Iterable[np.ndarray], tensors: Iterable[PatternTensor]) -> NormalizationStats:
    """Fit statistics on the training split.

    Edge statistics use non-padding rows only; placement ranges use present
    panels only.
    """
    clouds = [np.asarray(c) for c in clouds]
    tensors = list(tensors)
    if not clouds or not tensors:
        raise DataError("empty training split")
    pts = np.concatenate(clouds, axis=0)
    rows = np.concatenate([t.edges[..., :4][np.any(t.edges[..., :4] != 0, axis=-1)] for t in tensors])
    places = np.concatenate([t.placement[np.any(t.placement != 0, axis=-1)] for t in tensors])
    stats = NormalizationStats(
        pts.mean(axis=0), pts.std(axis=0), rows.mean(axis=0), rows.std(axis=0),
        places.min(axis=0), places.max(axis=0))
    if np.any(stats.points_std <= 0) or np.any(stats.edge_std <= 0):
        raise DataError("zero-variance channel in training data")
    if np.any(stats.placement_max <= stats.placement_min):
        raise DataError("constant placement channel in training data")
    return stats


# --- dataset layout --------------------------------------------------------

@dataclass
class DatasetSplit:
    train: list[str]
    validation: list[str]
    test_seen: list[str]
    test_unseen: list[str]
    unseen_types: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"train": self.train, "validation": self.validation, "test_seen": self.test_seen,
                "test_unseen": self.test_unseen, "unseen_types": self.unseen_types}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(list(d["train"]), list(d["validation"]), list(d["test_seen"]),
                   list(d["test_unseen"]), list(d.get("unseen_types", [])))

    def all_ids(self) -> list[str]:
        return self.train + self.validation + self.test_seen + self.test_unseen

    def is_disjoint(self) -> bool:
        ids = self.all_ids()
        return len(ids) == len(set(ids))


def split_by_type(types: dict[str, str], unseen_types: Sequence[str], n_val: int, n_test: int,
                  rng: np.random.Generator) -> DatasetSplit:
    """Per seen type: ``n_val`` validation and ``n_test`` test samples, rest train.

    Every sample of an unseen type goes to ``test_unseen``.
    """
    split = DatasetSplit([], [], [], [], sorted(unseen_types))
    for gtype in sorted(set(types.values())):
        ids = sorted(i for i, t in types.items() if t == gtype)
        if gtype in unseen_types:
            split.test_unseen.extend(ids)
            continue
        ids = [ids[i] for i in rng.permutation(len(ids))]
        split.validation.extend(sorted(ids[:n_val]))
        split.test_seen.extend(sorted(ids[n_val:n_val + n_test]))
        split.train.extend(sorted(ids[n_val + n_test:]))
    return split


class GarmentDataset:
    """A dataset directory: ``patterns/*.json``, ``meshes/*.obj``, ``split.json``
    and (after preparation) ``norm_stats.json`` and ``class_map.json``."""

    def __init__(self, root, class_map: PanelClassMap | None = None):
        self.root = Path(root)
        cmap_path = self.root / "class_map.json"
        if class_map is None:
            if not cmap_path.exists():
                raise DataError(f"{cmap_path} missing")
            class_map = PanelClassMap.load(cmap_path)
        self.class_map = class_map
        self.split = DatasetSplit.from_dict(json.loads((self.root / "split.json").read_text()))
        self._patterns: dict[str, SewingPattern] = {}
        self._meshes: dict[str, Mesh] = {}

    @property
    def stats_path(self) -> Path:
        return self.root / "norm_stats.json"

    def stats(self) -> NormalizationStats:
        if not self.stats_path.exists():
            raise DataError("normalization stats missing; run prepare-data first")
        return NormalizationStats.load(self.stats_path)

    def pattern(self, sid: str) -> SewingPattern:
        if sid not in self._patterns:
            self._patterns[sid] = load_pattern(self.root / "patterns" / f"{sid}.json")
        return self._patterns[sid]

    def mesh(self, sid: str) -> Mesh:
        if sid not in self._meshes:
            self._meshes[sid] = read_obj(self.root / "meshes" / f"{sid}.obj")
        return self._meshes[sid]

    def cloud(self, sid: str, n: int, seed: int) -> PointCloudSample:
        """Deterministic cloud for (sample, seed), independent of call order."""
        rng = np.random.default_rng([seed, _id_seed(sid)])
        return sample_point_cloud(self.mesh(sid), n, rng, source_id=sid)

    def tensor(self, sid: str, with_stitch_info: bool = False) -> PatternTensor:
        return encode_pattern(self.pattern(sid), self.class_map, with_stitch_info)


def _id_seed(sid: str) -> int:
    return int.from_bytes(hashlib.sha256(sid.encode()).digest()[:4], "little")


def prepare_dataset(root, n_points: int = DEFAULT_POINTS, seed: int = 0) -> NormalizationStats:
    """Fit and persist normalization statistics over the training split."""
    ds = GarmentDataset(root)
    clouds = [ds.cloud(sid, n_points, seed).points for sid in ds.split.train]
    tensors = [ds.tensor(sid) for sid in ds.split.train]
    stats = fit_normalization(clouds, tensors)
    stats.save(ds.stats_path)
    log.info("fitted normalization on %d training samples (stats %s)", len(tensors), stats.stats_id)
    return stats

"""Inference and evaluation: clouds in, sewing patterns and reports out."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .dataio import (
    GarmentDataset,
    NormalizationStats,
    PointCloudSample,
    add_gaussian_noise,
    corrupt_scan_imitation,
)
from .metrics import REFERENCE, aggregate, sample_metrics
from .network import ShapeModel
from .pattern import DecodeThresholds, PanelClassMap, PatternTensor, SewingPattern, Stitch, decode_pattern
from .stitcher import StitchMLP, predict_stitches, recover_from_tags
from .training import load_shape_checkpoint, load_stitch_checkpoint

log = logging.getLogger(__name__)


class StatsMismatch(RuntimeError):
    pass


@dataclass
class ShapePredictor:
    model: ShapeModel
    stats: NormalizationStats
    class_map: PanelClassMap
    thresholds: DecodeThresholds = field(default_factory=DecodeThresholds)
    margin: float = 2.0
    batch_size: int = 30
    n_points: int = 2000

    @classmethod
    def from_checkpoint(cls, path) -> "ShapePredictor":
        ck = load_shape_checkpoint(path)
        c = ck.config
        return cls(ck.model, ck.stats, ck.class_map, c.thresholds(), c.margin, c.batch_size, c.n_points)

    def raw(self, clouds: list[np.ndarray]) -> list[PatternTensor]:
        """Destandardized network outputs, batched by point count."""
        out: list[PatternTensor | None] = [None] * len(clouds)
        by_size: dict[int, list[int]] = {}
        for i, c in enumerate(clouds):
            by_size.setdefault(len(c), []).append(i)
        dtype = next(self.model.parameters()).dtype
        with torch.no_grad():
            for idx in by_size.values():
                for b in range(0, len(idx), self.batch_size):
                    chunk = idx[b:b + self.batch_size]
                    pts = np.stack([self.stats.standardize_points(clouds[i]) for i in chunk])
                    pred = self.model(torch.as_tensor(pts, dtype=dtype))
                    edges = pred["edges"].numpy().astype(float)
                    placement = pred["placement"].numpy().astype(float)
                    for j, i in enumerate(chunk):
                        t = PatternTensor(edges[j], placement[j], self.stats.stats_id)
                        out[i] = self.stats.destandardize_tensor(t)
        return out

    def decode(self, t: PatternTensor) -> SewingPattern:
        p = decode_pattern(t, self.class_map, self.thresholds)
        if t.with_stitch_info:
            p.stitches = self._tag_stitches(t, p)
        return p

    def _tag_stitches(self, t: PatternTensor, p: SewingPattern) -> list[Stitch]:
        refs, rows = [], []
        for name, panel in p.panels.items():
            c = self.class_map.class_order.index(name)
            kept = np.flatnonzero(np.linalg.norm(t.edges[c, :, :2], axis=1) >= self.thresholds.edge_eps)
            for i in range(len(panel.edges)):
                refs.append((name, i))
                rows.append((c, kept[i]))
        if not refs:
            return []
        feats = np.array([t.edges[c, r] for c, r in rows])
        free = 1.0 / (1.0 + np.exp(-feats[:, 4]))
        pairs = recover_from_tags(free, feats[:, 5:8], self.margin)
        return [Stitch(refs[i], refs[j]) for i, j in pairs]

    def predict(self, clouds: list[np.ndarray]) -> list[SewingPattern]:
        return [self.decode(t) for t in self.raw(clouds)]

    def predict_ids(self, ds: GarmentDataset, ids: list[str], seed: int = 0) -> list[SewingPattern]:
        return self.predict([ds.cloud(sid, self.n_points, seed).points for sid in ids])


@dataclass
class EvalOptions:
    seed: int = 0
    sigma: float = 0.0
    scan: bool = False
    n_occluders: int = 3
    radius_range: tuple = (4.0, 10.0)
    splits: tuple = ("test_seen", "test_unseen")


def corrupted_clouds(ds: GarmentDataset, ids: list[str], n_points: int, options: EvalOptions) -> list[np.ndarray]:
    out = []
    for k, sid in enumerate(ids):
        cloud = ds.cloud(sid, n_points, options.seed)
        rng = np.random.default_rng([options.seed, 7919, k])
        if options.scan:
            cloud = corrupt_scan_imitation(cloud, options.n_occluders, options.radius_range, rng)
        if options.sigma > 0:
            cloud = add_gaussian_noise(cloud, options.sigma, rng)
        out.append(cloud.points)
    return out


def evaluate(shape_ckpt, ds: GarmentDataset, stitch_ckpt=None, options: EvalOptions | None = None) -> dict:
    """Evaluation report for the seen/unseen test splits.

    Unseen-type stitch metrics only count samples whose panel count was
    predicted correctly. Refuses to run when the dataset's normalization
    statistics differ from the checkpoint's.
    """
    options = options or EvalOptions()
    predictor = ShapePredictor.from_checkpoint(shape_ckpt)
    if ds.stats_path.exists() and ds.stats().stats_id != predictor.stats.stats_id:
        raise StatsMismatch("dataset normalization stats do not match the checkpoint")
    stitcher: StitchMLP | None = load_stitch_checkpoint(stitch_ckpt)[0] if stitch_ckpt else None
    with_stitches = stitcher is not None or predictor.model.config.with_tags
    report = {"options": {"seed": options.seed, "sigma": options.sigma, "scan": options.scan},
              "stats_id": predictor.stats.stats_id, "splits": {}, "reference": REFERENCE}
    for split in options.splits:
        ids = getattr(ds.split, split)
        if not ids:
            continue
        clouds = corrupted_clouds(ds, ids, predictor.n_points, options)
        preds = predictor.predict(clouds)
        rows = []
        for sid, pred in zip(ids, preds):
            if stitcher is not None:
                pred.stitches = predict_stitches(pred, stitcher)
            row = sample_metrics(pred, ds.pattern(sid), ds.class_map, predictor.thresholds.loop_eps,
                                 with_stitches)
            row["id"] = sid
            rows.append(row)
        report["splits"][split] = {
            "aggregate": aggregate(rows, panel_count_filter=(split == "test_unseen")),
            "samples": rows,
        }
    return report


def noise_sweep(shape_ckpt, ds: GarmentDataset, sigmas=(0.0, 0.2, 0.4, 0.6, 0.8, 1.0), stitch_ckpt=None,
                seed: int = 0, splits=("test_seen", "test_unseen")) -> dict:
    table = []
    for s in sigmas:
        rep = evaluate(shape_ckpt, ds, stitch_ckpt, EvalOptions(seed=seed, sigma=float(s), splits=tuple(splits)))
        table.append({"sigma": float(s),
                      **{sp: rep["splits"][sp]["aggregate"] for sp in rep["splits"]}})
    return {"sigmas": [float(s) for s in sigmas], "table": table}


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True, allow_nan=True)


def format_table(report: dict) -> str:
    cols = ["n", "panel_l2", "panels_acc", "edges_acc", "rot_l2", "transl_l2", "precision", "recall"]
    lines = ["split        " + " ".join(f"{c:>10}" for c in cols)]
    for split, body in report["splits"].items():
        agg = body["aggregate"]
        cells = []
        for c in cols:
            v = agg.get(c)
            cells.append(f"{'-':>10}" if v is None else (f"{v:>10d}" if isinstance(v, int) else f"{v:>10.3f}"))
        lines.append(f"{split:<12} " + " ".join(cells))
    return "\n".join(lines)


def write_svg(pred: SewingPattern, gt: SewingPattern | None, path) -> None:
    """Side-by-side panel outlines (predicted solid, ground truth dashed)."""
    from .geometry import panel_outline

    shapes, x_off = [], 0.0
    names = sorted(set(pred.panels) | set(gt.panels if gt else {}))
    for name in names:
        width = 0.0
        for src, style in ((gt, "stroke-dasharray='3,2' stroke='#888'"), (pred, "stroke='#c33'")):
            if src is None or name not in src.panels:
                continue
            o = panel_outline(src.panels[name])
            width = max(width, float(o[:, 0].max() - o[:, 0].min()))
            pts = " ".join(f"{x + x_off:.2f},{-y:.2f}" for x, y in o)
            shapes.append(f"<polygon points='{pts}' fill='none' {style}/>")
        shapes.append(f"<text x='{x_off:.1f}' y='12' font-size='6'>{name}</text>")
        x_off += width + 10
    svg = (f"<svg xmlns='http://www.w3.org/2000/svg' viewBox='-5 -90 {x_off + 10:.1f} 110'>"
           + "".join(shapes) + "</svg>")
    Path(path).write_text(svg)

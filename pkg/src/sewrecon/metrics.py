"""Pattern reconstruction metrics.

Predicted and ground-truth panels correspond through their class slot.
Panel-level metrics average per panel, then per sample, then over samples.
"""
from __future__ import annotations

import logging

import numpy as np

from . import geometry
from .pattern import Panel, PanelClassMap, SewingPattern, stitch_slot_keys

log = logging.getLogger(__name__)

# full-dataset results of the published attention model, kept for reference
REFERENCE = {
    "seen": {"panel_l2": 1.5, "panels_acc": 99.7, "edges_acc": 99.7, "rot_l2": 0.04, "transl_l2": 1.46,
             "precision": 96.3, "recall": 99.4},
    "unseen": {"panel_l2": 5.2, "panels_acc": 83.6, "edges_acc": 87.3},
}


def slot_panels(p: SewingPattern, cmap: PanelClassMap) -> dict[int, Panel]:
    return {cmap.class_of(p.garment_type, name): panel for name, panel in p.panels.items()}


def panels_accuracy(preds: list[SewingPattern], gts: list[SewingPattern]) -> float:
    if not gts:
        return float("nan")
    return float(np.mean([len(p.panels) == len(g.panels) for p, g in zip(preds, gts)]))


def matched_panels(pred: SewingPattern, gt: SewingPattern, cmap: PanelClassMap) -> list[tuple[Panel, Panel]]:
    ps, gs = slot_panels(pred, cmap), slot_panels(gt, cmap)
    return [(ps[c], gs[c]) for c in sorted(set(ps) & set(gs))]


def edges_accuracy(preds: list[SewingPattern], gts: list[SewingPattern], cmap: PanelClassMap,
                   loop_eps: float = 0.5) -> float:
    """Share of matched panels with the right edge count and a closed loop."""
    hits = []
    for pred, gt in zip(preds, gts):
        for pp, gp in matched_panels(pred, gt, cmap):
            hits.append(len(pp.edges) == len(gp.edges) and pp.loop_residual <= loop_eps)
    return float(np.mean(hits)) if hits else float("nan")


def _shape_points(panel: Panel, curved: list[bool]) -> np.ndarray:
    verts = panel.loop_vertices()
    pts = [verts]
    ctrl = []
    for i, e in enumerate(panel.edges):
        if curved[i]:
            s, d = panel.vertices[e.start], panel.vertices[e.end]
            ctrl.append(geometry.curvature_to_panel(s, d, e.curvature) if np.any(s != d) else s)
    if ctrl:
        pts.append(np.array(ctrl))
    return np.vstack(pts)


def panel_l2(pred: Panel, gt: Panel) -> float:
    """Mean vertex distance (cm), control points of curved gt edges included.

    Panels with different edge counts are compared over the common prefix
    of the loop.
    """
    n = min(len(pred.edges), len(gt.edges))
    if n < len(gt.edges) or n < len(pred.edges):
        log.debug("edge count mismatch %d vs %d; comparing first %d", len(pred.edges), len(gt.edges), n)
    curved = [gt.edges[i].is_curved for i in range(n)]
    sub_p = Panel(pred.name, pred.vertices, pred.edges[:n])
    sub_g = Panel(gt.name, gt.vertices, gt.edges[:n])
    a, b = _shape_points(sub_p, curved), _shape_points(sub_g, curved)
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def rot_transl_l2(pred: Panel, gt: Panel) -> tuple[float, float]:
    q_p = geometry.canonical_quaternion(pred.placement.rotation)
    q_g = geometry.canonical_quaternion(gt.placement.rotation)
    return (float(np.linalg.norm(q_p - q_g)),
            float(np.linalg.norm(pred.placement.translation - gt.placement.translation)))


def stitch_pr(pred: set, gt: set) -> tuple[float, float]:
    """Precision and recall of unordered stitch pairs.

    An empty prediction has precision 1 only when nothing was to be found;
    an empty ground truth gives recall 1.
    """
    tp = len(pred & gt)
    precision = tp / len(pred) if pred else (1.0 if not gt else 0.0)
    recall = tp / len(gt) if gt else 1.0
    return precision, recall


def sample_metrics(pred: SewingPattern, gt: SewingPattern, cmap: PanelClassMap,
                   loop_eps: float = 0.5, with_stitches: bool = True) -> dict:
    """Per-sample row of every metric (NaN where undefined)."""
    pairs = matched_panels(pred, gt, cmap)
    l2 = [panel_l2(p, g) for p, g in pairs]
    rt = [rot_transl_l2(p, g) for p, g in pairs]
    edges_ok = [len(p.edges) == len(g.edges) and p.loop_residual <= loop_eps for p, g in pairs]
    row = {
        "n_panels_pred": len(pred.panels),
        "n_panels_gt": len(gt.panels),
        "panels_ok": len(pred.panels) == len(gt.panels),
        "edges_ok": int(sum(edges_ok)),
        "edges_total": len(edges_ok),
        "panel_l2": float(np.mean(l2)) if l2 else float("nan"),
        "rot_l2": float(np.mean([r for r, _ in rt])) if rt else float("nan"),
        "transl_l2": float(np.mean([t for _, t in rt])) if rt else float("nan"),
    }
    if with_stitches:
        p, r = stitch_pr(stitch_slot_keys(pred, cmap), stitch_slot_keys(gt, cmap))
        row["precision"], row["recall"] = p, r
    return row


def aggregate(rows: list[dict], panel_count_filter: bool = False) -> dict:
    """Split-level aggregates; percentages for the accuracy and stitch scores.

    ``panel_count_filter`` restricts stitch precision/recall to samples with
    the correct number of panels.
    """
    if not rows:
        return {"n": 0}

    def mean(key, subset=rows):
        vals = [r[key] for r in subset if key in r and not np.isnan(r[key])]
        return float(np.mean(vals)) if vals else float("nan")

    edges_total = sum(r["edges_total"] for r in rows)
    out = {
        "n": len(rows),
        "panels_acc": 100.0 * float(np.mean([r["panels_ok"] for r in rows])),
        "edges_acc": 100.0 * sum(r["edges_ok"] for r in rows) / edges_total if edges_total else float("nan"),
        "panel_l2": mean("panel_l2"),
        "rot_l2": mean("rot_l2"),
        "transl_l2": mean("transl_l2"),
    }
    if "precision" in rows[0]:
        subset = [r for r in rows if r["panels_ok"]] if panel_count_filter else rows
        out["stitch_n"] = len(subset)
        out["precision"] = 100.0 * mean("precision", subset)
        out["recall"] = 100.0 * mean("recall", subset)
    return out

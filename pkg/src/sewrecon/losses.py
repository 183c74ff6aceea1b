"""Training objectives and orderless panel matching.

Tensors are batched: edge rows ``(B, C, E, F)``, placements ``(B, C, 7)``.
The first four edge features are ``(e_x, e_y, c_x, c_y)``; in tag mode
feature 4 is the free-edge logit and features 5-7 the stitch tag.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from scipy.optimize import linear_sum_assignment

SHAPE_TERMS = ("edge", "loop", "placement")
STITCH_TERMS = ("class", "tags")


@dataclass
class LossWeights:
    edge: float = 1.0
    loop: float = 1.0
    placement: float = 1.0
    stitch_class: float = 1.0
    tags: float = 1.0
    stitch_epoch: int = 40
    margin: float = 2.0

    def __post_init__(self):
        if min(self.edge, self.loop, self.placement, self.stitch_class, self.tags) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.margin <= 0:
            raise ValueError("tag margin must be positive")


@dataclass
class StitchSupervision:
    """Ground-truth stitches of one sample as flat edge ids (slot * E + row)."""
    stitches: list[tuple[int, int]] = field(default_factory=list)

    @property
    def non_free(self) -> set[int]:
        return {i for pair in self.stitches for i in pair}


def edge_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """MSE over every shape feature of every slot and row, padding included."""
    if pred.shape[:-1] != gt.shape[:-1]:
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(gt.shape)}")
    return F.mse_loss(pred[..., :4], gt[..., :4])


def loop_loss(pred: torch.Tensor, present: torch.Tensor) -> torch.Tensor:
    """Mean over present panels of the norm of the summed edge vectors.

    ``pred`` (..., E, F), ``present`` (...) boolean.
    """
    residual = pred[..., :2].sum(dim=-2)
    # smooth at zero so the gradient stays defined for closed loops
    norm = torch.sqrt((residual * residual).sum(-1) + 1e-24) - 1e-12
    mask = present.to(pred.dtype)
    return (norm * mask).sum() / mask.sum().clamp_min(1)


def placement_loss(pred: torch.Tensor, gt: torch.Tensor, present: torch.Tensor) -> torch.Tensor:
    """MSE over the 7 placement values, averaged over present panels."""
    sq = ((pred - gt) ** 2).mean(-1)
    mask = present.to(pred.dtype)
    return (sq * mask).sum() / mask.sum().clamp_min(1)


def class_loss(logits: torch.Tensor, free_target: torch.Tensor, edge_present: torch.Tensor) -> torch.Tensor:
    """Mean BCE of the free-edge logit over present edges (target 1 = free)."""
    bce = F.binary_cross_entropy_with_logits(logits, free_target, reduction="none")
    mask = edge_present.to(logits.dtype)
    return (bce * mask).sum() / mask.sum().clamp_min(1)


def tag_loss(tags: torch.Tensor, sup: StitchSupervision, margin: float) -> torch.Tensor:
    """Similarity plus separation terms for one sample.

    ``tags`` is ``(n_edges, 3)`` indexed by flat edge id. Separation runs
    over unordered non-free pairs that are not stitched together and hinges
    the *squared* distance against the margin.
    """
    zero = tags.sum() * 0.0
    if not sup.stitches:
        return zero
    a = torch.tensor([s[0] for s in sup.stitches])
    b = torch.tensor([s[1] for s in sup.stitches])
    similarity = ((tags[a] - tags[b]) ** 2).sum()
    nf = sorted(sup.non_free)
    stitched = {frozenset(s) for s in sup.stitches}
    pairs = [(i, j) for i, j in itertools.combinations(nf, 2) if frozenset((i, j)) not in stitched]
    if not pairs:
        return similarity
    pi = torch.tensor([p[0] for p in pairs])
    pj = torch.tensor([p[1] for p in pairs])
    d2 = ((tags[pi] - tags[pj]) ** 2).sum(-1)
    separation = torch.clamp(margin - d2, min=0).sum()
    return similarity + separation


def total_loss(pred: dict, gt: dict, epoch: int, weights: LossWeights | None = None,
               supervision: list[StitchSupervision] | None = None) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted sum of the active terms plus a per-term breakdown.

    ``gt`` holds ``edges`` and ``placement`` (standardized) and the boolean
    masks ``present`` (B, C) and ``edge_present`` (B, C, E). When the model
    emits stitch features and ``supervision`` is given, the class and tag
    terms join from ``weights.stitch_epoch`` on (zero before).
    """
    w = weights or LossWeights()
    terms = {
        "edge": edge_loss(pred["edges"], gt["edges"]),
        "loop": loop_loss(pred["edges"], gt["present"]),
        "placement": placement_loss(pred["placement"], gt["placement"], gt["present"]),
    }
    scaled = {"edge": w.edge, "loop": w.loop, "placement": w.placement}
    tag_mode = pred["edges"].shape[-1] > 4 and supervision is not None
    if tag_mode:
        if epoch >= w.stitch_epoch:
            logits = pred["edges"][..., 4]
            terms["class"] = class_loss(logits, gt["edges"][..., 4], gt["edge_present"])
            flat = pred["edges"][..., 5:8].reshape(pred["edges"].shape[0], -1, 3)
            terms["tags"] = torch.stack([tag_loss(flat[i], s, w.margin) for i, s in enumerate(supervision)]).mean()
        else:
            terms["class"] = pred["edges"].sum() * 0.0
            terms["tags"] = pred["edges"].sum() * 0.0
        scaled.update({"class": w.stitch_class, "tags": w.tags})
    parts = {k: scaled[k] * v for k, v in terms.items()}
    total = sum(parts.values())
    breakdown = {k: float(v.detach()) for k, v in parts.items()}
    breakdown["total"] = float(total.detach())
    return total, breakdown


# --- orderless matching -----------------------------------------------------

def panel_vectors(edges: np.ndarray, placement: np.ndarray) -> np.ndarray:
    """Concatenate every slot's edge rows with its placement: (C, E*F + 7)."""
    return np.concatenate([edges.reshape(edges.shape[0], -1), placement], axis=1)


def match_cost(pred_vecs: np.ndarray, gt_vecs: np.ndarray) -> np.ndarray:
    diff = gt_vecs[:, None, :] - pred_vecs[None, :, :]
    return np.sqrt((diff * diff).sum(-1))


def orderless_match(pred_vecs: np.ndarray, gt_vecs: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment of ground-truth panels to predicted slots.

    Returns ``slot`` with ``slot[g]`` the predicted slot receiving gt panel
    ``g``. Requires at least as many slots as gt panels.
    """
    cost = match_cost(np.asarray(pred_vecs, dtype=float), np.asarray(gt_vecs, dtype=float))
    rows, cols = linear_sum_assignment(cost)
    slot = np.empty(len(gt_vecs), dtype=int)
    slot[rows] = cols
    return slot


def reorder_targets(gt_edges: np.ndarray, gt_placement: np.ndarray, present: np.ndarray,
                    pred_edges: np.ndarray, pred_placement: np.ndarray):
    """Move present gt panels into their matched prediction slots (one sample)."""
    idx = np.flatnonzero(present)
    n_feat = gt_edges.shape[-1]
    pred_v = panel_vectors(pred_edges[..., :n_feat], pred_placement)
    gt_v = panel_vectors(gt_edges[idx], gt_placement[idx])
    slots = orderless_match(pred_v, gt_v)
    edges = np.zeros_like(gt_edges)
    placement = np.zeros_like(gt_placement)
    new_present = np.zeros_like(present)
    edges[slots] = gt_edges[idx]
    placement[slots] = gt_placement[idx]
    new_present[slots] = True
    return edges, placement, new_present, dict(zip(idx.tolist(), slots.tolist()))

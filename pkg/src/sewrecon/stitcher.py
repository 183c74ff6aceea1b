"""Stitch recovery: tag matching and the edge-pair classifier."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import geometry
from .pattern import PanelClassMap, SewingPattern, Stitch

log = logging.getLogger(__name__)

PAIR_FEATURES = 16


# --- tag-based recovery ---------------------------------------------------

def recover_from_tags(free_prob: np.ndarray, tags: np.ndarray, margin: float = 2.0) -> list[tuple[int, int]]:
    """Greedily pair non-free edges with the closest tags.

    Candidates are edges with ``free_prob < 0.5``. The closest remaining pair
    is stitched while its tag distance is below ``margin / 2``.
    """
    cand = np.flatnonzero(np.asarray(free_prob) < 0.5)
    tags = np.asarray(tags, dtype=float)
    if len(cand) < 2:
        return []
    d = np.linalg.norm(tags[cand, None, :] - tags[None, cand, :], axis=-1)
    d[np.diag_indices(len(cand))] = np.inf
    alive = np.ones(len(cand), dtype=bool)
    out = []
    while alive.sum() >= 2:
        sub = np.where(alive[:, None] & alive[None, :], d, np.inf)
        i, j = np.unravel_index(np.argmin(sub), sub.shape)
        if not sub[i, j] < margin / 2:
            break
        out.append((int(cand[min(i, j)]), int(cand[max(i, j)])))
        alive[[i, j]] = False
    if alive.sum():
        log.debug("%d non-free edges left unstitched", int(alive.sum()))
    return sorted(out)


def tag_stitches(pattern: SewingPattern, free_logits: dict, tags: dict, margin: float = 2.0) -> list[Stitch]:
    """Attach tag-recovered stitches; ``free_logits``/``tags`` keyed by panel name."""
    refs = pattern.edge_refs()
    probs = np.array([1 / (1 + np.exp(-free_logits[p][i])) for p, i in refs])
    tag_arr = np.array([tags[p][i] for p, i in refs]).reshape(-1, 3)
    return [Stitch(refs[i], refs[j]) for i, j in recover_from_tags(probs, tag_arr, margin)]


# --- pair classifier --------------------------------------------------------

@dataclass
class StitchMLPConfig:
    hidden: int = 200
    layers: int = 3


@dataclass
class PairBatchSpec:
    positives: int = 200
    negatives: int = 200


class StitchMLP(nn.Module):
    """Edge-pair feature (16) -> stitch logit; sigmoid gives the probability."""

    def __init__(self, config: StitchMLPConfig | None = None):
        super().__init__()
        c = config or StitchMLPConfig()
        sizes = [PAIR_FEATURES] + [c.hidden] * (c.layers - 1) + [1]
        layers: list[nn.Module] = []
        for i in range(len(sizes) - 1):
            layers.append(nn.Linear(sizes[i], sizes[i + 1]))
            if i < len(sizes) - 2:
                layers.append(nn.ReLU())
        self.net = nn.Sequential(*layers)
        self.register_buffer("feat_mean", torch.zeros(PAIR_FEATURES))
        self.register_buffer("feat_std", torch.ones(PAIR_FEATURES))

    def logits(self, feats: torch.Tensor) -> torch.Tensor:
        return self.net((feats - self.feat_mean) / self.feat_std).squeeze(-1)

    def forward(self, feats: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(feats))


def stitch_mlp(feats: np.ndarray, model: StitchMLP) -> np.ndarray:
    with torch.no_grad():
        return model(torch.as_tensor(np.asarray(feats), dtype=next(model.parameters()).dtype)).numpy()


def _non_stitched_pairs(pattern: SewingPattern) -> list[tuple]:
    stitched = pattern.stitch_keys()
    return [(a, b) for a, b in itertools.combinations(pattern.edge_refs(), 2)
            if frozenset((a, b)) not in stitched]


def build_pair_batch(pattern: SewingPattern, spec: PairBatchSpec | None = None,
                     rng: np.random.Generator | None = None,
                     randomize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Balanced labelled pair features for one pattern.

    Stitched pairs are drawn with replacement; non-stitched pairs without
    replacement when enough exist. ``randomize`` flips pair/vertex order.
    """
    spec = spec or PairBatchSpec()
    rng = rng if rng is not None else np.random.default_rng()
    orient = rng if randomize else None
    feats, labels = [], []
    if pattern.stitches:
        for k in rng.integers(len(pattern.stitches), size=spec.positives):
            s = pattern.stitches[k]
            feats.append(geometry.edge_pair_feature(pattern, s.first, s.second, orient))
            labels.append(1.0)
    else:
        log.info("pattern %r has no stitches; negatives only", pattern.garment_type)
    negatives = _non_stitched_pairs(pattern)
    if negatives:
        replace = len(negatives) < spec.negatives
        for k in rng.choice(len(negatives), size=spec.negatives, replace=replace):
            a, b = negatives[k]
            feats.append(geometry.edge_pair_feature(pattern, a, b, orient))
            labels.append(0.0)
    return np.array(feats).reshape(-1, PAIR_FEATURES), np.array(labels)


def greedy_resolve(pairs: list[tuple], probs: np.ndarray, threshold: float = 0.5) -> list[tuple]:
    """Accept pairs by descending probability while both edges are unused."""
    order = sorted(range(len(pairs)), key=lambda k: (-probs[k], k))
    used, out = set(), []
    for k in order:
        if probs[k] <= threshold:
            break
        a, b = pairs[k]
        if a in used or b in used:
            continue
        used.update((a, b))
        out.append(pairs[k])
    return out


def pair_probabilities(pattern: SewingPattern, model: StitchMLP) -> tuple[list[tuple], np.ndarray]:
    """Scores for all unordered edge pairs, averaged over both edge orders."""
    refs = pattern.edge_refs()
    pairs = list(itertools.combinations(refs, 2))
    if not pairs:
        return [], np.zeros(0)
    per_edge = {r: geometry.edge_feature(pattern, r) for r in refs}
    ab = np.array([np.concatenate([per_edge[a], per_edge[b]]) for a, b in pairs])
    ba = np.concatenate([ab[:, 8:], ab[:, :8]], axis=1)
    probs = 0.5 * (stitch_mlp(ab, model) + stitch_mlp(ba, model))
    return pairs, probs


def predict_stitches(pattern: SewingPattern, model: StitchMLP) -> list[Stitch]:
    pairs, probs = pair_probabilities(pattern, model)
    return [Stitch(a, b) for a, b in greedy_resolve(pairs, probs)]


# --- training ----------------------------------------------------------------

def rename_to_classes(pattern: SewingPattern, cmap: PanelClassMap) -> SewingPattern:
    """Same pattern with panels named by their class (the decoder's naming)."""
    names = {n: cmap.class_order[cmap.class_of(pattern.garment_type, n)] for n in pattern.panels}
    panels = {names[n]: p for n, p in pattern.panels.items()}
    stitches = [Stitch((names[s.first[0]], s.first[1]), (names[s.second[0]], s.second[1]))
                for s in pattern.stitches]
    return SewingPattern(panels, stitches, pattern.garment_type)


def transfer_labels(pred: SewingPattern, gt: SewingPattern, cmap: PanelClassMap) -> SewingPattern | None:
    """Copy gt stitches onto a predicted pattern by (class, edge index).

    Returns ``None`` when the predicted panel classes differ from gt.
    """
    gt_named = rename_to_classes(gt, cmap)
    if set(pred.panels) != set(gt_named.panels):
        return None
    stitches = [s for s in gt_named.stitches
                if s.first[1] < len(pred.panels[s.first[0]].edges)
                and s.second[1] < len(pred.panels[s.second[0]].edges)]
    return SewingPattern(pred.panels, stitches, gt.garment_type)


@dataclass
class StitchTrainConfig:
    epochs: int = 60
    lr: float = 0.002
    patterns_per_batch: int = 30
    positives: int = 200
    negatives: int = 200
    seed: int = 0


def fit_feature_stats(patterns: list[SewingPattern]) -> tuple[np.ndarray, np.ndarray]:
    feats = np.array([geometry.edge_feature(p, r) for p in patterns for r in p.edge_refs()])
    pair = np.concatenate([feats, feats], axis=1)
    std = pair.std(axis=0)
    std[std == 0] = 1.0
    return pair.mean(axis=0), std


def train_stitcher(patterns: list[SewingPattern], config: StitchTrainConfig | None = None,
                   model_config: StitchMLPConfig | None = None,
                   history: list | None = None) -> StitchMLP:
    """BCE training on freshly sampled balanced pair batches every epoch.

    ``patterns`` carry their own stitch labels: ground truth, or predictions
    with labels transferred by :func:`transfer_labels`.
    """
    from .training import one_cycle_lr

    c = config or StitchTrainConfig()
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(c.seed)
    try:
        model = StitchMLP(model_config)
    finally:
        torch.random.set_rng_state(gen_state)
    mean, std = fit_feature_stats(patterns)
    model.feat_mean.copy_(torch.as_tensor(mean, dtype=torch.float32))
    model.feat_std.copy_(torch.as_tensor(std, dtype=torch.float32))
    opt = torch.optim.Adam(model.parameters(), lr=c.lr)
    rng = np.random.default_rng(c.seed)
    spec = PairBatchSpec(c.positives, c.negatives)
    n_batches = max(1, int(np.ceil(len(patterns) / c.patterns_per_batch)))
    total_steps, step = c.epochs * n_batches, 0
    loss_fn = nn.BCEWithLogitsLoss()
    for epoch in range(c.epochs):
        order = rng.permutation(len(patterns))
        running = 0.0
        for b in range(n_batches):
            chunk = order[b * c.patterns_per_batch:(b + 1) * c.patterns_per_batch]
            xs, ys = zip(*(build_pair_batch(patterns[i], spec, rng) for i in chunk))
            x = torch.as_tensor(np.concatenate(xs), dtype=torch.float32)
            y = torch.as_tensor(np.concatenate(ys), dtype=torch.float32)
            for g in opt.param_groups:
                g["lr"] = one_cycle_lr(step, total_steps, c.lr)
            opt.zero_grad()
            loss = loss_fn(model.logits(x), y)
            loss.backward()
            opt.step()
            running += float(loss.detach()) * len(chunk)
            step += 1
        if history is not None:
            history.append({"epoch": epoch, "loss": running / len(patterns)})
    model.eval()
    return model

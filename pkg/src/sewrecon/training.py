"""Training configuration, schedule, shape/stitch training loops and checkpoints."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import torch

from . import __version__
from .dataio import GarmentDataset, NormalizationStats
from .losses import LossWeights, StitchSupervision, reorder_targets, total_loss
from .network import NetworkConfig, ShapeModel, build_model
from .pattern import MAX_EDGES, DecodeThresholds, PanelClassMap
from .stitcher import StitchMLP, StitchMLPConfig, StitchTrainConfig

log = logging.getLogger(__name__)

SHAPE_FORMAT = "sewrecon-shape/1"
STITCH_FORMAT = "sewrecon-stitch/1"
MODES = ("attention", "baseline", "attention+tags", "baseline+tags")


class TrainingError(RuntimeError):
    pass


def one_cycle_lr(step: int, total_steps: int, max_lr: float, pct_start: float = 0.3,
                 div_factor: float = 25.0, final_div_factor: float = 1e4) -> float:
    """Cosine one-cycle schedule (warm-up to ``max_lr``, then anneal).

    Starts at ``max_lr / div_factor`` and ends at
    ``max_lr / (div_factor * final_div_factor)``; the peak is reached at step
    ``pct_start * total_steps - 1``.
    """
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    initial = max_lr / div_factor
    final = initial / final_div_factor
    up_end = float(pct_start * total_steps) - 1
    down_end = float(total_steps - 1)

    def cos_anneal(start, end, frac):
        return end + (start - end) / 2.0 * (math.cos(math.pi * frac) + 1)

    if step <= up_end or up_end <= 0:
        frac = step / up_end if up_end > 0 else 1.0
        return cos_anneal(initial, max_lr, frac)
    return cos_anneal(max_lr, final, (step - up_end) / max(down_end - up_end, 1e-12))


@dataclass
class TrainConfig:
    data_root: str = "data"
    mode: str = "attention"
    orderless: bool = False
    epochs: int = 350
    batch_size: int = 30
    max_lr: float = 0.002
    patience: int = 100
    seed: int = 0
    n_points: int = 2000
    resample_points: bool = True
    width_divisor: int = 1
    threads: int = 1
    stitch_epoch: int = 40
    margin: float = 2.0
    loss_weights: dict = field(default_factory=dict)
    # learning-rate multiplier for the attention MLP (attention mode only)
    attention_lr_scale: float = 1.0
    # stitch classifier stage
    stitch_source: str = "predictions"   # "predictions" | "gt"
    stitch_epochs: int = 60
    stitch_lr: float = 0.002
    stitch_batch: int = 30
    # decoding
    edge_eps: float = 0.5
    loop_eps: float = 0.5
    min_edges: int = 3

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.stitch_source not in ("predictions", "gt"):
            raise ValueError("stitch_source must be 'predictions' or 'gt'")
        for name in ("epochs", "batch_size", "patience", "n_points", "width_divisor", "stitch_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.attention_lr_scale <= 0:
            raise ValueError("attention_lr_scale must be positive")
        if self.max_lr <= 0:
            raise ValueError("max_lr must be positive")

    @property
    def architecture(self) -> str:
        return self.mode.split("+")[0]

    @property
    def with_tags(self) -> bool:
        return self.mode.endswith("+tags")

    def thresholds(self) -> DecodeThresholds:
        return DecodeThresholds(self.edge_eps, self.loop_eps, self.min_edges)

    def weights(self) -> LossWeights:
        return LossWeights(stitch_epoch=self.stitch_epoch, margin=self.margin, **self.loss_weights)

    def network_config(self, n_classes: int) -> NetworkConfig:
        cfg = NetworkConfig(mode=self.architecture, n_classes=n_classes, with_tags=self.with_tags)
        return cfg.scaled(self.width_divisor) if self.width_divisor > 1 else cfg

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


PRESETS = {
    # hyper-parameters of the published full-scale runs (multi-GPU days; not desk-verifiable)
    "paper": {},
    "desk": {"epochs": 100, "patience": 40, "width_divisor": 4, "n_points": 500, "stitch_epochs": 40,
             "attention_lr_scale": 0.1, "loss_weights": {"loop": 0.01}},
}


def load_config(path=None, preset: str = "desk", overrides: dict | None = None) -> TrainConfig:
    """Preset, then a JSON/TOML file, then explicit overrides."""
    d: dict[str, Any] = dict(PRESETS[preset])
    if path is not None:
        path = Path(path)
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            d.update(tomllib.loads(path.read_text()))
        else:
            d.update(json.loads(path.read_text()))
    d.update(overrides or {})
    return TrainConfig.from_dict(d)


def set_determinism(threads: int) -> None:
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)


# --- batches ---------------------------------------------------------------

@dataclass
class Targets:
    edges: np.ndarray          # (C, E, F) standardized
    placement: np.ndarray      # (C, 7) normalized
    present: np.ndarray        # (C,)
    edge_present: np.ndarray   # (C, E)
    supervision: StitchSupervision


def sample_targets(ds: GarmentDataset, sid: str, stats: NormalizationStats, with_tags: bool) -> Targets:
    raw = ds.tensor(sid, with_stitch_info=with_tags)
    std = stats.standardize_tensor(raw)
    present = np.any(raw.edges[..., :4] != 0, axis=(1, 2))
    edge_present = np.any(raw.edges[..., :4] != 0, axis=-1)
    p = ds.pattern(sid)
    cmap = ds.class_map
    flat = []
    for s in p.stitches:
        a = cmap.class_of(p.garment_type, s.first[0]) * MAX_EDGES + s.first[1]
        b = cmap.class_of(p.garment_type, s.second[0]) * MAX_EDGES + s.second[1]
        flat.append((a, b))
    return Targets(std.edges, std.placement, present, edge_present, StitchSupervision(flat))


def _stack_targets(ts: list[Targets], dtype) -> dict:
    return {
        "edges": torch.as_tensor(np.stack([t.edges for t in ts]), dtype=dtype),
        "placement": torch.as_tensor(np.stack([t.placement for t in ts]), dtype=dtype),
        "present": torch.as_tensor(np.stack([t.present for t in ts])),
        "edge_present": torch.as_tensor(np.stack([t.edge_present for t in ts])),
    }


def cloud_batch(ds: GarmentDataset, ids: list[str], stats: NormalizationStats, n_points: int,
                seed: int, dtype=torch.float32) -> torch.Tensor:
    pts = np.stack([stats.standardize_points(ds.cloud(sid, n_points, seed).points) for sid in ids])
    return torch.as_tensor(pts, dtype=dtype)


def _orderless_targets(pred: dict, ts: list[Targets]) -> list[Targets]:
    pe = pred["edges"].detach().numpy()
    pp = pred["placement"].detach().numpy()
    out = []
    for i, t in enumerate(ts):
        edges, placement, present, mapping = reorder_targets(t.edges, t.placement, t.present, pe[i], pp[i])
        edge_present = np.zeros_like(t.edge_present)
        for src, dst in mapping.items():
            edge_present[dst] = t.edge_present[src]
        sup = StitchSupervision([tuple(mapping[a // MAX_EDGES] * MAX_EDGES + a % MAX_EDGES for a in s)
                                 for s in t.supervision.stitches])
        out.append(Targets(edges, placement, present, edge_present, sup))
    return out


def batch_loss(model: ShapeModel, pts: torch.Tensor, ts: list[Targets], epoch: int,
               weights: LossWeights, orderless: bool = False):
    pred = model(pts)
    if orderless:
        ts = _orderless_targets(pred, ts)
    gt = _stack_targets(ts, pts.dtype)
    sup = [t.supervision for t in ts] if model.config.with_tags else None
    return total_loss(pred, gt, epoch, weights, sup)


# --- checkpoints -----------------------------------------------------------

def code_version() -> str:
    h = hashlib.sha256()
    for f in sorted(Path(__file__).parent.glob("*.py")):
        h.update(f.read_bytes())
    return f"{__version__}+{h.hexdigest()[:12]}"


def dataset_hash(root) -> str:
    root = Path(root)
    h = hashlib.sha256()
    files = [root / "split.json", root / "class_map.json"]
    files += sorted((root / "patterns").glob("*.json")) + sorted((root / "meshes").glob("*"))
    for f in files:
        if f.exists():
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()[:16]


def save_shape_checkpoint(path, model: ShapeModel, config: TrainConfig, stats: NormalizationStats,
                          cmap: PanelClassMap, manifest: dict) -> None:
    for key in ("config", "dataset_hash", "stats_id", "code_version", "history"):
        if key not in manifest:
            raise TrainingError(f"manifest incomplete: missing {key}")
    torch.save({
        "format": SHAPE_FORMAT,
        "train_config": config.to_dict(),
        "network": model.config.to_dict(),
        "state_dict": model.state_dict(),
        "stats": stats.to_dict(),
        "stats_id": stats.stats_id,
        "class_map": cmap.to_dict(),
        "manifest": manifest,
    }, path)


@dataclass
class ShapeCheckpoint:
    model: ShapeModel
    config: TrainConfig
    stats: NormalizationStats
    class_map: PanelClassMap
    manifest: dict


def load_shape_checkpoint(path) -> ShapeCheckpoint:
    blob = torch.load(path, weights_only=False)
    if blob.get("format") != SHAPE_FORMAT:
        raise TrainingError(f"{path}: not a shape checkpoint")
    stats = NormalizationStats.from_dict(blob["stats"])
    if stats.stats_id != blob["stats_id"]:
        raise TrainingError(f"{path}: normalization stats do not match their recorded id")
    net = NetworkConfig(**blob["network"])
    model = ShapeModel(net)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return ShapeCheckpoint(model, TrainConfig.from_dict(blob["train_config"]), stats,
                           PanelClassMap.from_dict(blob["class_map"]), blob["manifest"])


def save_stitch_checkpoint(path, model: StitchMLP, manifest: dict) -> None:
    torch.save({"format": STITCH_FORMAT, "state_dict": model.state_dict(),
                "mlp": asdict(StitchMLPConfig(hidden=model.net[0].out_features,
                                              layers=sum(isinstance(m, torch.nn.Linear) for m in model.net))),
                "manifest": manifest}, path)


def load_stitch_checkpoint(path) -> tuple[StitchMLP, dict]:
    blob = torch.load(path, weights_only=False)
    if blob.get("format") != STITCH_FORMAT:
        raise TrainingError(f"{path}: not a stitch checkpoint")
    model = StitchMLP(StitchMLPConfig(**blob["mlp"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, blob["manifest"]


# --- shape training ----------------------------------------------------------

def evaluate_loss(model: ShapeModel, ds: GarmentDataset, ids: list[str], targets: dict[str, Targets],
                  stats: NormalizationStats, config: TrainConfig, epoch: int) -> dict[str, float]:
    """Sample-weighted mean of the loss breakdown on fixed (seed-0 epoch) clouds."""
    sums: dict[str, float] = {}
    with torch.no_grad():
        for b in range(0, len(ids), config.batch_size):
            chunk = ids[b:b + config.batch_size]
            pts = cloud_batch(ds, chunk, stats, config.n_points, config.seed)
            _, parts = batch_loss(model, pts, [targets[s] for s in chunk], epoch, config.weights(),
                                  config.orderless)
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * len(chunk)
    return {k: v / len(ids) for k, v in sums.items()}


def _param_groups(model: ShapeModel, config: TrainConfig) -> list[dict]:
    """Attention MLP in its own group with a scaled learning rate.

    Adam moves every weight by about the learning rate per step, which shifts
    the attention logits by a sizeable fraction of the SparseMax support gap.
    A class pushed out of the support at every point gets no gradient again,
    so at full rate classes die early and never come back.
    """
    if config.architecture != "attention":
        return [{"params": list(model.parameters()), "lr_scale": 1.0}]
    att = {id(q) for q in model.attention.parameters()}
    rest = [q for q in model.parameters() if id(q) not in att]
    return [{"params": rest, "lr_scale": 1.0},
            {"params": list(model.attention.parameters()), "lr_scale": config.attention_lr_scale}]


def train_shape(config: TrainConfig, out_dir, ds: GarmentDataset | None = None,
                train_ids: list[str] | None = None, val_ids: list[str] | None = None) -> Path:
    """Train the pattern shape model; writes ``shape.pt`` and ``manifest.json``.

    The best validation-loss weights are kept; training stops early after
    ``patience`` epochs without improvement. In tag mode the best-loss
    record restarts when the stitch terms switch on.
    """
    set_determinism(config.threads)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = ds or GarmentDataset(config.data_root)
    stats = ds.stats()
    cmap = ds.class_map
    train_ids = list(train_ids if train_ids is not None else ds.split.train)
    val_ids = list(val_ids if val_ids is not None else (ds.split.validation or ds.split.train))
    targets = {sid: sample_targets(ds, sid, stats, config.with_tags) for sid in dict.fromkeys(train_ids + val_ids)}

    model = build_model(config.network_config(len(cmap)), seed=config.seed)
    torch.manual_seed(config.seed)
    opt = torch.optim.Adam(_param_groups(model, config), lr=config.max_lr)
    weights = config.weights()
    rng = np.random.default_rng(config.seed)
    n_batches = math.ceil(len(train_ids) / config.batch_size)
    total_steps = config.epochs * n_batches
    manifest = {
        "config": config.to_dict(),
        "dataset_hash": dataset_hash(ds.root),
        "stats_id": stats.stats_id,
        "code_version": code_version(),
        "history": [],
    }
    best_loss, best_state, best_epoch, since_best = math.inf, None, -1, 0
    step = 0
    for epoch in range(config.epochs):
        model.train()
        order = [train_ids[i] for i in rng.permutation(len(train_ids))]
        sums: dict[str, float] = {}
        cloud_seed = config.seed + 1 + epoch if config.resample_points else config.seed
        for b in range(n_batches):
            chunk = order[b * config.batch_size:(b + 1) * config.batch_size]
            pts = cloud_batch(ds, chunk, stats, config.n_points, cloud_seed)
            loss, parts = batch_loss(model, pts, [targets[s] for s in chunk], epoch, weights, config.orderless)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: {parts}")
            for g in opt.param_groups:
                g["lr"] = one_cycle_lr(step, total_steps, config.max_lr) * g["lr_scale"]
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * len(chunk)
        model.eval()
        val = evaluate_loss(model, ds, val_ids, targets, stats, config, epoch)
        record = {"epoch": epoch, "train": {k: v / len(train_ids) for k, v in sums.items()}, "val": val}
        manifest["history"].append(record)
        log.info("epoch %d train %.5f val %.5f", epoch, record["train"]["total"], val["total"])
        if config.with_tags and epoch == weights.stitch_epoch:
            best_loss, since_best = math.inf, 0
        if val["total"] < best_loss:
            best_loss, best_epoch, since_best = val["total"], epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            since_best += 1
            if since_best >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    manifest["best_epoch"] = best_epoch
    manifest["best_val_loss"] = best_loss
    manifest["stopped_epoch"] = epoch
    model.load_state_dict(best_state)
    model.eval()
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    path = out_dir / "shape.pt"
    save_shape_checkpoint(path, model, config, stats, cmap, manifest)
    return path


def train_stitch(config: TrainConfig, shape_ckpt, out_dir, ds: GarmentDataset | None = None,
                 source: str | None = None) -> Path:
    """Second stage: fit the edge-pair classifier on shape-model outputs (or gt)."""
    from .pipeline import ShapePredictor
    from .stitcher import rename_to_classes, train_stitcher, transfer_labels

    set_determinism(config.threads)
    shape_ckpt = Path(shape_ckpt)
    if not shape_ckpt.exists():
        raise TrainingError(f"shape checkpoint {shape_ckpt} not found")
    source = source or config.stitch_source
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = ds or GarmentDataset(config.data_root)
    cmap = ds.class_map
    patterns, skipped = [], []
    if source == "gt":
        patterns = [rename_to_classes(ds.pattern(sid), cmap) for sid in ds.split.train]
    else:
        predictor = ShapePredictor.from_checkpoint(shape_ckpt)
        for sid, pred in zip(ds.split.train, predictor.predict_ids(ds, ds.split.train)):
            labelled = transfer_labels(pred, ds.pattern(sid), cmap)
            if labelled is None:
                skipped.append(sid)
            else:
                patterns.append(labelled)
        if skipped:
            log.info("excluded %d samples with a wrong predicted panel set", len(skipped))
    if not patterns:
        raise TrainingError("no usable samples for stitch training")
    history: list = []
    scfg = StitchTrainConfig(config.stitch_epochs, config.stitch_lr, config.stitch_batch, seed=config.seed)
    model = train_stitcher(patterns, scfg, history=history)
    manifest = {
        "config": config.to_dict(),
        "source": source,
        "shape_checkpoint_sha": hashlib.sha256(shape_ckpt.read_bytes()).hexdigest()[:16],
        "n_patterns": len(patterns),
        "excluded": skipped,
        "history": history,
        "code_version": code_version(),
    }
    path = out_dir / f"stitch_{source}.pt"
    save_stitch_checkpoint(path, model, manifest)
    return path

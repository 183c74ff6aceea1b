"""Point encoder, SparseMax attention and hierarchical LSTM decoders (PyTorch).

Two architectures share the EdgeConv point encoder and the panel decoder:

* ``baseline``: average-pool the per-point features into one garment code
  and unroll it into one code per panel slot with a pattern-level LSTM.
* ``attention``: an MLP scores every point against every panel class,
  SparseMax turns the scores into sparse per-point distributions, and
  per-class codes are attention-weighted means of the point features.

EdgeConv layers compute ``max_j MLP([x_i, x_j - x_i])`` over the k nearest
neighbours; the graph is rebuilt from the layer input each time (xyz for
the first layer, features for the second). The MLP output layer is linear;
the max over neighbours is the only nonlinearity applied to it.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import torch
from torch import nn

from .pattern import MAX_EDGES, PLACEMENT_SIZE, SHAPE_FEATURES, STITCH_FEATURES

POOL_EPS = 1e-8


def knn_graph(x: torch.Tensor, k: int) -> torch.Tensor:
    """Indices of the ``k`` nearest other rows, nearest first.

    ``x`` is ``(N, D)`` or ``(B, N, D)``. Equal distances resolve to the
    lower index.
    """
    squeeze = x.dim() == 2
    if squeeze:
        x = x.unsqueeze(0)
    n = x.shape[1]
    if n <= k:
        raise ValueError(f"need more than k={k} points, got {n}")
    with torch.no_grad():
        sq = (x * x).sum(-1)
        d = torch.baddbmm(sq.unsqueeze(2) + sq.unsqueeze(1), x, x.transpose(1, 2), alpha=-2)
        d = d.clamp_min_(0)
        d.diagonal(dim1=1, dim2=2).fill_(float("inf"))
        m = min(k + 1, n - 1)
        vals, idx = torch.topk(d, m, dim=-1, largest=False)
        # topk leaves tie order unspecified: restore (distance, index) order
        idx, perm = torch.sort(idx, dim=-1)
        vals = torch.gather(vals, -1, perm)
        order = torch.sort(vals, dim=-1, stable=True).indices
        idx = torch.gather(idx, -1, order)[..., :k]
        vals = torch.gather(vals, -1, order)
        if m > k:
            # the k-th distance is shared with an element topk may have dropped
            amb = vals[..., k - 1] == vals[..., k]
            if amb.any():
                rows = d[amb]
                idx[amb] = torch.sort(rows, dim=-1, stable=True).indices[..., :k]
    return idx.squeeze(0) if squeeze else idx


def _gather_neighbors(x: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """(B, N, D), (B, N, k) -> (B, N, k, D)"""
    b, n, k = idx.shape
    flat = idx.reshape(b, n * k, 1).expand(-1, -1, x.shape[-1])
    return torch.gather(x, 1, flat).reshape(b, n, k, x.shape[-1])


def mlp(sizes: list[int], final_activation: bool = False) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2 or final_activation:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class EdgeConv(nn.Module):
    def __init__(self, in_dim: int, hidden: tuple[int, ...], out_dim: int):
        super().__init__()
        self.in_dim = in_dim
        self.mlp = mlp([2 * in_dim, *hidden, out_dim])

    def forward(self, x: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"expected feature width {self.in_dim}, got {x.shape[-1]}")
        nbr = _gather_neighbors(x, idx)
        center = x.unsqueeze(2).expand_as(nbr)
        return self.mlp(torch.cat([center, nbr - center], dim=-1)).max(dim=2).values


class PointEncoder(nn.Module):
    """Two dynamic-graph EdgeConv layers plus a skip of the raw xyz."""

    def __init__(self, k: int = 5, hidden: tuple[int, ...] = (200, 200), out_dim: int = 150):
        super().__init__()
        self.k = k
        self.conv1 = EdgeConv(3, hidden, out_dim)
        self.conv2 = EdgeConv(out_dim, hidden, out_dim)
        self.out_dim = out_dim + 3

    def forward(self, pts: torch.Tensor) -> torch.Tensor:
        f1 = self.conv1(pts, knn_graph(pts, self.k))
        f2 = self.conv2(f1, knn_graph(f1, self.k))
        return torch.cat([f2, pts], dim=-1)


class SparsemaxFunction(torch.autograd.Function):
    """Euclidean projection onto the probability simplex along the last dim."""

    @staticmethod
    def forward(ctx, z: torch.Tensor) -> torch.Tensor:
        z_sorted = torch.sort(z, dim=-1, descending=True).values
        ks = torch.arange(1, z.shape[-1] + 1, dtype=z.dtype, device=z.device)
        cssv = z_sorted.cumsum(-1) - 1
        support = (z_sorted - cssv / ks) > 0
        # clamp keeps non-finite inputs propagating as NaN instead of failing the gather
        k = support.sum(-1, keepdim=True).clamp_min(1)
        tau = cssv.gather(-1, k - 1) / k.to(z.dtype)
        out = (z - tau).clamp_min(0)
        ctx.save_for_backward(out)
        return out

    @staticmethod
    def backward(ctx, grad: torch.Tensor) -> torch.Tensor:
        (out,) = ctx.saved_tensors
        supp = (out > 0).to(grad.dtype)
        mean = (grad * supp).sum(-1, keepdim=True) / supp.sum(-1, keepdim=True)
        return supp * (grad - mean)


def sparsemax(z: torch.Tensor) -> torch.Tensor:
    return SparsemaxFunction.apply(z)


def attention_pool(features: torch.Tensor, scores: torch.Tensor) -> torch.Tensor:
    """Per-class weighted mean of point features.

    ``features`` (B, N, D), ``scores`` (B, N, C) -> (B, C, D). Classes with
    no attention mass pool to the zero vector.
    """
    weighted = scores.transpose(1, 2) @ features
    mass = scores.sum(dim=1).unsqueeze(-1)
    return weighted / (mass + POOL_EPS)


class PatternLSTM(nn.Module):
    """One-to-many LSTM: the garment code repeated once per panel slot."""

    def __init__(self, in_dim: int, hidden: int, layers: int, n_slots: int):
        super().__init__()
        self.n_slots = n_slots
        self.lstm = nn.LSTM(in_dim, hidden, num_layers=layers, batch_first=True)

    def forward(self, code: torch.Tensor) -> torch.Tensor:
        seq = code.unsqueeze(1).expand(-1, self.n_slots, -1)
        out, _ = self.lstm(seq)  # zero initial state
        return out


class PanelDecoder(nn.Module):
    """Panel code -> (edge rows, placement), shared across all slots."""

    def __init__(self, code_dim: int, hidden: int, layers: int, n_features: int, max_edges: int = MAX_EDGES):
        super().__init__()
        self.max_edges = max_edges
        self.lstm = nn.LSTM(code_dim, hidden, num_layers=layers, batch_first=True)
        self.edge_head = nn.Linear(hidden, n_features)
        self.placement_head = nn.Linear(code_dim, PLACEMENT_SIZE)

    def forward(self, codes: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        lead = codes.shape[:-1]
        flat = codes.reshape(-1, codes.shape[-1])
        seq = flat.unsqueeze(1).expand(-1, self.max_edges, -1)
        out, _ = self.lstm(seq)
        edges = self.edge_head(out).reshape(*lead, self.max_edges, -1)
        placement = self.placement_head(flat).reshape(*lead, PLACEMENT_SIZE)
        return edges, placement


@dataclass
class NetworkConfig:
    mode: str = "attention"             # "attention" | "baseline"
    n_classes: int = 31
    with_tags: bool = False
    k_neighbors: int = 5
    edgeconv_hidden: tuple = (200, 200)
    edgeconv_out: int = 150
    pattern_lstm_hidden: int = 250
    pattern_lstm_layers: int = 2
    panel_lstm_hidden: int = 250
    panel_lstm_layers: int = 3
    attention_hidden: int = 153
    attention_layers: int = 3
    max_edges: int = MAX_EDGES

    def __post_init__(self):
        self.edgeconv_hidden = tuple(self.edgeconv_hidden)
        if self.mode not in ("attention", "baseline"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def n_features(self) -> int:
        return STITCH_FEATURES if self.with_tags else SHAPE_FEATURES

    def scaled(self, divisor: int) -> "NetworkConfig":
        """All hidden widths divided by ``divisor`` (attention width tracks the point features)."""
        out = self.edgeconv_out // divisor
        return replace(
            self,
            edgeconv_hidden=tuple(h // divisor for h in self.edgeconv_hidden),
            edgeconv_out=out,
            pattern_lstm_hidden=self.pattern_lstm_hidden // divisor,
            panel_lstm_hidden=self.panel_lstm_hidden // divisor,
            attention_hidden=out + 3,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edgeconv_hidden"] = list(self.edgeconv_hidden)
        return d


class ShapeModel(nn.Module):
    def __init__(self, config: NetworkConfig):
        super().__init__()
        self.config = config
        c = config
        self.encoder = PointEncoder(c.k_neighbors, c.edgeconv_hidden, c.edgeconv_out)
        feat = self.encoder.out_dim
        if c.mode == "attention":
            self.attention = mlp([feat] + [c.attention_hidden] * (c.attention_layers - 1) + [c.n_classes])
            code_dim = feat
        else:
            self.pattern_lstm = PatternLSTM(feat, c.pattern_lstm_hidden, c.pattern_lstm_layers, c.n_classes)
            code_dim = c.pattern_lstm_hidden
        self.decoder = PanelDecoder(code_dim, c.panel_lstm_hidden, c.panel_lstm_layers, c.n_features, c.max_edges)

    def panel_codes(self, pts: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor | None]:
        feats = self.encoder(pts)
        if self.config.mode == "attention":
            scores = sparsemax(self.attention(feats))
            return attention_pool(feats, scores), scores
        return self.pattern_lstm(feats.mean(dim=1)), None

    def forward(self, pts: torch.Tensor) -> dict[str, torch.Tensor]:
        """``pts`` (B, N, 3) standardized -> edges (B, C, E, F), placement (B, C, 7)."""
        codes, scores = self.panel_codes(pts)
        edges, placement = self.decoder(codes)
        out = {"edges": edges, "placement": placement}
        if scores is not None:
            out["attention"] = scores
        return out


def build_model(config: NetworkConfig, seed: int = 0, dtype=torch.float32) -> ShapeModel:
    """Seeded construction with PyTorch's default fan-in uniform initialisation."""
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        model = ShapeModel(config).to(dtype)
    finally:
        torch.random.set_rng_state(gen_state)
    return model

"""
SparseMax attention over panel classes
======================================

Each point scores every panel class. SparseMax projects the scores onto
the probability simplex, and unlike softmax it returns exact zeros, so a
point can belong to a single class. Panel codes are the attention-weighted
means of the point features.
"""
import torch

from sewrecon.network import NetworkConfig, attention_pool, build_model, sparsemax

print(sparsemax(torch.tensor([0.6, 0.1])))        # (0.75, 0.25)
print(sparsemax(torch.tensor([2.0, 0.0, 0.0])))   # one-hot: margin above 1
print(sparsemax(torch.tensor([0.3, 0.3, 0.3])))   # uniform

# two classes, four points; class 2 receives no attention at all
feats = torch.tensor([[[1.0, 0.0], [3.0, 0.0], [0.0, 2.0], [0.0, 4.0]]])
scores = torch.tensor([[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 1.0, 0.0]]])
print(attention_pool(feats, scores))               # class codes (2,0), (0,3), (0,0)

# the full model at a quarter of the published widths
torch.manual_seed(0)
model = build_model(NetworkConfig(mode="attention", n_classes=6).scaled(4), seed=0)
cloud = torch.randn(2, 300, 3)
out = model(cloud)
print({k: tuple(v.shape) for k, v in out.items()})
att = out["attention"]
print("rows sum to one:", torch.allclose(att.sum(-1), torch.ones(2, 300)))
print("median classes per point:", att.gt(0).sum(-1).median().item())

# shuffling the points changes nothing
perm = torch.randperm(300)
print("order invariant:", torch.allclose(model(cloud[:, perm])["edges"], out["edges"], atol=1e-5))

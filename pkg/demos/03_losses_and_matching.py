"""
Training objectives and orderless matching
==========================================

Shape training sums an edge MSE (padding rows included), a loop-closure
term and a placement MSE. Stitch tags add a free/non-free classifier and a
similarity/separation tag loss once training has settled.
"""
import numpy as np
import torch

from sewrecon.losses import (
    LossWeights,
    StitchSupervision,
    edge_loss,
    loop_loss,
    orderless_match,
    panel_vectors,
    tag_loss,
    total_loss,
)

# a single row off by one in one feature: 1 / 4
print(edge_loss(torch.tensor([[1.0, 0, 0, 0]]), torch.zeros(1, 4)))

# loop closure: a square closes, an open corner does not
square = torch.tensor([[[1.0, 0], [0, 1], [-1, 0], [0, -1]]])
corner = torch.tensor([[[1.0, 0], [0, 1], [0, 0], [0, 0]]])
present = torch.tensor([True])
print(loop_loss(square, present).item(), loop_loss(corner, present).item())

# separation hinges the squared tag distance against the margin
tags = torch.zeros(2, 3)
print(tag_loss(tags, StitchSupervision([(0, 1)]), margin=2.0).item())  # stitched and equal: 0
tags4 = torch.tensor([[0.0, 0, 0], [0, 0, 0], [0.1, 0, 0], [0.1, 0, 0]])
print(tag_loss(tags4, StitchSupervision([(0, 2), (1, 3)]), margin=2.0).item())

# stitch terms are off until the activation epoch
rng = torch.Generator().manual_seed(0)
pred = {"edges": torch.randn(1, 2, 14, 8, generator=rng), "placement": torch.randn(1, 2, 7, generator=rng)}
gt = {"edges": torch.zeros(1, 2, 14, 8), "placement": torch.zeros(1, 2, 7),
      "present": torch.tensor([[True, False]]), "edge_present": torch.zeros(1, 2, 14, dtype=torch.bool)}
for epoch in (10, 40):
    _, parts = total_loss(pred, gt, epoch, LossWeights(), [StitchSupervision([(0, 1)])])
    print(epoch, {k: round(v, 3) for k, v in parts.items()})

# orderless matching: gt panels go to the cheapest predicted slots
a = np.random.default_rng(1).normal(size=(3, 14, 4))
place = np.random.default_rng(2).normal(size=(3, 7))
slots = panel_vectors(a, place)
print(orderless_match(slots[[2, 0, 1]], slots))  # recovers the shuffle

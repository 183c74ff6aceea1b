"""
Recovering stitches
===================

Two routes. Stitch tags give each edge a 3-vector; stitched edges sit
close together and different stitches are kept apart by a margin. The
separate classifier scores edge pairs from their 3D endpoints and
curvature, then a greedy pass keeps the most likely pairs with each edge
used once.
"""
import numpy as np

from sewrecon.geometry import edge_pair_feature
from sewrecon.stitcher import (
    StitchTrainConfig,
    greedy_resolve,
    predict_stitches,
    recover_from_tags,
    rename_to_classes,
    train_stitcher,
)
from sewrecon.pattern import default_class_map
from sewrecon.synthetic import generate_pattern

# tags: two tight clusters, one free edge
tags = np.array([[0, 0, 0], [5, 5, 5], [0.05, 0, 0], [5, 5, 5.1], [9, 0, 0]], float)
free = np.array([0.1, 0.1, 0.1, 0.1, 0.9])
print(recover_from_tags(free, tags, margin=2.0))  # [(0, 2), (1, 3)]

# greedy resolution prefers the stronger pair and never reuses an edge
pairs = [(0, 1), (0, 2), (1, 3), (2, 3)]
print(greedy_resolve(pairs, np.array([0.9, 0.8, 0.7, 0.95])))

# 16 numbers per pair: two 3D edges, each endpoints plus curvature
rng = np.random.default_rng(3)
p = generate_pattern("tee", rng)
s = p.stitches[0]
print(np.round(edge_pair_feature(p, s.first, s.second), 2))

# a small classifier fitted on ground-truth patterns
cmap = default_class_map()
train = [rename_to_classes(generate_pattern(f, rng), cmap) for f in ("skirt", "top", "tee") * 10]
model = train_stitcher(train, StitchTrainConfig(epochs=30, seed=0))
test = rename_to_classes(generate_pattern("tee", rng), cmap)
found = predict_stitches(test, model)
hit = {st.key() for st in found} & test.stitch_keys()
print(f"{len(hit)} of {len(test.stitches)} stitches recovered, {len(found)} predicted")

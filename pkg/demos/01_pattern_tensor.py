"""
Sewing patterns as fixed-shape tensors
======================================

A pattern is a handful of 2D panels, each a closed loop of straight or
quadratic edges, plus a 3D placement per panel and the stitches between
edges. Networks want fixed shapes, so every pattern is written into a
(classes x 14 x 4) edge block and a (classes x 7) placement block, one slot
per panel class.
"""
import numpy as np

from sewrecon import decode_pattern, default_class_map, encode_pattern, validate_pattern
from sewrecon.geometry import edge_vectors, vertices_from_edges
from sewrecon.synthetic import generate_pattern

rng = np.random.default_rng(0)
tee = generate_pattern("tee", rng)
print(tee.garment_type, "panels:", sorted(tee.panels), "stitches:", len(tee.stitches))
print("validation issues:", validate_pattern(tee) or "none")

# edges are stored as vectors; a valid loop sums to zero
front = tee.panels["top_front"]
vecs = edge_vectors(front)
_, residual = vertices_from_edges(vecs)
print("top_front edge vectors:\n", np.round(vecs, 2))
print("loop residual:", residual)

# one slot per class; absent classes stay zero
cmap = default_class_map()
t = encode_pattern(tee, cmap)
print("edge block", t.edges.shape, "placement block", t.placement.shape)
occupied = [cmap.class_order[c] for c in range(len(cmap)) if np.any(t.edges[c] != 0)]
print("occupied slots:", occupied)

# and back again
back = decode_pattern(t, cmap, garment_type=tee.garment_type)
err = max(np.abs(back.panels[n].loop_vertices() - p.loop_vertices()).max() for n, p in tee.panels.items())
print(f"roundtrip max vertex error {err:.1e} cm")

# the decoder drops tiny edges and flags loops that fail to close
noisy = encode_pattern(tee, cmap)
noisy.edges[0, 0, :2] += [3.0, 0.0]
decoded = decode_pattern(noisy, cmap)
print("decode log:", decoded.decode_log)

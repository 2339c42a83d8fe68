# # Chemical distance on a percolation configuration
#
# Sample one bond configuration, find its giant cluster and measure how much
# longer open paths are than straight lines.

import numpy as np

from percolab import (LatticeBox, chemical_distance, geodesic, label_clusters, modified_distance,
                      nearest_giant_point, sample_configuration)

# ## A configuration
#
# Every edge gets its own uniform from the seed, so the same (box, p, seed)
# gives the same configuration on any machine.

box = LatticeBox.centered(2, 201)
config = sample_configuration(box, 0.7, seed=2024)
print("edges:", box.n_edges, "open:", int(config.open.sum()))
print("digest:", config.digest())

# ## The giant cluster
#
# The largest cluster touching both faces of axis 0 stands in for the
# infinite cluster.

lab = label_clusters(config)
print("giant size:", lab.size[lab.giant], "of", box.n_vertices, "vertices; valid:", lab.valid)

# ## Distances
#
# Endpoints off the giant are replaced by their nearest giant vertices.

for n in (10, 20, 40, 80):
    y = (n, 0)
    d = modified_distance(config, lab, (0, 0), y)
    print(f"D*(0, {y}) = {d:4.0f}   ratio to l1 = {d / n:.3f}")

a, b = nearest_giant_point(lab, (0, 0)), nearest_giant_point(lab, (40, 0))
path = geodesic(config, a, b)
print("geodesic from", a, "to", b, "has", path.length, "steps;",
      "chemical distance", chemical_distance(config, a, b))
steps = np.diff(path.vertices, axis=0)
print("steps by direction:", {tuple(int(v) for v in s): int(c) for s, c in zip(*np.unique(steps, axis=0, return_counts=True))})

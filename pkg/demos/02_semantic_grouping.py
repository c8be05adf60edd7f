"""Grouping prompts by embedding similarity.

A similarity graph with an open cosine window drives two different
machineries: exhaustive clique enumeration (dataset construction) and greedy
first-fit partitioning (inference batching).
"""

import numpy as np

from sagediff import Rng, build_graph, cosine, enumerate_cliques, greedy_partition
from sagediff.grouping import brute_force_cliques

rng = Rng(3)


def unit(v):
    return v / np.linalg.norm(v)


# Hand-built embeddings: two tight clusters plus one loner.
base_a = unit(rng.gaussian(8))
base_b = unit(rng.gaussian(8))
embeddings = np.stack([
    base_a,
    unit(base_a + 0.45 * unit(rng.gaussian(8))),
    unit(base_a + 0.45 * unit(rng.gaussian(8))),
    base_b,
    unit(base_b + 0.45 * unit(rng.gaussian(8))),
    unit(rng.gaussian(8)),
])
print("pairwise cosine of the first cluster:",
      round(cosine(embeddings[0], embeddings[1]), 3),
      round(cosine(embeddings[0], embeddings[2]), 3),
      round(cosine(embeddings[1], embeddings[2]), 3))

graph = build_graph(embeddings, tau_min=0.6, tau_max=0.99)
print("edges:", int(graph.adjacency.sum() // 2))

cliques = enumerate_cliques(graph, min_size=2, max_size=5)
print("cliques (all, sizes 2..5):", [g.member_ids for g in cliques])
print("matches brute force:",
      sorted(g.member_ids for g in cliques) == brute_force_cliques(graph, 2, 5))

groups = greedy_partition(embeddings, threshold=0.6)
print("greedy partition:", [g.member_ids for g in groups])
print("group centroids keep their norm below 1:",
      [round(float(np.linalg.norm(g.centroid)), 3) for g in groups])

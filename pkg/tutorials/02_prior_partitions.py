"""Level partitions implied by the tree prior.

Compares how often pairs of levels end up in the same leaf under one-hot
splits and under uniform subset splits, and shows that network splits
keep every block connected on a grid graph.
"""

import numpy as np

from subsetbart.data import ColumnSpec, PredictorSchema
from subsetbart.graph import grid_graph
from subsetbart.prior import (
    PriorConfig,
    bell_number,
    co_clustering_matrix,
    count_onehot_partitions,
    draw_prior_network_partition,
)

for k in (5, 10):
    print(f"K={k}: one-hot reaches {count_onehot_partitions(k)} of {bell_number(k)} partitions")

schema = PredictorSchema((ColumnSpec("g", "categorical", tuple(f"l{i}" for i in range(20))),))
off = ~np.eye(20, dtype=bool)
for strategy in ("onehot", "unif"):
    cc = co_clustering_matrix(PriorConfig(split_strategy={"g": strategy}), schema, None, "g", 5000,
                              np.random.default_rng(0))
    print(f"{strategy:>6}: mean co-clustering of distinct levels {cc[off].mean():.3f}")

g = grid_graph(5, 10)
rng = np.random.default_rng(1)
for strategy in ("gs1", "gs2", "gs3", "gs4", "unif"):
    cfg = PriorConfig(split_strategy=strategy)
    parts = [draw_prior_network_partition(cfg, g, rng) for _ in range(300)]
    bad = sum(p.disconnected_blocks(g) for p in parts)
    sizes = np.mean([len(p.blocks) for p in parts])
    print(f"{strategy:>4}: mean blocks {sizes:.2f}, disconnected blocks {bad}")

"""Predict at network vertices that have no training data.

Ten percent of the vertices of a 5x10 grid are held out. Network splits can
borrow strength from neighbouring vertices; uniform subset splits and one-hot
indicators cannot.
"""

from subsetbart.bench import DgpSpec, run_comparison
from subsetbart.prior import PriorConfig
from subsetbart.sampler import ChainConfig

res = run_comparison(
    DgpSpec("net_smooth", 600, seed=4),
    ["gs2", "gs4", "flex_unif", "onehot", "ase_3"],
    n_reps=2,
    chain=ChainConfig(n_iterations=500, n_burnin=250),
    prior=PriorConfig(n_trees=50),
    n_test=300,
)
for method, s in res.summary()["methods"].items():
    print(f"{method:>9}: held-out rmse {s['mean_rmse']:.3f}, mse relative to one-hot {s['mean_relative_mse']:.3f}")

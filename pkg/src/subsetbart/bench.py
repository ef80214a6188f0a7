"""Synthetic benchmarks: data-generating processes, metrics and method comparisons.

Two families of DGP are provided:

* ``dgp1``..``dgp4``: ten uniform continuous predictors plus a ten-level
  categorical predictor ``x11`` with levels ``c0``..``c9``; the regression
  function switches between combinations of four basis functions by level.
* ``net_constant`` and ``net_smooth``: two continuous predictors plus a
  vertex of a grid network. ``net_smooth`` blends two functions with a
  vertex weight that varies smoothly across the grid; ``net_constant`` is
  constant on four quadrant regions of the grid.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import ColumnSpec, Dataset, PredictorSchema, one_hot_encode, rescale_columns, target_encode
from .graph import Network, adjacency_spectral_embedding, grid_graph
from .prior import PriorConfig
from .sampler import ChainConfig, run_chain

LEVELS = tuple(f"c{k}" for k in range(10))
BALANCED = (0.1,) * 10
IMBALANCED = (0.01, 0.1, 0.02, 0.2, 0.15, 0.03, 0.05, 0.15, 0.25, 0.04)
DGP_IDS = ("dgp1", "dgp2", "dgp3", "dgp4", "net_constant", "net_smooth")
NETWORK_DGPS = ("net_constant", "net_smooth")
NETWORK_METHODS = ("gs1", "gs2", "gs3", "gs4")

# true level blocks used by the oracle baseline
ORACLE_BLOCKS = {
    1: ((0, 2, 4, 8), (1, 3, 5, 6, 7, 9)),
    2: ((0,), tuple(range(1, 10))),
    3: tuple((k,) for k in range(7)) + ((7, 8, 9),),
    4: tuple((k,) for k in range(10)),
}


# ---------------------------------------------------------------------------
# regression functions


def eval_basis(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """The four basis functions at ``x`` (shape ``(10,)`` or ``(n, 10)``)."""
    x = np.asarray(x, dtype=float)
    x1, x2, x3, x4, x5 = (x[..., j] for j in range(5))
    f0 = 10.0 * np.sin(np.pi * x1 * x2)
    f1 = 10.0 * (x3 - 0.5) ** 2
    f2 = 10.0 * (x3 - 0.5) ** 2 + 10.0 * x4 + 5.0 * x5
    hi = (x2 > 0.5).astype(float)
    f3 = 6.0 * x1 + (4.0 - 10.0 * hi) * np.sin(np.pi * x1) - 4.0 * hi + 15.0
    return f0, f1, f2, f3


def eval_mu(d: int, x: np.ndarray, level) -> np.ndarray:
    """Regression function of DGP ``d`` given continuous ``x`` and level index (0 for ``c0``)."""
    f0, f1, f2, f3 = eval_basis(x)
    lv = np.asarray(level)
    if d == 1:
        grp = np.isin(lv, (0, 2, 4, 8))
        return np.where(grp, f3, f0 + f1 + f2 - 0.75)
    if d == 2:
        return np.where(lv == 0, f0 + f1 + f2 - 0.75, f2)
    if d == 3:
        return (
            f0 * np.isin(lv, (0, 3, 4, 6))
            + f1 * np.isin(lv, (1, 3, 4, 5, 6))
            + f2 * np.isin(lv, (2, 3, 5, 6))
            + f3 * np.isin(lv, (7, 8, 9))
        )
    if d == 4:
        w = (lv + 1) / 10.0
        return w * (f1 + f2 + f3 - 0.75) + (9 - lv) / 10.0 * f3
    raise ValueError(f"unknown DGP index {d}")


def network_g0(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    hi = (x2 > 0.5).astype(float)
    return 3.0 * x1 + (2.0 - 5.0 * hi) * np.sin(np.pi * x1) - 2.0 * hi


def network_g1(x: np.ndarray) -> np.ndarray:
    x1 = np.asarray(x, dtype=float)[..., 0]
    return 3.0 - 3.0 * np.cos(6 * np.pi * x1) * x1**2 * (x1 > 0.6) - 10.0 * np.sqrt(x1) * (x1 < 0.25)


def eval_network_fn(x: np.ndarray, v, weights: np.ndarray) -> np.ndarray:
    """``w_v g0(x) + (1 - w_v) g1(x)`` with ``v`` a vertex position."""
    w = np.asarray(weights, dtype=float)[np.asarray(v)]
    return w * network_g0(x) + (1.0 - w) * network_g1(x)


def smooth_vertex_weights(rows: int, cols: int) -> np.ndarray:
    """Weights rising from 0 at one grid corner to 1 at the opposite one."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    return (r / max(rows - 1, 1) + c / max(cols - 1, 1)) / 2.0


def quadrant_values(rows: int, cols: int) -> np.ndarray:
    """Per-vertex constants on four grid quadrants."""
    r, c = np.divmod(np.arange(rows * cols), cols)
    quad = 2 * (r >= rows / 2) + (c >= cols / 2)
    return np.array([-3.0, -1.0, 1.0, 3.0])[quad]


# ---------------------------------------------------------------------------
# data generation


@dataclass(frozen=True)
class DgpSpec:
    id: str
    n: int
    noise_sd: float = 1.0
    level_probs: tuple[float, ...] = BALANCED
    seed: int = 0
    grid_shape: tuple[int, int] = (5, 10)

    def __post_init__(self):
        if self.id not in DGP_IDS:
            raise ValueError(f"unknown DGP {self.id!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        p = np.asarray(self.level_probs, dtype=float)
        if p.shape != (10,) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("level_probs must be 10 non-negative values summing to 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be non-negative")

    @property
    def is_network(self) -> bool:
        return self.id in NETWORK_DGPS


@dataclass
class Simulation:
    """A generated dataset with its noise-free mean and, for network DGPs, the graph."""

    data: Dataset
    mean: np.ndarray
    network: Network | None = None
    vertex_weights: np.ndarray | None = None


def dgp_schema() -> PredictorSchema:
    cols = tuple(ColumnSpec(f"x{j}", "continuous") for j in range(1, 11))
    return PredictorSchema(cols + (ColumnSpec("x11", "categorical", levels=LEVELS),))


def network_schema(g: Network) -> PredictorSchema:
    levels = tuple(str(v) for v in g.vertices)
    return PredictorSchema((
        ColumnSpec("x1", "continuous"),
        ColumnSpec("x2", "continuous"),
        ColumnSpec("vertex", "network", levels=levels, network="grid"),
    ))


def make_grid_network(rows: int, cols: int) -> Network:
    """Grid graph with string vertex labels, matching :func:`network_schema`."""
    g = grid_graph(rows, cols)
    return Network(tuple(str(v) for v in g.vertices), frozenset(frozenset(str(v) for v in e) for e in g.edges))


def generate(spec: DgpSpec, *, vertices: Sequence[int] | None = None) -> Simulation:
    """Draw ``spec.n`` observations; deterministic given ``spec.seed``.

    For network DGPs vertices are drawn uniformly from ``vertices``
    (positions in the grid; all of them by default).
    """
    rng = np.random.default_rng(spec.seed)
    if not spec.is_network:
        x = rng.random((spec.n, 10))
        lv = rng.choice(10, size=spec.n, p=np.asarray(spec.level_probs))
        mean = eval_mu(int(spec.id[-1]), x, lv)
        y = mean + spec.noise_sd * rng.normal(size=spec.n)
        ds = Dataset(x, lv[:, None].astype(np.int64), y, dgp_schema())
        return Simulation(ds, mean)
    rows, cols = spec.grid_shape
    g = make_grid_network(rows, cols)
    pool = np.arange(rows * cols) if vertices is None else np.asarray(vertices, dtype=np.int64)
    x = rng.random((spec.n, 2))
    v = pool[rng.integers(0, pool.size, size=spec.n)]
    if spec.id == "net_smooth":
        w = smooth_vertex_weights(rows, cols)
        mean = eval_network_fn(x, v, w)
    else:
        w = None
        mean = quadrant_values(rows, cols)[v]
    y = mean + spec.noise_sd * rng.normal(size=spec.n)
    ds = Dataset(x, v[:, None], y, network_schema(g))
    return Simulation(ds, mean, g, w)


# ---------------------------------------------------------------------------
# metrics


@dataclass(frozen=True)
class MetricsReport:
    smse: float | None = None
    rmse: float | None = None
    misclassification: float | None = None
    log_loss: float | None = None
    brier: float | None = None

    def as_dict(self) -> dict[str, float]:
        return {k: v for k, v in asdict(self).items() if v is not None}


PROB_CLAMP = 1e-12


def metrics(y_true, y_pred, train_mean: float | None = None, *, probabilities: bool = False) -> MetricsReport:
    """Regression metrics, or classification metrics when ``probabilities`` is set.

    SMSE divides the mean squared error by that of predicting ``train_mean``.
    Classification predicts 1 only when p > 0.5.
    """
    y = np.asarray(y_true, dtype=float)
    p = np.asarray(y_pred, dtype=float)
    if y.size == 0:
        raise ValueError("empty inputs")
    if y.shape != p.shape:
        raise ValueError("shape mismatch")
    if probabilities:
        if np.any((p < 0) | (p > 1)):
            raise ValueError("probabilities must lie in [0, 1]")
        pc = np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP)
        return MetricsReport(
            misclassification=float(np.mean((p > 0.5) != (y > 0.5))),
            log_loss=float(-np.mean(y * np.log(pc) + (1 - y) * np.log1p(-pc))),
            brier=float(np.mean((p - y) ** 2)),
        )
    mse = float(np.mean((y - p) ** 2))
    smse = None
    if train_mean is not None:
        base = float(np.mean((y - train_mean) ** 2))
        smse = mse / base if base > 0 else math.nan
    return MetricsReport(smse=smse, rmse=math.sqrt(mse))


# ---------------------------------------------------------------------------
# methods


def _fit_predict(train: Dataset, test: Dataset, chain: ChainConfig, prior: PriorConfig, networks=None) -> np.ndarray:
    return run_chain(train, chain, prior, networks, test_data=test).test_mean()


def run_oracle(d: int, train: Dataset, test: Dataset, chain: ChainConfig, prior: PriorConfig) -> np.ndarray:
    """Fit one ensemble per true level block and predict blockwise.

    A block absent from the training data is predicted by a model fitted
    to all training rows.
    """
    pred = np.empty(test.n)
    lv_train, lv_test = train.x_cat[:, 0], test.x_cat[:, 0]
    fallback = None
    for block in ORACLE_BLOCKS[d]:
        te = np.flatnonzero(np.isin(lv_test, block))
        if te.size == 0:
            continue
        tr = np.flatnonzero(np.isin(lv_train, block))
        if tr.size == 0:
            warnings.warn(f"oracle block {block} has no training rows; using the global model", stacklevel=2)
            if fallback is None:
                fallback = _fit_predict(train, test, chain, prior)
            pred[te] = fallback[te]
            continue
        pred[te] = _fit_predict(train.subset(tr), test.subset(te), chain, prior)
    return pred


def _ase_dataset(ds: Dataset, d: int, emb: np.ndarray, lo, hi) -> Dataset:
    """Replace the vertex column by its ``d`` embedding coordinates."""
    coords, degenerate = rescale_columns(emb[ds.x_cat[:, 0]], lo, hi)
    cols = list(ds.schema.continuous) + [ColumnSpec(f"ase{k + 1}", "continuous") for k in range(d)]
    return Dataset(
        np.hstack([ds.x_cont, coords]),
        np.empty((ds.n, 0), dtype=np.int64),
        ds.y,
        PredictorSchema(tuple(cols), ds.schema.outcome),
        np.concatenate([ds.cont_min, lo]),
        np.concatenate([ds.cont_max, hi]),
        np.concatenate([ds.degenerate, degenerate]),
    )


def method_predictions(
    method: str,
    spec: DgpSpec,
    train: Simulation,
    test: Simulation,
    chain: ChainConfig,
    prior: PriorConfig,
) -> np.ndarray:
    """Posterior-mean predictions at the test rows for one named method."""
    tr, te = train.data, test.data
    if method == "flex_unif":
        return _fit_predict(tr, te, chain, replace(prior, split_strategy="unif"), {"grid": train.network} if train.network else None)
    if method in NETWORK_METHODS:
        return _fit_predict(tr, te, chain, replace(prior, split_strategy=method), {"grid": train.network})
    if method == "onehot":
        return _fit_predict(one_hot_encode(tr), one_hot_encode(te), chain, prior)
    if method == "target":
        return _fit_predict(target_encode(tr, tr), target_encode(tr, te), chain, prior)
    if method == "oracle":
        return run_oracle(int(spec.id[-1]), tr, te, chain, prior)
    if method.startswith("ase_"):
        d = int(method[4:])
        emb = adjacency_spectral_embedding(train.network, d)
        lo, hi = emb.min(axis=0), emb.max(axis=0)
        return _fit_predict(_ase_dataset(tr, d, emb, lo, hi), _ase_dataset(te, d, emb, lo, hi), chain, prior)
    raise ValueError(f"unknown method {method!r}")


def check_methods(spec: DgpSpec, methods: Sequence[str]) -> None:
    """Reject unknown methods and method/DGP combinations that cannot run."""
    if not methods:
        raise ValueError("no methods given")
    for m in methods:
        known = m in ("flex_unif", "onehot", "target", "oracle") or m in NETWORK_METHODS
        if m.startswith("ase_"):
            known = m[4:].isdigit() and int(m[4:]) >= 1
        if not known:
            raise ValueError(f"unknown method {m!r}")
        if (m in NETWORK_METHODS or m.startswith("ase_")) and not spec.is_network:
            raise ValueError(f"method {m!r} needs a network DGP")
        if m == "oracle" and spec.is_network:
            raise ValueError("the oracle baseline is defined for dgp1..dgp4 only")
        if m.startswith("ase_") and int(m[4:]) > spec.grid_shape[0] * spec.grid_shape[1]:
            raise ValueError(f"embedding dimension of {m!r} exceeds the vertex count")


# ---------------------------------------------------------------------------
# comparisons


def _derived_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1, dtype=np.uint32)[0])


def replicate_data(spec: DgpSpec, rep: int, n_test: int, holdout_frac: float) -> tuple[Simulation, Simulation]:
    """Training and noise-free test data for replication ``rep``.

    Network DGPs hold out a random ``holdout_frac`` of the vertices: training
    rows come from the rest and test rows only from the held-out vertices.
    """
    base = _derived_seed(spec.seed, rep)
    train_spec = replace(spec, seed=_derived_seed(base, 0))
    test_spec = replace(spec, n=n_test, seed=_derived_seed(base, 1), noise_sd=0.0)
    if not spec.is_network:
        return generate(train_spec), generate(test_spec)
    nv = spec.grid_shape[0] * spec.grid_shape[1]
    n_out = max(1, int(round(holdout_frac * nv)))
    perm = np.random.default_rng(_derived_seed(base, 2)).permutation(nv)
    held, kept = np.sort(perm[:n_out]), np.sort(perm[n_out:])
    return generate(train_spec, vertices=kept), generate(test_spec, vertices=held)


@dataclass
class ComparisonResult:
    """Per-method, per-replication metrics plus errors relative to a baseline."""

    methods: list[str]
    baseline: str
    rows: list[tuple[str, int, str, float]] = field(default_factory=list)

    def values(self, method: str, metric: str) -> np.ndarray:
        return np.array([v for m, _, k, v in self.rows if m == method and k == metric])

    def summary(self) -> dict:
        out = {"baseline": self.baseline, "methods": {}}
        base = self.values(self.baseline, "mse")
        for m in self.methods:
            mse = self.values(m, "mse")
            rel = mse / base
            out["methods"][m] = {
                "mean_mse": float(mse.mean()),
                "mean_rmse": float(np.sqrt(mse).mean()),
                "mean_smse": float(self.values(m, "smse").mean()),
                "mean_relative_mse": float(rel.mean()),
                "win_fraction_vs_baseline": float(np.mean(mse < base)),
            }
        return out


def run_comparison(
    spec: DgpSpec,
    methods: Sequence[str],
    n_reps: int,
    out_dir: str | Path | None = None,
    *,
    chain: ChainConfig | None = None,
    prior: PriorConfig | None = None,
    n_test: int = 500,
    holdout_frac: float = 0.1,
    baseline: str | None = None,
) -> ComparisonResult:
    """Run every method on ``n_reps`` independent replications.

    Metrics are computed against the noise-free regression function at the
    test rows. With ``out_dir`` the results are written as ``metrics.csv``,
    ``summary.json`` and ``manifest.json``; nothing in them depends on
    wall-clock time.
    """
    methods = list(methods)
    check_methods(spec, methods)
    if n_reps < 1:
        raise ValueError("n_reps must be positive")
    chain = chain or ChainConfig()
    prior = prior or PriorConfig()
    baseline = baseline or ("onehot" if "onehot" in methods else methods[0])
    if baseline not in methods:
        raise ValueError(f"baseline {baseline!r} is not among the methods")
    result = ComparisonResult(methods, baseline)
    for rep in range(n_reps):
        train, test = replicate_data(spec, rep, n_test, holdout_frac)
        train_mean = float(np.mean(train.data.y))
        for k, m in enumerate(methods):
            rep_chain = replace(chain, seed=_derived_seed(chain.seed, spec.seed, rep, k))
            pred = method_predictions(m, spec, train, test, rep_chain, prior)
            rep_metrics = metrics(test.mean, pred, train_mean)
            result.rows.append((m, rep, "mse", rep_metrics.rmse**2))
            result.rows.append((m, rep, "rmse", rep_metrics.rmse))
            result.rows.append((m, rep, "smse", rep_metrics.smse))
    if out_dir is not None:
        write_comparison(result, out_dir, spec, chain, prior, n_reps, n_test, holdout_frac)
    return result


def write_comparison(result: ComparisonResult, out_dir, spec, chain, prior, n_reps, n_test, holdout_frac) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "fold", "metric", "value"])
        base = {(r, k): v for m, r, k, v in result.rows if m == result.baseline}
        for m, r, k, v in result.rows:
            w.writerow([m, r, k, repr(float(v))])
            if k == "mse":
                w.writerow([m, r, "relative_mse", repr(float(v / base[(r, k)]))])
    (out / "summary.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    manifest = {
        "dgp": asdict(spec),
        "methods": result.methods,
        "baseline": result.baseline,
        "n_reps": n_reps,
        "n_test": n_test,
        "holdout_frac": holdout_frac,
        "chain": asdict(chain),
        "prior": _prior_dict(prior),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _prior_dict(prior: PriorConfig) -> dict:
    d = asdict(prior)
    if not isinstance(d["split_strategy"], str):
        d["split_strategy"] = dict(d["split_strategy"])
    return d

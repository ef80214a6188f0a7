"""The regression-tree prior and tools for studying the partitions it induces.

Decision rules pick a splittable variable uniformly, then

* continuous: a cutpoint uniform over the available interval (or over the
  grid points inside it),
* unstructured categorical: each available level goes left with
  probability 1/2, redrawn until both sides are non-empty,
* network categorical: a connected bipartition of the available subgraph
  from one of the ``gs1``..``gs4`` strategies.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass, replace

import numpy as np

from . import _engine as eng
from .data import ColumnSpec, Dataset, PredictorSchema
from .graph import STRATEGIES, Network, _draw_unif_subset, _split_network, connected_components, induced_subgraph
from .tree import MAX_DEPTH, DecisionRule, RegressionTree, TreeNode, depth

DEFAULT_NETWORK_STRATEGY = "gs2"
REGRESSION_TAU = 0.25
PROBIT_TAU = 1.5


class NoValidRuleError(RuntimeError):
    """No predictor can be split at the requested node."""


@dataclass(frozen=True)
class PriorConfig:
    """Hyper-parameters of the ensemble prior.

    ``tau_total`` is the prior sd of ``f(x)`` on the model scale; each leaf
    jump gets sd ``tau_total / sqrt(n_trees)``. Left unset it is 0.25 for
    regression (outcome scaled to [-0.5, 0.5]) and 1.5 on the probit scale. ``split_strategy`` is either
    one strategy name applied to every network column, or a mapping from
    column name to strategy (``"onehot"`` is accepted there for the prior
    analysis tools only).
    """

    n_trees: int = 200
    alpha: float = 0.95
    beta: float = 2.0
    tau_total: float | None = None
    mu0: float = 0.0
    split_strategy: str | Mapping[str, str] = DEFAULT_NETWORK_STRATEGY
    nu: float = 3.0
    lam: float | None = None
    sigma_quantile: float = 0.9

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.n_trees < 1:
            raise ValueError("need at least one tree")
        if self.tau_total is not None and not self.tau_total > 0:
            raise ValueError("tau_total must be positive")
        if not self.nu > 0 or (self.lam is not None and not self.lam > 0):
            raise ValueError("nu and lambda must be positive")
        names = [self.split_strategy] if isinstance(self.split_strategy, str) else self.split_strategy.values()
        for s in names:
            if s not in STRATEGIES and s != "onehot":
                raise ValueError(f"unknown split strategy {s!r}")

    @property
    def tau(self) -> float:
        return REGRESSION_TAU if self.tau_total is None else self.tau_total

    @property
    def tau_leaf(self) -> float:
        return self.tau / math.sqrt(self.n_trees)

    def resolved(self, probit: bool = False) -> "PriorConfig":
        if self.tau_total is not None:
            return self
        return replace(self, tau_total=PROBIT_TAU if probit else REGRESSION_TAU)

    def strategy_for(self, col: ColumnSpec) -> str:
        if isinstance(self.split_strategy, Mapping):
            if col.name in self.split_strategy:
                return self.split_strategy[col.name]
            return DEFAULT_NETWORK_STRATEGY if col.kind == "network" else "unif"
        return self.split_strategy if col.kind == "network" else "unif"

    def hyper(self, q_grow: float = 0.5) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.tau_leaf, self.mu0, q_grow])


@dataclass(frozen=True)
class LevelPartition:
    """Disjoint non-empty blocks covering a level universe, ordered by smallest member."""

    blocks: tuple[frozenset, ...]

    def __post_init__(self):
        seen: set = set()
        for b in self.blocks:
            if not b:
                raise ValueError("empty block")
            if seen & b:
                raise ValueError("blocks overlap")
            seen |= b
        object.__setattr__(self, "blocks", tuple(sorted(self.blocks, key=min)))

    @property
    def universe(self) -> frozenset:
        return frozenset().union(*self.blocks)

    def same_block(self, a, b) -> bool:
        return any(a in blk and b in blk for blk in self.blocks)

    def disconnected_blocks(self, g: Network, labels=None) -> int:
        """Number of blocks inducing a disconnected subgraph of ``g``.

        Blocks hold level positions; ``labels`` maps them to vertex labels
        (defaults to ``g.vertices``).
        """
        labels = g.vertices if labels is None else labels
        return sum(
            len(connected_components(induced_subgraph(g, [labels[k] for k in blk]))) > 1
            for blk in self.blocks
        )


# ---------------------------------------------------------------------------
# compiled design


def network_csr(col: ColumnSpec, g: Network) -> tuple[np.ndarray, np.ndarray]:
    """Adjacency of ``g`` in the column's level order."""
    if set(g.vertices) != set(col.levels):
        raise ValueError(f"network for column {col.name!r} does not match its level universe")
    if tuple(g.vertices) != tuple(col.levels):
        g = Network(tuple(col.levels), g.edges)
    return g.csr


def scaled_cutpoints(ds: Dataset, j: int) -> list[float] | None:
    """Grid of continuous column ``j`` on the rescaled axis, or None when unset.

    Schema cutpoints are in raw units; only those strictly inside the
    observed range are kept.
    """
    raw = ds.schema.continuous[j].cutpoints
    if not raw:
        return None
    lo, hi = ds.cont_min[j], ds.cont_max[j]
    width = hi - lo if hi > lo else 1.0
    return sorted({(v - lo) / width for v in raw if 0.0 < (v - lo) / width < 1.0})


def make_design(
    ds: Dataset,
    cfg: PriorConfig,
    networks: Mapping[str, Network] | None = None,
    *,
    xc: np.ndarray | None = None,
    xk: np.ndarray | None = None,
) -> eng.Design:
    """Arrays the engine needs to draw and route rules for ``ds``'s predictors."""
    networks = networks or {}
    schema = ds.schema
    pc, pk = schema.p_cont, schema.p_cat
    nlev = np.array(schema.n_levels, dtype=np.int64)
    kmax = int(nlev.max()) if pk else 1
    var_ok = np.concatenate([~ds.degenerate, nlev >= 2]).astype(bool)

    grids = [scaled_cutpoints(ds, j) for j in range(pc)]
    gmax = max([len(g or ()) for g in grids] + [1])
    grid = np.zeros((pc, gmax))
    glen = np.zeros(pc, dtype=np.int64)
    for j, g in enumerate(grids):
        if g is None:
            continue
        grid[j, : len(g)] = g
        glen[j] = len(g)
        if not g:
            var_ok[j] = False

    strategy = np.zeros(pk, dtype=np.int64)
    csrs = []
    for c, col in enumerate(schema.categorical):
        name = cfg.strategy_for(col)
        if name == "onehot":
            raise ValueError("one-hot columns must be encoded before building a design")
        strategy[c] = STRATEGIES[name]
        if name != "unif":
            if col.network not in networks:
                raise ValueError(f"column {col.name!r} needs network {col.network!r}")
            g = networks[col.network]
            if not g.is_connected():
                raise ValueError(f"network {col.network!r} is disconnected")
            csrs.append(network_csr(col, g))
        else:
            csrs.append((np.zeros(len(col.levels) + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)))
    net_indptr = np.zeros((pk, kmax + 1), dtype=np.int64)
    emax = max([len(ix) for _, ix in csrs] + [1])
    net_indices = np.zeros((pk, emax), dtype=np.int64)
    for c, (ip, ix) in enumerate(csrs):
        net_indptr[c, : len(ip)] = ip
        net_indices[c, : len(ix)] = ix
    return eng.Design(
        np.ascontiguousarray(ds.x_cont if xc is None else xc, dtype=float),
        np.ascontiguousarray(ds.x_cat if xk is None else xk, dtype=np.int64),
        nlev, var_ok, grid, glen, strategy, net_indptr, net_indices,
    )


def _schema_dataset(schema: PredictorSchema) -> Dataset:
    return Dataset(np.zeros((0, schema.p_cont)), np.zeros((0, schema.p_cat), dtype=np.int64), None, schema)


# ---------------------------------------------------------------------------
# structure, rules, jumps


def split_probability(cfg: PriorConfig, d: int) -> float:
    return cfg.alpha * (1.0 + d) ** (-cfg.beta)


def draw_tree_structure(cfg: PriorConfig, rng: np.random.Generator) -> set[int]:
    """Node labels of a branching-process tree."""
    while True:
        ids = {1}
        frontier = [1]
        capped = False
        while frontier:
            nx = frontier.pop()
            d = depth(nx)
            if rng.random() < split_probability(cfg, d):
                if d >= MAX_DEPTH:
                    capped = True
                    break
                ids.update((2 * nx, 2 * nx + 1))
                frontier.extend((2 * nx + 1, 2 * nx))
        if not capped:
            return ids


def draw_rule(
    t: RegressionTree,
    node_id: int,
    schema: PredictorSchema,
    networks: Mapping[str, Network] | None,
    cfg: PriorConfig,
    rng: np.random.Generator,
    *,
    data: Dataset | None = None,
) -> DecisionRule:
    """Prior draw of the rule at ``node_id`` given its ancestors' rules.

    ``data`` supplies the degenerate-column flags and the raw ranges used to
    place grid cutpoints; without it every continuous column is splittable
    and no grid is used.
    """
    networks = networks or {}
    pc = schema.p_cont
    grids = [scaled_cutpoints(data, j) if data is not None else None for j in range(pc)]
    eligible = []
    for j in range(schema.p):
        avail = t.available_set(node_id, j)
        if j < pc:
            if data is not None and data.degenerate[j]:
                continue
            lo, hi = avail
            ok = any(lo < g < hi for g in grids[j]) if grids[j] is not None else hi > lo
        else:
            ok = len(avail) >= 2
        if ok:
            eligible.append(j)
    if not eligible:
        raise NoValidRuleError(f"no splittable predictor at node {node_id}")
    j = eligible[rng.integers(0, len(eligible))]
    col = schema.variable(j)
    avail = t.available_set(node_id, j)
    if j < pc:
        lo, hi = avail
        if grids[j] is not None:
            inside = [g for g in grids[j] if lo < g < hi]
            return DecisionRule.continuous(j, inside[rng.integers(0, len(inside))])
        return DecisionRule.continuous(j, lo + (hi - lo) * rng.random())
    verts = np.array(sorted(avail), dtype=np.int64)
    name = cfg.strategy_for(col)
    if name == "unif":
        mask = _draw_unif_subset(len(verts), rng)
    else:
        indptr, indices = network_csr(col, networks[col.network])
        mask, ok = _split_network(STRATEGIES[name], indptr, indices, verts, rng)
        if not ok:
            raise NoValidRuleError(f"available levels at node {node_id} are disconnected")
    return DecisionRule.categorical(j, verts[mask], verts[~mask])


def draw_jumps(t: RegressionTree, cfg: PriorConfig, rng: np.random.Generator) -> RegressionTree:
    for k in t.leaf_ids():
        t.nodes[k].jump = cfg.mu0 + cfg.tau_leaf * rng.normal()
    return t


def draw_prior_tree(
    schema: PredictorSchema,
    networks: Mapping[str, Network] | None,
    cfg: PriorConfig,
    rng: np.random.Generator,
) -> RegressionTree:
    """Structure, then rules top-down, then jumps.

    A node whose rule cannot be drawn is made a leaf and its descendants are
    dropped.
    """
    ids = draw_tree_structure(cfg, rng)
    t = RegressionTree(schema, {})
    for nx in sorted(ids):
        if nx > 1 and (nx // 2 not in t.nodes or t.nodes[nx // 2].is_leaf):
            continue
        t.nodes[nx] = TreeNode(nx)
        if 2 * nx in ids:
            try:
                t.nodes[nx].rule = draw_rule(t, nx, schema, networks, cfg, rng)
            except NoValidRuleError:
                pass
    return draw_jumps(t, cfg, rng)


# ---------------------------------------------------------------------------
# induced partitions of categorical levels


def _probe_rows(schema: PredictorSchema, column: int) -> tuple[np.ndarray, np.ndarray]:
    """One probe per level of categorical ``column``; continuous at 0.5, other categoricals at level 0."""
    k = schema.n_levels[column]
    xc = np.full((k, schema.p_cont), 0.5)
    xk = np.zeros((k, schema.p_cat), dtype=np.int64)
    xk[:, column] = np.arange(k)
    return xc, xk


def induced_level_partition(
    t: RegressionTree, column: int, *, onehot_block: tuple[int, ...] | None = None
) -> LevelPartition:
    """Group the levels of a categorical column by the leaf their probe reaches.

    With ``onehot_block`` (the continuous indices of a one-hot encoded
    column) the probes are the standard basis vectors on that block.
    """
    schema = t.schema
    if onehot_block is None:
        xc, xk = _probe_rows(schema, column)
    else:
        k = len(onehot_block)
        xc = np.full((k, schema.p_cont), 0.5)
        xc[:, list(onehot_block)] = np.eye(k)
        xk = np.zeros((k, schema.p_cat), dtype=np.int64)
    groups: dict[int, set] = {}
    for a in range(xc.shape[0]):
        groups.setdefault(t.traverse(xc[a], xk[a]), set()).add(a)
    return LevelPartition(tuple(frozenset(g) for g in groups.values()))


def _onehot_schema(schema: PredictorSchema, column: int) -> tuple[PredictorSchema, tuple[int, ...]]:
    """Schema with categorical ``column`` replaced by indicator columns, plus their indices."""
    target = schema.categorical[column]
    cont = list(schema.continuous) + [ColumnSpec(f"{target.name}={lv}", "continuous") for lv in target.levels]
    cats = [c for c in schema.categorical if c is not target]
    block = tuple(range(schema.p_cont, schema.p_cont + len(target.levels)))
    return PredictorSchema(tuple(cont + cats), schema.outcome), block


def _analysis_setup(cfg, schema, networks, column):
    """Design, probe rows and level count for prior partition analyses of one column."""
    c = [col.name for col in schema.categorical].index(column) if isinstance(column, str) else column
    target = schema.categorical[c]
    if cfg.strategy_for(target) == "onehot":
        work_schema, block = _onehot_schema(schema, c)
        mapping = {k: v for k, v in dict(cfg.split_strategy).items() if k != target.name} if isinstance(
            cfg.split_strategy, Mapping) else cfg.split_strategy
        cfg = replace(cfg, split_strategy=mapping)
        k = len(block)
        xc = np.full((k, work_schema.p_cont), 0.5)
        xc[:, list(block)] = np.eye(k)
        xk = np.zeros((k, work_schema.p_cat), dtype=np.int64)
    else:
        work_schema = schema
        xc, xk = _probe_rows(schema, c)
    design = make_design(_schema_dataset(work_schema), cfg, networks)
    return design, xc, xk, cfg


def _engine_forest(design: eng.Design, capacity: int = 512) -> eng.Forest:
    kmax = int(design.nlev.max()) if design.nlev.size else 1
    return eng.new_forest(1, capacity, kmax, 0)


def prior_partitions(
    cfg: PriorConfig,
    schema: PredictorSchema,
    networks: Mapping[str, Network] | None,
    column: int | str,
    n_draws: int,
    rng: np.random.Generator,
) -> list[LevelPartition]:
    """Level partitions induced by ``n_draws`` independent prior trees."""
    design, xc, xk, cfg = _analysis_setup(cfg, schema, networks, column)
    forest = _engine_forest(design)
    side_buf = np.zeros(forest.side.shape[2], dtype=np.int8)
    hyper = cfg.hyper()
    out = []
    for _ in range(n_draws):
        eng.draw_prior_tree(forest, 0, design, hyper, rng, side_buf, True)
        groups: dict[int, set] = {}
        for a in range(xc.shape[0]):
            groups.setdefault(eng.leaf_slot_of(forest, 0, xc, xk, a), set()).add(a)
        out.append(LevelPartition(tuple(frozenset(g) for g in groups.values())))
    return out


def draw_prior_network_partition(
    cfg: PriorConfig, network: Network, rng: np.random.Generator
) -> LevelPartition:
    """Partition of a network's vertices (by position) from one prior tree on that network alone."""
    col = ColumnSpec("v", "network", tuple(str(v) for v in network.vertices), network="g")
    relabeled = Network(col.levels, frozenset(frozenset(str(v) for v in e) for e in network.edges))
    strategy = cfg.split_strategy if isinstance(cfg.split_strategy, str) else cfg.strategy_for(col)
    sub_cfg = replace(cfg, split_strategy={"v": strategy})
    return prior_partitions(sub_cfg, PredictorSchema((col,)), {"g": relabeled}, 0, 1, rng)[0]


def prior_function_draws(
    cfg: PriorConfig,
    data: Dataset,
    networks: Mapping[str, Network] | None,
    n_draws: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``(n_draws, data.n)`` values of ``f`` at ``data``'s rows under the full ensemble prior."""
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    design = make_design(_schema_dataset(data.schema), cfg, networks)
    kmax = int(design.nlev.max()) if design.nlev.size else 1
    forest = eng.new_forest(cfg.n_trees, 512, kmax, 0)
    side_buf = np.zeros(forest.side.shape[2], dtype=np.int8)
    out = np.empty((n_draws, data.n))
    eng.prior_ensemble_draws(
        forest, design, np.ascontiguousarray(data.x_cont, dtype=float),
        np.ascontiguousarray(data.x_cat, dtype=np.int64), cfg.hyper(), rng, side_buf, n_draws, out,
    )
    return out


def co_clustering_matrix(
    cfg: PriorConfig,
    schema: PredictorSchema,
    networks: Mapping[str, Network] | None,
    column: int | str,
    n_draws: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Monte Carlo estimate of P(levels k and k' share a leaf) under the single-tree prior."""
    if n_draws < 1:
        raise ValueError("n_draws must be positive")
    design, xc, xk, cfg = _analysis_setup(cfg, schema, networks, column)
    forest = _engine_forest(design)
    side_buf = np.zeros(forest.side.shape[2], dtype=np.int8)
    k = xc.shape[0]
    counts = np.zeros((k, k), dtype=np.int64)
    eng.coclustering_counts(forest, design, xc, xk, cfg.hyper(), rng, side_buf, n_draws, counts)
    return counts / n_draws


# ---------------------------------------------------------------------------
# partition-support combinatorics


def count_onehot_partitions(K: int) -> int:
    """Level partitions reachable by trees over the one-hot indicators: ``2**K - K``."""
    if K < 1:
        raise ValueError("K must be positive")
    if K > 62:
        raise OverflowError("count exceeds 64-bit range for K > 62")
    return 2**K - K


def enumerate_onehot_partitions(K: int) -> set[frozenset]:
    """Exhaustive closure of the full set under 'remove one level into a singleton'.

    A rule on indicator ``j`` sends only level ``j`` right, so each split of a
    leaf either peels one level off its block or leaves it unchanged.
    """
    start = frozenset([frozenset(range(K))])
    seen = {start}
    frontier = [start]
    while frontier:
        part = frontier.pop()
        for blk in part:
            if len(blk) < 2:
                continue
            rest = part - {blk}
            for v in blk:
                new = rest | {blk - {v}, frozenset([v])}
                if new not in seen:
                    seen.add(new)
                    frontier.append(new)
    return seen


def bell_number(K: int) -> int:
    """Number of partitions of ``K`` labeled items (Bell triangle)."""
    if not 1 <= K <= 25:
        raise ValueError("K must lie in [1, 25]")
    row = [1]
    for _ in range(K - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[-1]

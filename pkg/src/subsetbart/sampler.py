"""Backfitting Gibbs sampler for sum-of-trees regression and probit models.

The heavy lifting happens in :mod:`subsetbart._engine`; this module owns
configuration, outcome scaling, conversion between the compiled forest and
:class:`~subsetbart.tree.RegressionTree` objects, and posterior storage.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, special, stats

from . import _engine as eng
from .data import Dataset, OutcomeScaling, PredictorSchema
from .graph import Network
from .prior import PriorConfig, make_design
from .tree import DecisionRule, RegressionTree, SuffStatMap, TreeNode, suff_stat_map

DEFAULT_CAPACITY = 256


@dataclass(frozen=True)
class LeafStats:
    """Sufficient statistics of one leaf for the conjugate jump update."""

    count: int
    residual_sum: float
    sigma: float
    tau_leaf: float
    mu0: float = 0.0

    @classmethod
    def from_residuals(cls, r, sigma, tau_leaf, mu0=0.0) -> "LeafStats":
        r = np.asarray(r, dtype=float)
        return cls(r.size, float(r.sum()), sigma, tau_leaf, mu0)

    @property
    def P(self) -> float:
        return self.count / self.sigma**2 + 1.0 / self.tau_leaf**2

    @property
    def Theta(self) -> float:
        return self.residual_sum / self.sigma**2 + self.mu0 / self.tau_leaf**2


def leaf_log_marginal(stats: LeafStats) -> float:
    """Per-leaf log evidence up to factors shared by every candidate tree."""
    return eng.log_marginal(stats.count, stats.residual_sum, stats.sigma**2, stats.tau_leaf, stats.mu0)


@dataclass(frozen=True)
class ChainConfig:
    n_iterations: int = 2000
    n_burnin: int = 1000
    thin: int = 1
    min_leaf_size: int = 0
    q_grow: float = 0.5
    seed: int = 0
    probit: bool = False
    fixed_sigma: float | None = None
    keep_trees: bool = False
    check_suff_stats: bool = False
    capacity: int = DEFAULT_CAPACITY

    def __post_init__(self):
        if not 0 < self.q_grow < 1:
            raise ValueError("q_grow must lie in (0, 1)")
        if self.n_iterations < 1 or not 0 <= self.n_burnin < self.n_iterations:
            raise ValueError("need 0 <= n_burnin < n_iterations")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.min_leaf_size < 0:
            raise ValueError("min_leaf_size must be non-negative")
        if self.fixed_sigma is not None and not self.fixed_sigma > 0:
            raise ValueError("fixed_sigma must be positive")
        if self.probit and self.fixed_sigma is not None:
            raise ValueError("the probit model fixes sigma at 1")
        if self.capacity < 3:
            raise ValueError("capacity must allow at least one split")

    @property
    def n_draws(self) -> int:
        return (self.n_iterations - self.n_burnin) // self.thin


def sigma_prior_scale(sd: float, nu: float, quantile: float) -> float:
    """``lambda`` putting prior mass ``quantile`` on ``sigma < sd``."""
    return sd**2 * stats.chi2.ppf(1.0 - quantile, nu) / nu


class EnsembleState:
    """Mutable sampler state for one chain.

    ``y`` is the model-scale outcome (or the binary labels in probit mode).
    ``allfit`` and ``residual`` are kept consistent with the forest after
    every tree update.
    """

    def __init__(
        self,
        data: Dataset,
        y: np.ndarray,
        prior: PriorConfig,
        chain: ChainConfig,
        networks: Mapping[str, Network] | None = None,
        sigma: float = 1.0,
    ):
        if data.n < 1:
            raise ValueError("need at least one training observation")
        self.data = data
        self.prior = prior
        self.chain = chain
        self.design = make_design(data, prior, networks)
        n = data.n
        kmax = int(self.design.nlev.max()) if self.design.nlev.size else 1
        self.kmax = kmax
        self.forest = eng.new_forest(prior.n_trees, chain.capacity, kmax, n)
        self.hyper = prior.hyper(chain.q_grow)
        self.y = np.ascontiguousarray(y, dtype=float)
        self.probit = chain.probit
        self.z = np.zeros(n)
        self.allfit = np.zeros(n)
        self.residual = self.y.copy()
        self.sigma_box = np.array([1.0 if chain.probit else float(sigma)])
        self.side_buf = np.zeros(kmax, dtype=np.int8)
        self.tmp = np.empty(n, dtype=np.int64)
        self.stats = np.zeros(7, dtype=np.int64)
        self.iteration = 0
        if self.probit:
            self.residual[:] = 0.0

    @property
    def sigma(self) -> float:
        return float(self.sigma_box[0])

    @sigma.setter
    def sigma(self, v: float) -> None:
        self.sigma_box[0] = v

    @property
    def n_trees(self) -> int:
        return self.forest.nid.shape[0]

    # -- conversion ----------------------------------------------------------

    def _slot(self, m: int, node_id: int) -> int:
        hit = np.flatnonzero(self.forest.nid[m, : self.forest.hw[m]] == node_id)
        if hit.size == 0:
            raise KeyError(f"tree {m} has no node {node_id}")
        return int(hit[0])

    def _rule_args(self, rule: DecisionRule) -> tuple[int, float, np.ndarray]:
        side = np.zeros(self.kmax, dtype=np.int8)
        if rule.kind == "cat":
            side[list(rule.left_levels)] = 1
            side[list(rule.right_levels)] = 2
        return rule.var, rule.cut, side

    def tree(self, m: int) -> RegressionTree:
        F = self.forest
        pc = self.data.schema.p_cont
        nodes = {}
        stack = [0]
        while stack:
            s = stack.pop()
            label = int(F.nid[m, s])
            v = int(F.var[m, s])
            if v < 0:
                nodes[label] = TreeNode(label, None, float(F.mu[m, s]))
                continue
            if v < pc:
                rule = DecisionRule.continuous(v, F.cut[m, s])
            else:
                row = F.side[m, s]
                rule = DecisionRule.categorical(v, np.flatnonzero(row == 1), np.flatnonzero(row == 2))
            nodes[label] = TreeNode(label, rule, 0.0)
            stack.extend((int(F.rchild[m, s]), int(F.lchild[m, s])))
        return RegressionTree(self.data.schema, nodes)

    def trees(self) -> list[RegressionTree]:
        return [self.tree(m) for m in range(self.n_trees)]

    def suff_stat_map(self, m: int) -> SuffStatMap:
        F = self.forest
        return {
            int(F.nid[m, s]): F.order[m, F.start[m, s] : F.end[m, s]].copy()
            for s in range(F.hw[m])
            if F.nid[m, s] != 0 and F.var[m, s] < 0
        }

    def set_tree(self, m: int, t: RegressionTree) -> None:
        """Replace tree ``m``; ``allfit`` and ``residual`` follow."""
        t.validate()
        F = self.forest
        eng._shift_fit(F, m, self.allfit, self.residual, -1.0)
        _load_tree(F, m, t, self.kmax, self.design)
        eng._shift_fit(F, m, self.allfit, self.residual, 1.0)

    def partial_residual(self, m: int) -> np.ndarray:
        fit = np.zeros(self.data.n)
        eng.tree_fit(self.forest, m, self.data.n, fit)
        return self.residual + fit

    def fit_from_scratch(self) -> np.ndarray:
        out = np.zeros(self.data.n)
        eng.predict_forest(self.forest, self.design.xc, self.design.xk, out)
        return out

    def leaf_counts(self) -> np.ndarray:
        F = self.forest
        return np.array([eng.count_leaves_nogs(F, m)[0] for m in range(self.n_trees)])


def _load_tree(F: eng.Forest, m: int, t: RegressionTree, kmax: int, design: eng.Design) -> None:
    n = F.order.shape[1]
    eng.reset_tree(F, m, n)
    tmp = np.empty(n, dtype=np.int64)
    slot_of = {1: 0}
    for label in sorted(t.nodes):
        node = t.nodes[label]
        s = slot_of[label]
        if node.is_leaf:
            F.mu[m, s] = node.jump
            continue
        side = np.zeros(kmax, dtype=np.int8)
        if node.rule.kind == "cat":
            side[list(node.rule.left_levels)] = 1
            side[list(node.rule.right_levels)] = 2
        if not eng._free_slots(F, m, 2):
            raise ValueError(f"tree with {len(t.nodes)} nodes exceeds the slot capacity")
        eng.birth(F, m, s, node.rule.var, node.rule.cut, side, design.xc, design.xk, tmp)
        slot_of[2 * label] = int(F.lchild[m, s])
        slot_of[2 * label + 1] = int(F.rchild[m, s])


# ---------------------------------------------------------------------------
# single-step operations


def grow_log_accept(state: EnsembleState, m: int, leaf_id: int, rule: DecisionRule) -> float:
    """Log Metropolis-Hastings ratio for splitting ``leaf_id`` of tree ``m`` with ``rule``."""
    s = state._slot(m, leaf_id)
    if state.forest.var[m, s] >= 0:
        raise ValueError(f"node {leaf_id} is not a leaf")
    var, cut, side = state._rule_args(rule)
    r = state.partial_residual(m)
    return float(eng.grow_proposal(
        state.forest, m, s, var, cut, side, state.design, r, state.sigma**2, state.hyper,
        state.chain.min_leaf_size,
    ))


def prune_log_accept(state: EnsembleState, m: int, nog_id: int) -> float:
    """Log Metropolis-Hastings ratio for collapsing the two leaf children of ``nog_id``."""
    F = state.forest
    s = state._slot(m, nog_id)
    if F.var[m, s] < 0 or F.var[m, F.lchild[m, s]] >= 0 or F.var[m, F.rchild[m, s]] >= 0:
        raise ValueError(f"node {nog_id} is not a no-grandchild node")
    r = state.partial_residual(m)
    return float(eng.prune_proposal(F, m, s, r, state.sigma**2, state.hyper))


def update_tree(state: EnsembleState, m: int, rng: np.random.Generator) -> None:
    eng.update_tree(
        state.forest, m, state.design, state.allfit, state.residual, state.sigma, state.hyper,
        state.chain.min_leaf_size, rng, state.side_buf, state.tmp, state.stats,
        state.chain.check_suff_stats,
    )


def update_sigma(state: EnsembleState, rng: np.random.Generator, nu: float, lam: float) -> float:
    state.sigma = eng.draw_sigma(state.residual, nu, lam, rng)
    return state.sigma


def probit_augment(state: EnsembleState, rng: np.random.Generator) -> np.ndarray:
    """Redraw the latent outcomes; the residual becomes ``z - allfit``."""
    if not state.probit:
        raise ValueError("state is not in probit mode")
    eng.probit_augment(state.y, state.allfit, state.z, state.residual, rng)
    return state.z.copy()


# ---------------------------------------------------------------------------
# chains


@dataclass
class PosteriorSamples:
    """Retained draws of one chain.

    ``train_fits`` and ``test_fits`` hold ``f`` on the outcome scale for
    regression and on the latent scale for probit models.
    """

    schema: PredictorSchema
    scaling: OutcomeScaling
    probit: bool
    sigma: np.ndarray
    leaf_counts: np.ndarray
    train_fits: np.ndarray
    test_fits: np.ndarray | None = None
    trees: list[list[dict]] | None = None
    move_stats: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.sigma.shape[0]

    def _response(self, f: np.ndarray) -> np.ndarray:
        return special.ndtr(f) if self.probit else f

    def train_mean(self) -> np.ndarray:
        return self._response(self.train_fits).mean(axis=0)

    def test_mean(self) -> np.ndarray:
        if self.test_fits is None:
            raise ValueError("chain was run without test data")
        return self._response(self.test_fits).mean(axis=0)


def _validate_probit_outcome(y: np.ndarray) -> None:
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("probit outcome must be 0/1")


def run_chain(
    data: Dataset,
    chain: ChainConfig,
    prior: PriorConfig,
    networks: Mapping[str, Network] | None = None,
    test_data: Dataset | None = None,
    callback: Callable[[int, EnsembleState], None] | None = None,
) -> PosteriorSamples:
    """Run one chain from root-only trees and return the thinned post-burn-in draws.

    ``callback(iteration, state)`` is invoked after every full sweep.
    """
    if data.y is None:
        raise ValueError("training data has no outcome")
    if test_data is not None and test_data.schema != data.schema:
        raise ValueError("test data schema differs from training schema")
    prior = prior.resolved(chain.probit)
    y_raw = np.asarray(data.y, dtype=float)
    if chain.probit:
        _validate_probit_outcome(y_raw)
        scaling = OutcomeScaling.identity()
        y_model = y_raw
        sigma0, lam = 1.0, 1.0
    else:
        scaling = OutcomeScaling.from_outcome(y_raw)
        y_model = scaling.apply(y_raw)
        sd = float(np.std(y_model, ddof=1)) if y_model.size > 1 else 0.0
        sigma0 = sd if sd > 0 else 0.5
        lam = prior.lam if prior.lam is not None else sigma_prior_scale(sigma0, prior.nu, prior.sigma_quantile)
        if chain.fixed_sigma is not None:
            sigma0 = chain.fixed_sigma

    state = EnsembleState(data, y_model, prior, chain, networks, sigma0)
    rng = np.random.default_rng(chain.seed)
    if chain.probit:
        eng.probit_augment(state.y, state.allfit, state.z, state.residual, rng)

    D = chain.n_draws
    n = data.n
    sig = np.empty(D)
    counts = np.empty((D, prior.n_trees), dtype=np.int64)
    fits = np.empty((D, n))
    test_fits = None
    if test_data is not None:
        test_fits = np.empty((D, test_data.n))
        txc = np.ascontiguousarray(test_data.x_cont, dtype=float)
        txk = np.ascontiguousarray(test_data.x_cat, dtype=np.int64)
        tbuf = np.empty(test_data.n)
    trees = [] if chain.keep_trees else None
    half = 2.0 * scaling.half_range

    d = 0
    for it in range(chain.n_iterations):
        eng.sweep(
            state.forest, state.design, state.allfit, state.residual, state.sigma_box, state.hyper,
            chain.min_leaf_size, prior.nu, lam, chain.fixed_sigma is not None, chain.probit,
            state.y, state.z, rng, state.side_buf, state.tmp, state.stats, chain.check_suff_stats,
        )
        state.iteration = it + 1
        if callback is not None:
            callback(it, state)
        if it < chain.n_burnin or (it - chain.n_burnin + 1) % chain.thin:
            continue
        if d >= D:
            break
        sig[d] = state.sigma * (1.0 if chain.probit else half)
        counts[d] = state.leaf_counts()
        fits[d] = state.allfit if chain.probit else scaling.invert(state.allfit)
        if test_fits is not None:
            eng.predict_forest(state.forest, txc, txk, tbuf)
            test_fits[d] = tbuf if chain.probit else scaling.invert(tbuf)
        if trees is not None:
            trees.append([t.to_json() for t in state.trees()])
        d += 1

    s = state.stats
    move_stats = {
        "grow_proposed": int(s[eng.S_GROW_PROP]),
        "grow_accepted": int(s[eng.S_GROW_ACC]),
        "prune_proposed": int(s[eng.S_PRUNE_PROP]),
        "prune_accepted": int(s[eng.S_PRUNE_ACC]),
        "no_valid_rule": int(s[eng.S_NO_RULE]),
        "capacity_rejections": int(s[eng.S_FULL]),
        "suff_stat_mismatches": int(s[eng.S_SSM_BAD]),
    }
    return PosteriorSamples(
        data.schema, scaling, chain.probit, sig, counts, fits, test_fits, trees, move_stats
    )


def predict(
    samples: PosteriorSamples | list[list[dict]],
    x_new: Dataset,
    *,
    scaling: OutcomeScaling | None = None,
    probit: bool | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-draw and posterior-mean predictions from stored trees.

    Returns ``(per_draw, mean)``; probit models give probabilities.
    ``samples`` may also be a bare list of serialized ensembles, in which
    case ``scaling`` and ``probit`` describe how they were fitted.
    """
    if isinstance(samples, PosteriorSamples):
        if samples.trees is None:
            raise ValueError("samples were recorded without trees (set keep_trees)")
        ensembles = samples.trees
        scaling = samples.scaling
        probit = samples.probit
    else:
        ensembles = samples
        scaling = scaling or OutcomeScaling.identity()
        probit = bool(probit)
    schema = x_new.schema
    xc = np.ascontiguousarray(x_new.x_cont, dtype=float)
    xk = np.ascontiguousarray(x_new.x_cat, dtype=np.int64)
    kmax = max(schema.n_levels) if schema.p_cat else 1
    dummy = eng.Design(
        np.zeros((0, schema.p_cont)), np.zeros((0, schema.p_cat), dtype=np.int64),
        *([None] * 7),
    )
    out = np.empty((len(ensembles), x_new.n))
    buf = np.empty(x_new.n)
    for d, ensemble in enumerate(ensembles):
        trees = [RegressionTree.from_json(t, schema) for t in ensemble]
        cap = max(len(t.nodes) for t in trees) + 2
        F = eng.new_forest(len(trees), cap, kmax, 0)
        for m, t in enumerate(trees):
            _load_tree(F, m, t, kmax, dummy)
        eng.predict_forest(F, xc, xk, buf)
        out[d] = special.ndtr(buf) if probit else scaling.invert(buf)
    return out, out.mean(axis=0)


# ---------------------------------------------------------------------------
# validation oracle


def quadrature_marginal_oracle(
    t: RegressionTree, data: Dataset, sigma: float, tau_leaf: float, mu0: float = 0.0
) -> float:
    """Log evidence of ``data.y`` under tree structure ``t`` by numerical integration.

    Each leaf contributes ``log ∫ prod_i N(y_i; mu, sigma²) N(mu; mu0, tau²) dmu``,
    integrated with adaptive quadrature around a numerically located mode.
    All constants are kept.
    """
    y = np.asarray(data.y, dtype=float)
    total = 0.0
    for members in suff_stat_map(t, data).values():
        r = y[members]

        def log_integrand(mu, r=r):
            return float(
                np.sum(stats.norm.logpdf(r, loc=mu, scale=sigma)) + stats.norm.logpdf(mu, loc=mu0, scale=tau_leaf)
            )

        mode = optimize.minimize_scalar(lambda mu: -log_integrand(mu), tol=1e-12).x
        peak = log_integrand(mode)
        h = 1e-3 * min(sigma, tau_leaf)
        curv = (log_integrand(mode + h) - 2 * peak + log_integrand(mode - h)) / h**2
        width = 1.0 / math.sqrt(-curv)
        val, _ = integrate.quad(
            lambda mu: math.exp(log_integrand(mu) - peak),
            mode - 40 * width, mode + 40 * width,
            points=[mode], epsabs=0.0, epsrel=1e-12, limit=200,
        )
        total += peak + math.log(val)
    return total

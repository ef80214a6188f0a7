import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subsetbart.data import ColumnSpec, Dataset, PredictorSchema
from subsetbart.graph import Network, grid_graph, path_graph
from subsetbart.prior import (
    LevelPartition,
    NoValidRuleError,
    PriorConfig,
    bell_number,
    co_clustering_matrix,
    count_onehot_partitions,
    draw_jumps,
    draw_prior_network_partition,
    draw_prior_tree,
    draw_rule,
    draw_tree_structure,
    enumerate_onehot_partitions,
    induced_level_partition,
    prior_function_draws,
    prior_partitions,
)
from subsetbart.tree import DecisionRule, RegressionTree, TreeNode, birth

# beta this large keeps depth-1 nodes from splitting, so a draw is a stump or one split
ONE_SPLIT = dict(beta=60.0)


def cat_schema(k, name="g"):
    return PredictorSchema((ColumnSpec(name, "categorical", tuple(f"l{i}" for i in range(k))),))


def set_partitions(items):
    """All set partitions of ``items`` (independent of the package's enumerator)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def bell_by_binomial_recurrence(n):
    from math import comb

    b = [1]
    for m in range(n):
        b.append(sum(comb(m, k) * b[k] for k in range(m + 1)))
    return b[n]


# -- config -------------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = PriorConfig()
    assert (cfg.n_trees, cfg.alpha, cfg.beta, cfg.mu0) == (200, 0.95, 2.0, 0.0)
    assert cfg.tau == 0.25 and cfg.resolved(probit=True).tau == 1.5
    assert PriorConfig(tau_total=1.0, n_trees=4).tau_leaf == 0.5
    for bad in (dict(alpha=1.0), dict(alpha=0.0), dict(beta=-1), dict(n_trees=0), dict(tau_total=0),
                dict(nu=0), dict(lam=-1), dict(split_strategy="gs9")):
        with pytest.raises(ValueError):
            PriorConfig(**bad)


def test_strategy_lookup():
    net = ColumnSpec("v", "network", ("a", "b"), network="n")
    cat = ColumnSpec("g", "categorical", ("a", "b"))
    assert PriorConfig().strategy_for(net) == "gs2"
    assert PriorConfig(split_strategy="gs4").strategy_for(net) == "gs4"
    assert PriorConfig(split_strategy="gs4").strategy_for(cat) == "unif"
    assert PriorConfig(split_strategy={"g": "onehot"}).strategy_for(cat) == "onehot"


def test_level_partition_validation():
    p = LevelPartition((frozenset({3, 1}), frozenset({0})))
    assert p.blocks[0] == {0} and p.universe == {0, 1, 3}
    assert p.same_block(1, 3) and not p.same_block(0, 1)
    with pytest.raises(ValueError):
        LevelPartition((frozenset({1}), frozenset({1, 2})))
    with pytest.raises(ValueError):
        LevelPartition((frozenset(),))


# -- structure ------------------------------------------------------------------


def test_structure_grow_frequencies():
    rng = np.random.default_rng(0)
    draws = [draw_tree_structure(PriorConfig(), rng) for _ in range(10_000)]
    root = np.mean([len(d) > 1 for d in draws])
    assert abs(root - 0.95) <= 0.01
    assert abs(np.mean([len(d) == 1 for d in draws]) - 0.05) <= 0.01
    grown = [d for d in draws if len(d) > 1]
    child = np.mean([4 in d for d in grown] + [6 in d for d in grown])
    assert abs(child - 0.95 / 4) <= 0.02


def test_structure_is_a_full_binary_tree():
    rng = np.random.default_rng(1)
    for _ in range(500):
        ids = draw_tree_structure(PriorConfig(), rng)
        for k in ids:
            assert k == 1 or k // 2 in ids
            assert (2 * k in ids) == (2 * k + 1 in ids)


def test_tiny_alpha_gives_stumps():
    rng = np.random.default_rng(2)
    assert all(draw_tree_structure(PriorConfig(alpha=1e-12), rng) == {1} for _ in range(200))


# -- rules ----------------------------------------------------------------------


def _rule_at_root(schema, cfg, rng, networks=None, data=None):
    return draw_rule(RegressionTree.stump(schema), 1, schema, networks, cfg, rng, data=data)


def _unordered(rule):
    return frozenset([frozenset(rule.left_levels), frozenset(rule.right_levels)])


def test_two_levels_each_orientation_half():
    rng = np.random.default_rng(3)
    lefts = Counter(tuple(sorted(_rule_at_root(cat_schema(2), PriorConfig(), rng).left_levels))
                    for _ in range(10_000))
    assert set(lefts) == {(0,), (1,)}
    assert abs(lefts[(0,)] / 10_000 - 0.5) < 0.02


def test_three_levels_bipartitions_uniform():
    rng = np.random.default_rng(4)
    counts = Counter(_unordered(_rule_at_root(cat_schema(3), PriorConfig(), rng)) for _ in range(10_000))
    assert len(counts) == 3
    for c in counts.values():
        assert abs(c / 10_000 - 1 / 3) <= 0.02


@pytest.mark.parametrize("k", [2, 3, 4])
def test_every_bipartition_reachable(k):
    rng = np.random.default_rng(5)
    counts = Counter(_unordered(_rule_at_root(cat_schema(k), PriorConfig(), rng)) for _ in range(50_000))
    assert len(counts) == 2 ** (k - 1) - 1


def test_rule_respects_available_levels():
    schema = cat_schema(5)
    t = RegressionTree.stump(schema)
    t, ssm = birth(t, {1: np.arange(0)}, 1, DecisionRule.categorical(0, [0, 1, 2], [3, 4]), None)
    rng = np.random.default_rng(6)
    for _ in range(200):
        r = draw_rule(t, 2, schema, None, PriorConfig(), rng)
        assert r.left_levels | r.right_levels == {0, 1, 2}
        r = draw_rule(t, 3, schema, None, PriorConfig(), rng)
        assert r.left_levels | r.right_levels == {3, 4}


def test_continuous_cutpoints_uniform_on_available_interval():
    schema = PredictorSchema((ColumnSpec("x", "continuous"),))
    t = RegressionTree.stump(schema)
    t, ssm = birth(t, {1: np.arange(0)}, 1, DecisionRule.continuous(0, 0.8), None)
    t, ssm = birth(t, ssm, 2, DecisionRule.continuous(0, 0.2), None)
    rng = np.random.default_rng(7)
    cuts = np.array([draw_rule(t, 5, schema, None, PriorConfig(), rng).cut for _ in range(10_000)])
    assert t.available_set(5, 0) == (0.2, 0.8)
    assert abs(cuts.mean() - 0.5) <= 0.01
    assert cuts.min() >= 0.2 and cuts.max() < 0.8


def test_grid_cutpoints_restricted_to_interval():
    schema = PredictorSchema((ColumnSpec("x", "continuous", cutpoints=(2.0, 5.0, 8.0, 12.0)),))
    data = Dataset(np.array([[0.0], [1.0]]), np.empty((2, 0), dtype=np.int64), None, schema,
                   np.array([0.0]), np.array([10.0]))
    t = RegressionTree.stump(schema)
    t, _ = birth(t, {1: np.arange(0)}, 1, DecisionRule.continuous(0, 0.6), None)
    rng = np.random.default_rng(8)
    cuts = Counter(draw_rule(t, 2, schema, None, PriorConfig(), rng, data=data).cut for _ in range(4000))
    assert set(cuts) == {0.2, 0.5}
    assert abs(cuts[0.2] / 4000 - 0.5) < 0.03


def test_degenerate_and_exhausted_variables_are_skipped():
    schema = PredictorSchema((ColumnSpec("x", "continuous"), ColumnSpec("g", "categorical", ("a", "b"))))
    data = Dataset(np.zeros((2, 1)), np.array([[0], [1]]), None, schema, degenerate=np.array([True]))
    rng = np.random.default_rng(9)
    assert all(_rule_at_root(schema, PriorConfig(), rng, data=data).var == 1 for _ in range(50))
    t = RegressionTree.stump(schema)
    t, _ = birth(t, {1: np.arange(0)}, 1, DecisionRule.categorical(1, [0], [1]), None)
    with pytest.raises(NoValidRuleError):
        draw_rule(t, 2, schema, None, PriorConfig(), rng, data=data)


def test_variable_choice_uniform_over_eligible():
    schema = PredictorSchema((ColumnSpec("x", "continuous"), ColumnSpec("z", "continuous"),
                              ColumnSpec("g", "categorical", ("a", "b", "c"))))
    rng = np.random.default_rng(10)
    counts = Counter(_rule_at_root(schema, PriorConfig(), rng).var for _ in range(9000))
    for v in range(3):
        assert abs(counts[v] / 9000 - 1 / 3) < 0.02


def test_network_rules_are_connected():
    g = grid_graph(4, 5)
    labels = tuple(str(v) for v in g.vertices)
    col = ColumnSpec("v", "network", labels, network="g")
    net = Network(labels, frozenset(frozenset(str(v) for v in e) for e in g.edges))
    schema = PredictorSchema((col,))
    rng = np.random.default_rng(11)
    for strat in ("gs1", "gs2", "gs3", "gs4"):
        for _ in range(100):
            r = _rule_at_root(schema, PriorConfig(split_strategy=strat), rng, networks={"g": net})
            part = LevelPartition((r.left_levels, r.right_levels))
            assert part.disconnected_blocks(net) == 0


# -- jumps and the marginal of f -------------------------------------------------


def test_jump_sd_matches_tau_leaf():
    cfg = PriorConfig(tau_total=1.0, n_trees=4, mu0=0.3)
    rng = np.random.default_rng(12)
    jumps = np.array([draw_jumps(RegressionTree.stump(cat_schema(2)), cfg, rng).nodes[1].jump
                      for _ in range(10_000)])
    assert abs(jumps.std() / 0.5 - 1) <= 0.02
    assert abs(jumps.mean() - 0.3) <= 4 * 0.5 / 100


def test_marginal_sd_of_f_small_ensemble():
    schema = PredictorSchema((ColumnSpec("x", "continuous"), ColumnSpec("g", "categorical", ("a", "b", "c"))))
    data = Dataset(np.array([[0.1], [0.7]]), np.array([[0], [2]]), None, schema)
    f = prior_function_draws(PriorConfig(n_trees=20, tau_total=0.8), data, None, 10_000, np.random.default_rng(13))
    assert np.all(np.abs(f.std(axis=0) / 0.8 - 1) <= 0.02)
    assert np.all(np.abs(f.mean(axis=0)) <= 4 * 0.8 / 100)


def test_python_prior_tree_is_valid():
    schema = PredictorSchema((ColumnSpec("x", "continuous"), ColumnSpec("g", "categorical", ("a", "b", "c", "d"))))
    rng = np.random.default_rng(14)
    sizes = []
    for _ in range(300):
        t = draw_prior_tree(schema, None, PriorConfig(), rng)
        t.validate()
        sizes.append(len(t.leaf_ids()))
    assert 1 in sizes and max(sizes) > 2


# -- induced partitions ---------------------------------------------------------


def test_induced_partition_examples():
    schema = cat_schema(3)
    assert induced_level_partition(RegressionTree.stump(schema), 0).blocks == (frozenset({0, 1, 2}),)
    t = RegressionTree.stump(schema)
    t, _ = birth(t, {1: np.arange(0)}, 1, DecisionRule.categorical(0, [0, 1], [2]), None)
    assert induced_level_partition(t, 0).blocks == (frozenset({0, 1}), frozenset({2}))
    oh = PredictorSchema(tuple(ColumnSpec(f"g={i}", "continuous") for i in range(3)))
    t = RegressionTree(oh, {1: TreeNode(1, DecisionRule.continuous(0, 0.5)),
                            2: TreeNode(2, DecisionRule.continuous(1, 0.5)), 3: TreeNode(3),
                            4: TreeNode(4), 5: TreeNode(5)})
    t.validate()
    part = induced_level_partition(t, 0, onehot_block=(0, 1, 2))
    assert part.blocks == (frozenset({0}), frozenset({1}), frozenset({2}))


def test_single_split_coclustering_matches_closed_form():
    # one split at the root with prob alpha; a pair shares a side for (2^{K-1}-2) of the 2^K-2 subsets
    k, alpha = 6, 0.7
    cfg = PriorConfig(alpha=alpha, **ONE_SPLIT)
    cc = co_clustering_matrix(cfg, cat_schema(k), None, 0, 20_000, np.random.default_rng(15))
    expect = (1 - alpha) + alpha * (2 ** (k - 1) - 2) / (2**k - 2)
    off = cc[~np.eye(k, dtype=bool)]
    assert abs(off.mean() - expect) < 0.01
    onehot = PriorConfig(alpha=alpha, split_strategy={"g": "onehot"}, **ONE_SPLIT)
    cc1 = co_clustering_matrix(onehot, cat_schema(k), None, 0, 20_000, np.random.default_rng(16))
    assert abs(cc1[~np.eye(k, dtype=bool)].mean() - (1 - alpha * 2 / k)) < 0.01


def test_coclustering_symmetric_with_unit_diagonal():
    for strat in ("unif", "onehot"):
        cfg = PriorConfig(split_strategy={"g": strat})
        cc = co_clustering_matrix(cfg, cat_schema(8), None, "g", 2000, np.random.default_rng(17))
        assert np.array_equal(cc, cc.T) and np.all(np.diag(cc) == 1)
        assert np.all((0 <= cc) & (cc <= 1))
    with pytest.raises(ValueError):
        co_clustering_matrix(PriorConfig(), cat_schema(3), None, 0, 0, np.random.default_rng(0))


def test_engine_single_split_bipartitions_uniform():
    parts = prior_partitions(PriorConfig(**ONE_SPLIT), cat_schema(3), None, 0, 12_000, np.random.default_rng(18))
    counts = Counter(p.blocks for p in parts if len(p.blocks) == 2)
    assert len(counts) == 3
    grown = sum(counts.values())
    assert abs(grown / 12_000 - 0.95) < 0.01
    for c in counts.values():
        assert abs(c / grown - 1 / 3) < 0.02


def test_onehot_prior_support_is_the_reachable_set():
    k = 4
    cfg = PriorConfig(split_strategy={"g": "onehot"}, alpha=0.99, beta=0.5)
    parts = prior_partitions(cfg, cat_schema(k), None, 0, 20_000, np.random.default_rng(19))
    seen = {frozenset(p.blocks) for p in parts}
    assert seen == enumerate_onehot_partitions(k)
    assert len(seen) == count_onehot_partitions(k) < bell_number(k)


@pytest.mark.parametrize("strategy", ["gs1", "gs2", "gs3", "gs4"])
def test_network_prior_partitions_connected(strategy):
    g = grid_graph(5, 10)
    rng = np.random.default_rng(20)
    for _ in range(200):
        part = draw_prior_network_partition(PriorConfig(split_strategy=strategy), g, rng)
        assert part.disconnected_blocks(g) == 0
        assert part.universe == set(range(50))


def test_unif_network_partitions_can_be_disconnected():
    g = grid_graph(5, 10)
    rng = np.random.default_rng(21)
    bad = sum(draw_prior_network_partition(PriorConfig(split_strategy="unif"), g, rng).disconnected_blocks(g)
              for _ in range(50))
    assert bad > 0


def test_network_partition_deterministic():
    g = path_graph(12)
    a = draw_prior_network_partition(PriorConfig(), g, np.random.default_rng(22))
    b = draw_prior_network_partition(PriorConfig(), g, np.random.default_rng(22))
    assert a == b
    stump = draw_prior_network_partition(PriorConfig(alpha=1e-12), g, np.random.default_rng(0))
    assert len(stump.blocks) == 1


# -- combinatorics --------------------------------------------------------------


def test_partition_counts_examples():
    assert count_onehot_partitions(5) == 27 and bell_number(5) == 52
    assert count_onehot_partitions(10) == 1014 and bell_number(10) == 115975
    assert count_onehot_partitions(2) == 2 == bell_number(2)
    assert bell_number(1) == 1 == count_onehot_partitions(1)
    with pytest.raises(OverflowError):
        count_onehot_partitions(63)
    with pytest.raises(ValueError):
        bell_number(26)
    with pytest.raises(ValueError):
        count_onehot_partitions(0)


@pytest.mark.parametrize("k", range(1, 13))
def test_onehot_count_matches_enumeration(k):
    found = enumerate_onehot_partitions(k)
    assert len(found) == count_onehot_partitions(k)
    # every partition of three items has at most one non-singleton block
    assert (len(found) == bell_number(k)) == (k <= 3)


@pytest.mark.parametrize("k", range(1, 9))
def test_onehot_support_matches_independent_characterization(k):
    # reachable partitions are exactly those with at most one non-singleton block
    allp = [frozenset(frozenset(b) for b in p) for p in set_partitions(list(range(k)))]
    assert len(allp) == bell_number(k)
    reachable = {p for p in allp if sum(len(b) > 1 for b in p) <= 1}
    assert reachable == enumerate_onehot_partitions(k)


@settings(max_examples=25)
@given(st.integers(1, 25))
def test_bell_matches_binomial_recurrence(k):
    assert bell_number(k) == bell_by_binomial_recurrence(k)

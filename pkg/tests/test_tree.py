import copy
import math

import numpy as np
import pytest
from conftest import random_dataset, random_rule
from hypothesis import given, settings
from hypothesis import strategies as st

from subsetbart.data import ColumnSpec, Dataset, PredictorSchema
from subsetbart.tree import (
    MAX_DEPTH,
    DecisionRule,
    RegressionTree,
    TreeError,
    TreeNode,
    birth,
    death,
    depth,
    parent,
    same_suff_stat_map,
    suff_stat_map,
)

SCHEMA = PredictorSchema(
    (ColumnSpec("x1", "continuous"), ColumnSpec("x2", "continuous"),
     ColumnSpec("g", "categorical", ("a", "b", "c", "d", "e")))
)
G = 2  # variable index of the categorical column


def point(x1=0.5, x2=0.5, g=0):
    return np.array([x1, x2]), np.array([g])


def depth1(cut=0.5, jumps=(-1.0, 2.0)):
    t = RegressionTree.stump(SCHEMA)
    t.nodes[1].rule = DecisionRule.continuous(0, cut)
    t.nodes[2] = TreeNode(2, None, jumps[0])
    t.nodes[3] = TreeNode(3, None, jumps[1])
    t.validate()
    return t


# -- labels -------------------------------------------------------------------


def test_label_arithmetic():
    assert [depth(k) for k in (1, 2, 3, 4, 7, 8, 1023, 1024)] == [0, 1, 1, 2, 2, 3, 9, 10]
    assert parent(1) is None and parent(6) == 3 and parent(7) == 3
    assert MAX_DEPTH == 60


# -- rules ----------------------------------------------------------------------


def test_rule_validation():
    with pytest.raises(TreeError):
        DecisionRule.continuous(0, 1.5)
    with pytest.raises(TreeError):
        DecisionRule.categorical(G, [0, 1], [1, 2])
    with pytest.raises(TreeError):
        DecisionRule.categorical(G, [], [1])
    with pytest.raises(TreeError):
        DecisionRule(0, "oblique")


def test_rule_boundary_goes_right():
    r = DecisionRule.continuous(0, 0.5)
    assert r.goes_left(np.array([0.49]), np.array([]), 1)
    assert not r.goes_left(np.array([0.5]), np.array([]), 1)


# -- traverse / evaluate --------------------------------------------------------


def test_traverse_examples():
    stump = RegressionTree.stump(SCHEMA, 0.7)
    assert stump.traverse(*point(0.1)) == 1 and stump.evaluate(*point(0.9, g=4)) == 0.7
    t = depth1()
    assert t.traverse(*point(0.3)) == 2
    assert t.evaluate(*point(0.9)) == 2.0
    cat = RegressionTree.stump(SCHEMA)
    cat.nodes[1].rule = DecisionRule.categorical(G, [0, 2], [1, 3, 4])
    cat.nodes[2], cat.nodes[3] = TreeNode(2), TreeNode(3)
    cat.validate()
    assert cat.traverse(*point(g=2)) == 2 and cat.traverse(*point(g=1)) == 3


def test_traverse_rejects_uncovered_level():
    t = RegressionTree.stump(SCHEMA)
    t.nodes[1].rule = DecisionRule.categorical(G, [0], [1])
    t.nodes[2], t.nodes[3] = TreeNode(2), TreeNode(3)
    with pytest.raises(TreeError):
        t.validate()
    with pytest.raises(TreeError):
        t.traverse(*point(g=3))


# -- available sets -------------------------------------------------------------


def test_available_set_examples():
    t = RegressionTree.stump(SCHEMA)
    assert t.available_set(1, 0) == (0.0, 1.0)
    assert t.available_set(1, G) == frozenset(range(5))
    t, ssm = birth(t, {1: np.arange(0)}, 1, DecisionRule.continuous(0, 0.6), None)
    assert t.available_set(2, 0) == (0.0, 0.6) and t.available_set(3, 0) == (0.6, 1.0)
    assert t.available_set(2, 1) == (0.0, 1.0)
    t, ssm = birth(t, ssm, 2, DecisionRule.categorical(G, [0, 1, 2], [3, 4]), None)
    t, ssm = birth(t, ssm, 4, DecisionRule.categorical(G, [0], [1, 2]), None)
    assert t.available_set(8, G) == {0}
    assert t.available_set(9, G) == {1, 2}
    assert t.available_set(5, G) == {3, 4}


def test_birth_rejects_rule_outside_availability():
    t = RegressionTree.stump(SCHEMA)
    t, ssm = birth(t, {1: np.arange(0)}, 1, DecisionRule.categorical(G, [0, 1], [2, 3, 4]), None)
    with pytest.raises(TreeError):
        birth(t, ssm, 2, DecisionRule.categorical(G, [0], [1, 2]), None)
    with pytest.raises(TreeError):
        birth(t, ssm, 1, DecisionRule.continuous(0, 0.5), None)
    t, ssm = birth(t, ssm, 3, DecisionRule.continuous(0, 0.4), None)
    with pytest.raises(TreeError):
        birth(t, ssm, 6, DecisionRule.continuous(0, 0.7), None)


# -- birth / death --------------------------------------------------------------


def test_birth_routing_example():
    schema = PredictorSchema((ColumnSpec("x1", "continuous"),))
    ds = Dataset(np.array([[0.1], [0.2], [0.7], [0.9]]), np.empty((4, 0), dtype=np.int64), None, schema)
    t = RegressionTree.stump(schema)
    t, ssm = birth(t, suff_stat_map(t, ds), 1, DecisionRule.continuous(0, 0.5), ds)
    assert ssm[2].tolist() == [0, 1] and ssm[3].tolist() == [2, 3]
    assert t.leaf_ids() == [2, 3] and t.nog_ids() == [1]
    t, ssm = death(t, ssm, 1)
    assert t.leaf_ids() == [1] and ssm[1].tolist() == [0, 1, 2, 3]


def test_death_errors():
    t = depth1()
    ssm = {2: np.arange(0), 3: np.arange(0)}
    with pytest.raises(TreeError):
        death(t, ssm, 2)
    t, ssm = birth(t, ssm, 2, DecisionRule.continuous(1, 0.5), None)
    with pytest.raises(TreeError):
        death(t, ssm, 1)


def test_leaf_and_nog_ids():
    t = RegressionTree.stump(SCHEMA)
    assert t.leaf_ids() == [1] and t.nog_ids() == []
    t = depth1()
    assert t.leaf_ids() == [2, 3] and t.nog_ids() == [1]
    ssm = {2: np.arange(0), 3: np.arange(0)}
    t, ssm = birth(t, ssm, 2, DecisionRule.continuous(1, 0.5), None)
    t, ssm = birth(t, ssm, 3, DecisionRule.continuous(1, 0.5), None)
    assert t.leaf_ids() == [4, 5, 6, 7] and t.nog_ids() == [2, 3]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 40))
def test_random_edit_sequences_keep_invariants(seed, n):
    rng = np.random.default_rng(seed)
    ds = random_dataset(SCHEMA, n, seed)
    t = RegressionTree.stump(SCHEMA)
    ssm = suff_stat_map(t, ds)
    for _ in range(30):
        if rng.uniform() < 0.6 or not t.nog_ids():
            leaf = int(rng.choice(t.leaf_ids()))
            rule = random_rule(t, leaf, rng)
            if rule is None:
                continue
            before_t, before_s = t.copy(), copy.deepcopy(ssm)
            t, ssm = birth(t, ssm, leaf, rule, ds)
            if rng.uniform() < 0.3:
                t, ssm = death(t, ssm, leaf)
                assert t == before_t and same_suff_stat_map(ssm, before_s)
        else:
            nog = int(rng.choice(t.nog_ids()))
            merged = len(ssm[2 * nog]) + len(ssm[2 * nog + 1])
            t, ssm = death(t, ssm, nog)
            assert len(ssm[nog]) == merged and np.all(np.diff(ssm[nog]) > 0)
        t.validate()
        assert same_suff_stat_map(ssm, suff_stat_map(t, ds))
        assert sorted(ssm) == t.leaf_ids()
        assert sorted(np.concatenate(list(ssm.values())).tolist()) == list(range(n))
        for k in t.nodes:
            assert k == 1 or (parent(k) in t.nodes and depth(k) == int(math.log2(k)))
            if k > 1:
                for var in range(SCHEMA.p):
                    mine, up = t.available_set(k, var), t.available_set(parent(k), var)
                    if var < SCHEMA.p_cont:
                        assert up[0] <= mine[0] and mine[1] <= up[1]
                    else:
                        assert mine <= up


def test_partition_property_on_random_corpus():
    rng = np.random.default_rng(5)
    t = RegressionTree.stump(SCHEMA)
    ssm = {1: np.arange(0)}
    while len(t.leaf_ids()) < 12:
        leaf = int(rng.choice(t.leaf_ids()))
        rule = random_rule(t, leaf, rng)
        if rule is not None:
            t, ssm = birth(t, ssm, leaf, rule, None)
    ds = random_dataset(SCHEMA, 10_000, 6)
    hits = suff_stat_map(t, ds)
    assert sum(len(v) for v in hits.values()) == 10_000
    assert set(hits) == set(t.leaf_ids())
    # each leaf's region is where its ancestors' rules send the point
    for leaf, idx in hits.items():
        for i in idx[:20]:
            for var in range(SCHEMA.p):
                avail = t.available_set(leaf, var)
                if var < SCHEMA.p_cont:
                    assert avail[0] <= ds.x_cont[i, var] < avail[1] or ds.x_cont[i, var] == avail[1] == 1.0
                else:
                    assert ds.x_cat[i, var - SCHEMA.p_cont] in avail


# -- serialization --------------------------------------------------------------


def test_json_round_trip_and_format():
    t = depth1(0.25, (-1.0, 2.5))
    obj = t.to_json()
    assert obj == {"nodes": [
        {"id": 1, "rule": {"var": 0, "kind": "cont", "cut": 0.25}, "jump": None},
        {"id": 2, "jump": -1.0},
        {"id": 3, "jump": 2.5},
    ]}
    assert RegressionTree.from_json(obj, SCHEMA) == t


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_json_round_trip_random_trees(seed):
    import json

    rng = np.random.default_rng(seed)
    t = RegressionTree.stump(SCHEMA, rng.normal())
    ssm = {1: np.arange(0)}
    for _ in range(int(rng.integers(0, 10))):
        leaf = int(rng.choice(t.leaf_ids()))
        rule = random_rule(t, leaf, rng)
        if rule is not None:
            t, ssm = birth(t, ssm, leaf, rule, None)
    t.set_jumps({k: float(rng.normal()) for k in t.leaf_ids()})
    back = RegressionTree.from_json(json.dumps(t.to_json()), SCHEMA)
    assert back == t and back.to_json() == t.to_json()


def test_from_json_rejects_broken_structure():
    with pytest.raises(TreeError):
        RegressionTree.from_json({"nodes": [{"id": 1, "rule": {"var": 0, "kind": "cont", "cut": 0.5}, "jump": None},
                                            {"id": 2, "jump": 0.0}]}, SCHEMA)
    with pytest.raises(TreeError):
        RegressionTree.from_json({"nodes": [{"id": 1, "rule": {"var": 2, "kind": "cont", "cut": 0.5}, "jump": None},
                                            {"id": 2, "jump": 0.0}, {"id": 3, "jump": 0.0}]}, SCHEMA)

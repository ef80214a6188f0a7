"""Regression trees with cutpoint and level-subset decision rules.

Nodes carry canonical integer labels: the root is 1 and the children of
``nx`` are ``2*nx`` (left) and ``2*nx + 1`` (right), so parent and depth
follow from the label alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .data import Dataset, PredictorSchema

MAX_DEPTH = 60


class TreeError(ValueError):
    pass


def depth(node_id: int) -> int:
    return node_id.bit_length() - 1


def parent(node_id: int) -> int | None:
    return node_id // 2 if node_id > 1 else None


@dataclass(frozen=True)
class DecisionRule:
    """``{X_var in C}``; continuous rules use ``C = [0, cut)``.

    Categorical rules keep both the left and the right level sets so routing
    never needs the node's available set.
    """

    var: int
    kind: str
    cut: float = 0.0
    left_levels: frozenset = frozenset()
    right_levels: frozenset = frozenset()

    def __post_init__(self):
        if self.kind == "cont":
            if not 0.0 <= self.cut <= 1.0:
                raise TreeError(f"cutpoint {self.cut} outside [0, 1]")
            if self.left_levels or self.right_levels:
                raise TreeError("continuous rules carry no level sets")
        elif self.kind == "cat":
            if not self.left_levels or not self.right_levels:
                raise TreeError("categorical rules need non-empty left and right sets")
            if self.left_levels & self.right_levels:
                raise TreeError("left and right level sets overlap")
        else:
            raise TreeError(f"unknown rule kind {self.kind!r}")

    @classmethod
    def continuous(cls, var: int, cut: float) -> "DecisionRule":
        return cls(var, "cont", float(cut))

    @classmethod
    def categorical(cls, var: int, left: Iterable[int], right: Iterable[int]) -> "DecisionRule":
        return cls(var, "cat", 0.0, frozenset(int(v) for v in left), frozenset(int(v) for v in right))

    def goes_left(self, xc: np.ndarray, xk: np.ndarray, p_cont: int) -> bool:
        if self.kind == "cont":
            return bool(xc[self.var] < self.cut)
        level = int(xk[self.var - p_cont])
        if level in self.left_levels:
            return True
        if level in self.right_levels:
            return False
        raise TreeError(f"level {level} reached a rule that does not cover it")

    def to_json(self) -> dict:
        if self.kind == "cont":
            return {"var": self.var, "kind": "cont", "cut": self.cut}
        return {
            "var": self.var,
            "kind": "cat",
            "left": sorted(self.left_levels),
            "right": sorted(self.right_levels),
        }

    @classmethod
    def from_json(cls, d: dict) -> "DecisionRule":
        if d["kind"] == "cont":
            return cls.continuous(d["var"], d["cut"])
        return cls.categorical(d["var"], d["left"], d["right"])


@dataclass
class TreeNode:
    node_id: int
    rule: DecisionRule | None = None
    jump: float = 0.0

    @property
    def parent_id(self) -> int | None:
        return parent(self.node_id)

    @property
    def left_child_id(self) -> int | None:
        return 2 * self.node_id if self.rule is not None else None

    @property
    def right_child_id(self) -> int | None:
        return 2 * self.node_id + 1 if self.rule is not None else None

    @property
    def is_leaf(self) -> bool:
        return self.rule is None


SuffStatMap = dict[int, np.ndarray]
"""Leaf label -> sorted indices of the observations reaching that leaf."""


@dataclass
class RegressionTree:
    schema: PredictorSchema
    nodes: dict[int, TreeNode] = field(default_factory=lambda: {1: TreeNode(1)})

    @classmethod
    def stump(cls, schema: PredictorSchema, jump: float = 0.0) -> "RegressionTree":
        return cls(schema, {1: TreeNode(1, None, float(jump))})

    def copy(self) -> "RegressionTree":
        return RegressionTree(
            self.schema, {k: TreeNode(v.node_id, v.rule, v.jump) for k, v in self.nodes.items()}
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegressionTree):
            return NotImplemented
        if self.nodes.keys() != other.nodes.keys():
            return False
        for k, a in self.nodes.items():
            b = other.nodes[k]
            if a.rule != b.rule:
                return False
            if a.is_leaf and a.jump != b.jump:
                return False
        return True

    # -- structure -----------------------------------------------------------

    def is_leaf(self, node_id: int) -> bool:
        return self.nodes[node_id].is_leaf

    def leaf_ids(self) -> list[int]:
        return sorted(k for k, v in self.nodes.items() if v.is_leaf)

    def nog_ids(self) -> list[int]:
        """Internal nodes whose two children are leaves."""
        return sorted(
            k
            for k, v in self.nodes.items()
            if not v.is_leaf and self.nodes[2 * k].is_leaf and self.nodes[2 * k + 1].is_leaf
        )

    def jumps(self) -> dict[int, float]:
        return {k: self.nodes[k].jump for k in self.leaf_ids()}

    def set_jumps(self, jumps: dict[int, float]) -> None:
        for k, mu in jumps.items():
            if not self.nodes[k].is_leaf:
                raise TreeError(f"node {k} is not a leaf")
            self.nodes[k].jump = float(mu)

    def validate(self) -> None:
        """Check the canonical-label structure and that rules partition availability."""
        if 1 not in self.nodes:
            raise TreeError("missing root")
        for k, node in self.nodes.items():
            if node.node_id != k:
                raise TreeError(f"node keyed {k} carries label {node.node_id}")
            if k > 1 and parent(k) not in self.nodes:
                raise TreeError(f"node {k} has no parent")
            if k > 1 and self.nodes[parent(k)].is_leaf:
                raise TreeError(f"node {k} hangs below a leaf")
            has_kids = 2 * k in self.nodes, 2 * k + 1 in self.nodes
            if node.is_leaf and any(has_kids):
                raise TreeError(f"leaf {k} has children")
            if not node.is_leaf and not all(has_kids):
                raise TreeError(f"internal node {k} lacks a child")
            if not node.is_leaf:
                self._check_rule(k, node.rule)

    def _check_rule(self, node_id: int, rule: DecisionRule) -> None:
        if not 0 <= rule.var < self.schema.p:
            raise TreeError(f"rule at {node_id} references variable {rule.var}")
        is_cont = rule.var < self.schema.p_cont
        if is_cont != (rule.kind == "cont"):
            raise TreeError(f"rule kind at {node_id} does not match variable {rule.var}")
        avail = self.available_set(node_id, rule.var)
        if rule.kind == "cont":
            lo, hi = avail
            if not hi > lo:
                raise TreeError(f"variable {rule.var} has no room to split at node {node_id}")
            if not lo <= rule.cut <= hi:
                raise TreeError(f"cutpoint {rule.cut} outside available [{lo}, {hi}) at {node_id}")
        elif rule.left_levels | rule.right_levels != avail:
            raise TreeError(f"rule at {node_id} does not partition the available levels")

    # -- routing -------------------------------------------------------------

    def traverse(self, xc: np.ndarray, xk: np.ndarray) -> int:
        """Leaf label reached by one observation."""
        nid = 1
        pc = self.schema.p_cont
        node = self.nodes[1]
        while node.rule is not None:
            nid = 2 * nid + (0 if node.rule.goes_left(xc, xk, pc) else 1)
            node = self.nodes[nid]
        return nid

    def evaluate(self, xc: np.ndarray, xk: np.ndarray) -> float:
        return self.nodes[self.traverse(xc, xk)].jump

    def predict(self, ds: Dataset) -> np.ndarray:
        return np.array([self.evaluate(ds.x_cont[i], ds.x_cat[i]) for i in range(ds.n)])

    def available_set(self, node_id: int, var: int):
        """Values of ``var`` that can reach ``node_id``.

        Returns ``(lo, hi)`` for continuous variables (the interval
        ``[lo, hi)``) and a frozenset of level positions otherwise.
        """
        pc = self.schema.p_cont
        if var < pc:
            lo, hi = 0.0, 1.0
        else:
            avail = frozenset(range(self.schema.n_levels[var - pc]))
        child = node_id
        while child > 1:
            up = child // 2
            rule = self.nodes[up].rule
            if rule.var == var:
                went_left = child == 2 * up
                if var < pc:
                    if went_left:
                        hi = min(hi, rule.cut)
                    else:
                        lo = max(lo, rule.cut)
                else:
                    avail &= rule.left_levels if went_left else rule.right_levels
            child = up
        return (lo, hi) if var < pc else avail

    # -- serialization -------------------------------------------------------

    def to_json(self) -> dict:
        out = []

        def visit(k):
            node = self.nodes[k]
            if node.is_leaf:
                out.append({"id": k, "jump": node.jump})
            else:
                out.append({"id": k, "rule": node.rule.to_json(), "jump": None})
                visit(2 * k)
                visit(2 * k + 1)

        visit(1)
        return {"nodes": out}

    @classmethod
    def from_json(cls, obj: dict | str, schema: PredictorSchema) -> "RegressionTree":
        if isinstance(obj, str):
            obj = json.loads(obj)
        nodes = {}
        for d in obj["nodes"]:
            rule = DecisionRule.from_json(d["rule"]) if d.get("rule") else None
            nodes[int(d["id"])] = TreeNode(int(d["id"]), rule, 0.0 if d.get("jump") is None else float(d["jump"]))
        t = cls(schema, nodes)
        t.validate()
        return t


# ---------------------------------------------------------------------------
# sufficient-statistic maps and structural edits


def suff_stat_map(t: RegressionTree, data: Dataset) -> SuffStatMap:
    """From-scratch map by routing every observation."""
    buckets: dict[int, list[int]] = {k: [] for k in t.leaf_ids()}
    for i in range(data.n):
        buckets[t.traverse(data.x_cont[i], data.x_cat[i])].append(i)
    return {k: np.array(v, dtype=np.int64) for k, v in buckets.items()}


def same_suff_stat_map(a: SuffStatMap, b: SuffStatMap) -> bool:
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def birth(
    t: RegressionTree, ssm: SuffStatMap, leaf_id: int, rule: DecisionRule, data: Dataset
) -> tuple[RegressionTree, SuffStatMap]:
    """Split a leaf with ``rule``; only the leaf's own observations are re-routed."""
    node = t.nodes.get(leaf_id)
    if node is None or not node.is_leaf:
        raise TreeError(f"node {leaf_id} is not a leaf")
    if depth(leaf_id) >= MAX_DEPTH:
        raise TreeError(f"node {leaf_id} is at the depth limit")
    t._check_rule(leaf_id, rule)
    node.rule = rule
    t.nodes[2 * leaf_id] = TreeNode(2 * leaf_id)
    t.nodes[2 * leaf_id + 1] = TreeNode(2 * leaf_id + 1)
    members = ssm.pop(leaf_id)
    pc = t.schema.p_cont
    go = np.array(
        [rule.goes_left(data.x_cont[i], data.x_cat[i], pc) for i in members], dtype=bool
    ).reshape(-1)
    ssm[2 * leaf_id] = members[go]
    ssm[2 * leaf_id + 1] = members[~go]
    return t, ssm


def death(t: RegressionTree, ssm: SuffStatMap, nog_id: int) -> tuple[RegressionTree, SuffStatMap]:
    """Remove both (leaf) children of ``nog_id``; their index lists are merged."""
    if nog_id not in t.nodes or t.nodes[nog_id].is_leaf:
        raise TreeError(f"node {nog_id} is not internal")
    left, right = 2 * nog_id, 2 * nog_id + 1
    if not (t.nodes[left].is_leaf and t.nodes[right].is_leaf):
        raise TreeError(f"node {nog_id} has grandchildren")
    del t.nodes[left], t.nodes[right]
    t.nodes[nog_id].rule = None
    ssm[nog_id] = np.sort(np.concatenate([ssm.pop(left), ssm.pop(right)]))
    return t, ssm

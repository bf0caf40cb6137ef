"""Binary decision trees, their data partitions, and the four MCMC moves.

Routing convention: a row goes to the RIGHT child when
``x[feature] < threshold`` is true, to the left child otherwise. Any fixed
convention works as long as it is used everywhere; this one is used by the
router, the proposals, and the serialized form alike.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GROW = "grow"
PRUNE = "prune"
CHANGE = "change"
SWAP = "swap"
MOVE_KINDS = (GROW, PRUNE, CHANGE, SWAP)


@dataclass
class Node:
    depth: int
    parent: int | None = None
    feature: int | None = None     # None means terminal
    threshold: float | None = None
    left: int | None = None
    right: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def copy(self) -> "Node":
        return Node(self.depth, self.parent, self.feature,
                    self.threshold, self.left, self.right)


class Tree:
    """Strictly binary decision tree stored as an id -> Node arena.

    Node ids are only ever retired (by prune) or newly allocated (by grow),
    never reused within a tree's lifetime, so leaf ids are stable keys for
    leaf parameters between structural moves.
    """

    def __init__(self):
        self.nodes: dict[int, Node] = {0: Node(depth=0)}
        self.root = 0
        self._next_id = 1

    @classmethod
    def stump(cls) -> "Tree":
        return cls()

    def copy(self) -> "Tree":
        t = Tree.__new__(Tree)
        t.nodes = {i: node.copy() for i, node in self.nodes.items()}
        t.root = self.root
        t._next_id = self._next_id
        return t

    def is_leaf(self, node_id: int) -> bool:
        return self.nodes[node_id].is_leaf

    def depth_of(self, node_id: int) -> int:
        return self.nodes[node_id].depth

    def leaves(self) -> list[int]:
        return [i for i, nd in self.nodes.items() if nd.is_leaf]

    def internal_nodes(self) -> list[int]:
        return [i for i, nd in self.nodes.items() if not nd.is_leaf]

    def prunable_nodes(self) -> list[int]:
        """Internal nodes whose two children are both terminal."""
        out = []
        for i, nd in self.nodes.items():
            if not nd.is_leaf and self.nodes[nd.left].is_leaf and self.nodes[nd.right].is_leaf:
                out.append(i)
        return out

    def n_leaves(self) -> int:
        return sum(1 for nd in self.nodes.values() if nd.is_leaf)

    def grow(self, leaf_id: int, feature: int, threshold: float) -> tuple[int, int]:
        """Split a terminal node; returns the (left, right) child ids."""
        nd = self.nodes[leaf_id]
        if not nd.is_leaf:
            raise ValueError(f"node {leaf_id} is not terminal")
        left = self._next_id
        right = self._next_id + 1
        self._next_id += 2
        self.nodes[left] = Node(depth=nd.depth + 1, parent=leaf_id)
        self.nodes[right] = Node(depth=nd.depth + 1, parent=leaf_id)
        nd.feature = feature
        nd.threshold = float(threshold)
        nd.left = left
        nd.right = right
        return left, right

    def prune(self, node_id: int) -> None:
        """Remove the two terminal children of `node_id`, making it terminal."""
        nd = self.nodes[node_id]
        if nd.is_leaf:
            raise ValueError(f"node {node_id} is terminal")
        if not (self.nodes[nd.left].is_leaf and self.nodes[nd.right].is_leaf):
            raise ValueError(f"children of node {node_id} are not both terminal")
        del self.nodes[nd.left]
        del self.nodes[nd.right]
        nd.feature = nd.threshold = nd.left = nd.right = None

    def set_rule(self, node_id: int, feature: int, threshold: float) -> None:
        nd = self.nodes[node_id]
        if nd.is_leaf:
            raise ValueError(f"node {node_id} is terminal")
        nd.feature = feature
        nd.threshold = float(threshold)

    def leaf_assignment(self, X: np.ndarray) -> np.ndarray:
        """Route every row of X to its terminal node id."""
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0], dtype=np.int64)
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node_id, rows = stack.pop()
            nd = self.nodes[node_id]
            if nd.is_leaf:
                out[rows] = node_id
                continue
            go_right = X[rows, nd.feature] < nd.threshold
            stack.append((nd.right, rows[go_right]))
            stack.append((nd.left, rows[~go_right]))
        return out

    def leaf_rows(self, X: np.ndarray) -> dict[int, np.ndarray]:
        """Map each terminal node id to the row indices it receives."""
        rows_by_leaf = {leaf: [] for leaf in self.leaves()}
        stack = [(self.root, np.arange(np.asarray(X).shape[0]))]
        X = np.asarray(X, dtype=float)
        while stack:
            node_id, rows = stack.pop()
            nd = self.nodes[node_id]
            if nd.is_leaf:
                rows_by_leaf[node_id] = rows
                continue
            go_right = X[rows, nd.feature] < nd.threshold
            stack.append((nd.right, rows[go_right]))
            stack.append((nd.left, rows[~go_right]))
        return rows_by_leaf

    def subtree_leaves(self, node_id: int) -> list[int]:
        out = []
        stack = [node_id]
        while stack:
            i = stack.pop()
            nd = self.nodes[i]
            if nd.is_leaf:
                out.append(i)
            else:
                stack.extend((nd.left, nd.right))
        return out

    def validate(self) -> None:
        """Assert the structural invariants; used by property tests."""
        seen = set()
        stack = [(self.root, None, 0)]
        while stack:
            node_id, parent, depth = stack.pop()
            assert node_id not in seen, "node reachable twice"
            seen.add(node_id)
            nd = self.nodes[node_id]
            assert nd.parent == parent, f"bad parent link at {node_id}"
            assert nd.depth == depth, f"bad depth at {node_id}"
            if nd.is_leaf:
                assert nd.left is None and nd.right is None and nd.threshold is None
            else:
                assert nd.left is not None and nd.right is not None
                stack.append((nd.left, node_id, depth + 1))
                stack.append((nd.right, node_id, depth + 1))
        assert seen == set(self.nodes), "orphan nodes in arena"
        n_leaves = sum(1 for i in seen if self.nodes[i].is_leaf)
        assert n_leaves == (len(seen) - n_leaves) + 1, "terminal count != internal + 1"

    def to_dict(self, leaf_payload: dict | None = None) -> dict:
        """Nested JSON-ready form; `leaf_payload` maps leaf id -> extra fields."""
        def build(node_id):
            nd = self.nodes[node_id]
            if nd.is_leaf:
                d = {"kind": "leaf"}
                if leaf_payload is not None and node_id in leaf_payload:
                    d.update(leaf_payload[node_id])
                return d
            return {
                "kind": "internal",
                "feature": int(nd.feature),
                "threshold": float(nd.threshold),
                "left": build(nd.left),
                "right": build(nd.right),
            }
        return build(self.root)

    @classmethod
    def from_dict(cls, d: dict) -> tuple["Tree", dict[int, dict]]:
        """Inverse of `to_dict`; returns the tree and per-leaf payload dicts."""
        tree = cls()
        payload: dict[int, dict] = {}

        def build(node_id, spec):
            if spec["kind"] == "leaf":
                payload[node_id] = {k: v for k, v in spec.items() if k != "kind"}
                return
            left, right = tree.grow(node_id, spec["feature"], spec["threshold"])
            build(left, spec["left"])
            build(right, spec["right"])

        build(tree.root, d)
        return tree, payload


@dataclass(frozen=True)
class Partition:
    """Row -> terminal assignment for one tree on one feature matrix."""

    assignment: np.ndarray                 # (n,) leaf ids
    rows_by_leaf: dict[int, np.ndarray]    # leaf id -> row indices

    @property
    def counts(self) -> dict[int, int]:
        return {leaf: rows.size for leaf, rows in self.rows_by_leaf.items()}

    def min_count(self) -> int:
        return min(rows.size for rows in self.rows_by_leaf.values())


def partition(tree: Tree, features: np.ndarray) -> Partition:
    """Route all rows through the tree's split rules."""
    rows_by_leaf = tree.leaf_rows(features)
    assignment = np.empty(np.asarray(features).shape[0], dtype=np.int64)
    for leaf, rows in rows_by_leaf.items():
        assignment[rows] = leaf
    return Partition(assignment, rows_by_leaf)


def log_tree_prior(tree: Tree, alpha: float, beta_depth: float) -> float:
    """Depth-regularizing log prior of the tree topology.

    A node at depth d is internal with probability alpha * (1+d)^-beta, so
    the log prior sums log(alpha*(1+d)^-beta) over internal nodes and
    log(1 - alpha*(1+d)^-beta) over terminal nodes.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if beta_depth < 0:
        raise ValueError(f"beta_depth must be >= 0, got {beta_depth}")
    total = 0.0
    for nd in tree.nodes.values():
        p_internal = alpha * (1.0 + nd.depth) ** (-beta_depth)
        total += math.log(1.0 - p_internal) if nd.is_leaf else math.log(p_internal)
    return total


def log_tree_prior_grow_delta(depth: int, alpha: float, beta_depth: float) -> float:
    """Log prior change from splitting a terminal node at the given depth.

    Growing replaces one terminal factor at depth d by an internal factor at
    d plus two terminal factors at d+1.
    """
    p_d = alpha * (1.0 + depth) ** (-beta_depth)
    p_d1 = alpha * (2.0 + depth) ** (-beta_depth)
    return math.log(p_d) + 2.0 * math.log(1.0 - p_d1) - math.log(1.0 - p_d)


@dataclass
class MoveProposal:
    """One structural proposal, valid or not.

    `log_transition_correction` carries the asymmetric-proposal density
    ratio for grow/prune; the default acceptance rule ignores it (the ratio
    is prior x marginal-likelihood only) but it is always computed so runs
    can opt in.
    """

    kind: str
    tree: Tree | None
    affected_leaves: set[int] = field(default_factory=set)
    log_transition_correction: float = 0.0
    valid: bool = True
    reason: str = ""

    @classmethod
    def invalid(cls, kind: str, reason: str) -> "MoveProposal":
        return cls(kind=kind, tree=None, valid=False, reason=reason)


def _masked_split_probs(split_probs: np.ndarray, splittable: np.ndarray) -> np.ndarray | None:
    """Redistribute the probability mass of unsplittable features."""
    probs = np.where(splittable, split_probs, 0.0)
    total = probs.sum()
    if total <= 0:
        return None
    return probs / total


def _draw_rule(split_dict, split_probs, splittable, rng) -> tuple[int, float, float] | None:
    probs = _masked_split_probs(split_probs, splittable)
    if probs is None:
        return None
    feature = int(rng.choice(len(probs), p=probs))
    values = split_dict.values[feature]
    threshold = float(values[rng.integers(values.size)])
    return feature, threshold, float(probs[feature])


def propose_move(tree: Tree, features: np.ndarray, split_dict, split_probs: np.ndarray,
                 rng: np.random.Generator, n_min: int = 5,
                 kind: str | None = None) -> MoveProposal:
    """Draw one of grow/prune/change/swap uniformly and apply it to a copy.

    A proposal that has no valid target (prune on a stump, swap with fewer
    than two internal nodes) or that leaves any terminal with fewer than
    `n_min` rows is returned marked invalid; the sampler counts it as an
    automatic rejection rather than redrawing. Passing `kind` skips the
    uniform move draw (useful for forcing a particular move).
    """
    if kind is None:
        kind = MOVE_KINDS[rng.integers(4)]
    elif kind not in MOVE_KINDS:
        raise ValueError(f"unknown move kind {kind!r}")
    splittable = split_dict.splittable()

    if kind == GROW:
        leaves = sorted(tree.leaves())
        leaf = leaves[rng.integers(len(leaves))]
        rule = _draw_rule(split_dict, split_probs, splittable, rng)
        if rule is None:
            return MoveProposal.invalid(kind, "no splittable feature")
        feature, threshold, prob = rule
        cand = tree.copy()
        left, right = cand.grow(leaf, feature, threshold)
        part = partition(cand, features)
        if min(part.rows_by_leaf[left].size, part.rows_by_leaf[right].size) < n_min:
            return MoveProposal.invalid(kind, "child below minimum node size")
        # reverse move is a prune of the new parent among the candidate's
        # prunable nodes; forward picked a leaf, a feature, and a threshold
        correction = (
            math.log(len(leaves)) - math.log(len(cand.prunable_nodes()))
            - math.log(prob) + math.log(split_dict.values[feature].size)
        )
        return MoveProposal(kind, cand, {left, right}, correction)

    if kind == PRUNE:
        prunable = sorted(tree.prunable_nodes())
        if not prunable:
            return MoveProposal.invalid(kind, "no prunable node")
        target = prunable[rng.integers(len(prunable))]
        removed = tree.nodes[target]
        cand = tree.copy()
        cand.prune(target)
        probs = _masked_split_probs(split_probs, splittable)
        feature = removed.feature
        if probs is None or probs[feature] <= 0:
            # removed rule's feature can no longer be proposed; the reverse
            # grow has probability zero, leave the correction at zero
            correction = 0.0
        else:
            correction = (
                math.log(len(prunable)) - math.log(cand.n_leaves())
                + math.log(probs[feature]) - math.log(split_dict.values[feature].size)
            )
        return MoveProposal(kind, cand, {target}, correction)

    if kind == CHANGE:
        targets = sorted(tree.prunable_nodes())
        if not targets:
            return MoveProposal.invalid(kind, "no internal node with two terminal children")
        target = targets[rng.integers(len(targets))]
        rule = _draw_rule(split_dict, split_probs, splittable, rng)
        if rule is None:
            return MoveProposal.invalid(kind, "no splittable feature")
        feature, threshold, _ = rule
        cand = tree.copy()
        cand.set_rule(target, feature, threshold)
        part = partition(cand, features)
        if part.min_count() < n_min:
            return MoveProposal.invalid(kind, "terminal below minimum node size")
        nd = cand.nodes[target]
        return MoveProposal(kind, cand, {nd.left, nd.right})

    # swap: exchange the rules of two distinct internal nodes
    internal = sorted(tree.internal_nodes())
    if len(internal) < 2:
        return MoveProposal.invalid(kind, "fewer than two internal nodes")
    pick = rng.choice(len(internal), size=2, replace=False)
    a, b = internal[int(pick[0])], internal[int(pick[1])]
    cand = tree.copy()
    na, nb = cand.nodes[a], cand.nodes[b]
    na.feature, nb.feature = nb.feature, na.feature
    na.threshold, nb.threshold = nb.threshold, na.threshold
    part = partition(cand, features)
    if part.min_count() < n_min:
        return MoveProposal.invalid(SWAP, "terminal below minimum node size")
    affected = set(cand.subtree_leaves(a)) | set(cand.subtree_leaves(b))
    return MoveProposal(SWAP, cand, affected)


def split_covariates(tree: Tree) -> set[int]:
    """Features appearing in any internal node; empty for a stump."""
    return {nd.feature for nd in tree.nodes.values() if not nd.is_leaf}


def ancestor_covariates(tree: Tree, leaf: int) -> set[int]:
    """Features on the root-to-leaf path only."""
    if leaf not in tree.nodes or not tree.nodes[leaf].is_leaf:
        raise KeyError(f"unknown terminal node {leaf}")
    out: set[int] = set()
    node_id = tree.nodes[leaf].parent
    while node_id is not None:
        nd = tree.nodes[node_id]
        out.add(nd.feature)
        node_id = nd.parent
    return out

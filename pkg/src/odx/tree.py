"""Finite event trees and the process algebra living on them.

A tree node carries a time index, a parent, and the transition probability
from its parent.  Node ids are assigned breadth-first, so the children of
any node occupy a contiguous id range; several hot loops exploit that via
``np.add.reduceat`` style segment sums.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_TOL = 1e-12


class ModelError(ValueError):
    """Invalid tree specification, process panel, or input file."""


class ArbitrageError(RuntimeError):
    """The market admits a riskless gain; carries the offending node."""

    def __init__(self, message, node=None, witness=None):
        super().__init__(message)
        self.node = node
        self.witness = witness


@dataclass(frozen=True)
class EventTree:
    """Finite filtered probability space with breadth-first node ids.

    Attributes
    ----------
    horizon : int
        Number of periods; all leaves sit at this time index.
    time : (n,) int array, node -> time index.
    parent : (n,) int array, node -> parent id (-1 at the root).
    p : (n,) float array, transition probability from the parent (1 at root).
    first_child, n_children : (n,) int arrays; n_children == 0 at leaves.
    path_prob : (n,) float array, probability of the path down to the node.
    """

    horizon: int
    time: np.ndarray
    parent: np.ndarray
    p: np.ndarray
    first_child: np.ndarray
    n_children: np.ndarray
    path_prob: np.ndarray

    @property
    def n_nodes(self):
        return self.time.shape[0]

    @property
    def root(self):
        return 0

    def is_leaf(self, node):
        return self.n_children[node] == 0

    def children(self, node):
        lo = self.first_child[node]
        return np.arange(lo, lo + self.n_children[node])

    @property
    def nonleaf_nodes(self):
        return np.flatnonzero(self.n_children > 0)

    @property
    def leaves(self):
        return np.flatnonzero(self.n_children == 0)

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, EventTree):
            return NotImplemented
        return (
            self.horizon == other.horizon
            and np.array_equal(self.time, other.time)
            and np.array_equal(self.parent, other.parent)
            and np.array_equal(self.p, other.p)
        )


def _finalize_tree(time, parent, p):
    time = np.asarray(time, dtype=np.int64)
    parent = np.asarray(parent, dtype=np.int64)
    p = np.asarray(p, dtype=np.float64)
    n = time.shape[0]
    if n == 0:
        raise ModelError("empty tree")
    if time[0] != 0 or parent[0] != -1:
        raise ModelError("node 0 must be the root at time 0")
    if np.count_nonzero(parent == -1) != 1:
        raise ModelError("exactly one root required")

    n_children = np.zeros(n, dtype=np.int64)
    first_child = np.full(n, -1, dtype=np.int64)
    for i in range(1, n):
        par = parent[i]
        if par < 0 or par >= i:
            raise ModelError(f"node {i}: parent must precede it (breadth-first ids)")
        if time[i] != time[par] + 1:
            raise ModelError(f"node {i}: child time must be parent time + 1")
        if not (p[i] > 0.0):
            raise ModelError(f"node {i}: zero or negative branch probability "
                             "violates measure equivalence")
        if n_children[par] == 0:
            first_child[par] = i
        elif first_child[par] + n_children[par] != i:
            raise ModelError("children of a node must be contiguous in id")
        n_children[par] += 1

    horizon = int(time.max())
    leaf = n_children == 0
    if np.any(time[leaf] != horizon):
        raise ModelError("all leaves must sit at the horizon")
    for i in np.flatnonzero(~leaf):
        lo = first_child[i]
        s = p[lo:lo + n_children[i]].sum()
        if abs(s - 1.0) > PROB_TOL:
            raise ModelError(f"node {i}: probabilities must sum to 1 (got {s!r})")

    path_prob = np.ones(n)
    for i in range(1, n):
        path_prob[i] = path_prob[parent[i]] * p[i]
    return EventTree(horizon=horizon, time=time, parent=parent, p=p,
                     first_child=first_child, n_children=n_children,
                     path_prob=path_prob)


def build_tree(spec):
    """Build an :class:`EventTree` from a branching description.

    Two forms are accepted:

    * a list of probability rows, one per period, applied homogeneously:
      ``[[0.6, 0.4]]`` is a one-period binary tree;
    * a nested dict ``{"probs": [...], "children": [sub, ...]}`` where
      ``children`` (optional, same length as ``probs``) carries the
      sub-specs of the child nodes.

    Nodes are numbered breadth-first, which makes all downstream output
    deterministic.
    """
    if isinstance(spec, dict):
        nested = spec
    else:
        rows = [np.asarray(r, dtype=np.float64) for r in spec]
        if not rows:
            raise ModelError("branching description is empty")

        def level(t):
            if t >= len(rows):
                return None
            row = rows[t]
            sub = level(t + 1)
            return {"probs": row,
                    "children": None if sub is None else [sub] * len(row)}

        nested = level(0)

    time = [0]
    parent = [-1]
    p = [1.0]
    queue = [(0, nested)]
    while queue:
        next_queue = []
        for node, sub in queue:
            if sub is None:
                continue
            probs = np.asarray(sub["probs"], dtype=np.float64)
            if probs.ndim != 1 or probs.size == 0:
                raise ModelError("probability row must be a non-empty vector")
            if np.any(probs <= 0.0):
                raise ModelError("zero probability branch violates equivalence")
            if abs(probs.sum() - 1.0) > PROB_TOL:
                raise ModelError("probabilities must sum to 1")
            kids = sub.get("children")
            if kids is not None and len(kids) != probs.size:
                raise ModelError("children list must match probability row")
            for j, pr in enumerate(probs):
                cid = len(time)
                time.append(time[node] + 1)
                parent.append(node)
                p.append(float(pr))
                next_queue.append((cid, None if kids is None else kids[j]))
        queue = next_queue
    return _finalize_tree(time, parent, p)


# ---------------------------------------------------------------------------
# Node-indexed process panels
# ---------------------------------------------------------------------------

def _panel(tree, values, name):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2 or values.shape[0] != tree.n_nodes:
        raise ModelError(f"{name}: need one fixed-dimension vector per node")
    return values


@dataclass(frozen=True)
class AdaptedProcess:
    """Node-indexed real-vector panel: one value per node."""

    tree: EventTree
    values: np.ndarray  # (n_nodes, dim)

    def __post_init__(self):
        object.__setattr__(self, "values", _panel(self.tree, self.values,
                                                  "AdaptedProcess"))

    @property
    def dim(self):
        return self.values.shape[1]

    def at(self, node):
        return self.values[node]

    def increments(self):
        """(n_nodes, dim) array of value minus parent value; zero at the root."""
        out = self.values - self.values[np.maximum(self.tree.parent, 0)]
        out[0] = 0.0
        return out

    def component(self, i):
        return AdaptedProcess(self.tree, self.values[:, i].copy())


@dataclass(frozen=True)
class PredictableProcess:
    """Parent-node-indexed panel: the value in force on the step from a
    non-leaf node to its children.  Rows at leaves are ignored (zero)."""

    tree: EventTree
    values: np.ndarray  # (n_nodes, dim)

    def __post_init__(self):
        vals = _panel(self.tree, self.values, "PredictableProcess")
        vals = vals.copy()
        vals[self.tree.leaves] = 0.0
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return self.values.shape[1]

    def at(self, node):
        return self.values[node]


# ---------------------------------------------------------------------------
# Conditional moments, Doob decomposition, quadratic covariation
# ---------------------------------------------------------------------------

def child_increments(X, node):
    """Increments of X from ``node`` to each of its children, (k, dim)."""
    tree = X.tree
    if tree.is_leaf(node):
        raise ModelError(f"node {node} is a leaf")
    kids = tree.children(node)
    return X.values[kids] - X.values[node]


def conditional_moment(X, node, order):
    """Exact conditional moment of the one-step increment of X at a node.

    order 1 returns sum_children p * dX (a vector); order 2 returns
    sum_children p * dX dX^T (a matrix).
    """
    tree = X.tree
    dX = child_increments(X, node)
    w = tree.p[tree.children(node)]
    if order == 1:
        return w @ dX
    if order == 2:
        return (w[:, None] * dX).T @ dX
    raise ModelError("order must be 1 or 2")


def child_weighted_sums(tree, node_values):
    """For each non-leaf node, sum of p * value over its children.

    ``node_values`` is (n_nodes, m); returns (n_nonleaf, m) aligned with
    ``tree.nonleaf_nodes``.  Children are contiguous, so this is a single
    reduceat sweep.
    """
    vals = np.asarray(node_values, dtype=np.float64)
    squeeze = vals.ndim == 1
    if squeeze:
        vals = vals[:, None]
    weighted = tree.p[:, None] * vals
    nonleaf = tree.nonleaf_nodes
    starts = tree.first_child[nonleaf]
    out = np.add.reduceat(weighted, starts, axis=0)
    # reduceat merges nothing here because every child block is non-empty
    # and blocks are contiguous, but the last segment runs to the end only
    # if starts are strictly increasing, which BFS ordering guarantees.
    return out[:, 0] if squeeze else out


def doob_decompose(X):
    """Doob decomposition X = A + M with A predictable-increment and A(0)=0.

    dA on the step out of a node equals the exact conditional mean of dX,
    held constant across the node's siblings; M := X - A then has zero
    conditional one-step mean at every non-leaf node.
    """
    tree = X.tree
    dX = X.increments()
    drift = np.zeros_like(X.values)
    means = child_weighted_sums(tree, dX)
    nonleaf = tree.nonleaf_nodes
    # step drift at each non-root node = conditional mean at its parent
    step = np.zeros_like(X.values)
    for idx, node in enumerate(nonleaf):
        kids = tree.children(node)
        step[kids] = means[idx]
    for i in range(1, tree.n_nodes):
        drift[i] = drift[tree.parent[i]] + step[i]
    A = AdaptedProcess(tree, drift)
    M = AdaptedProcess(tree, X.values - drift)
    return A, M


def step_drift(X):
    """Per-step conditional mean of dX as a PredictableProcess (dG = 1)."""
    tree = X.tree
    means = child_weighted_sums(tree, X.increments())
    vals = np.zeros_like(X.values)
    vals[tree.nonleaf_nodes] = means
    return PredictableProcess(tree, vals)


def quadratic_covariation(M, N):
    """Pathwise quadratic covariation [M, N].

    Returns an AdaptedProcess of dimension dim(M) * dim(N) holding the
    row-major flattened matrix sum over the path of dM dN^T.
    """
    if M.tree != N.tree:
        raise ModelError("mismatched trees")
    tree = M.tree
    dM = M.increments()
    dN = N.increments()
    step = dM[:, :, None] * dN[:, None, :]
    out = np.zeros((tree.n_nodes, M.dim * N.dim))
    flat = step.reshape(tree.n_nodes, -1)
    for i in range(1, tree.n_nodes):
        out[i] = out[tree.parent[i]] + flat[i]
    return AdaptedProcess(tree, out)


def path_cumsum(tree, node_terms):
    """Running sum along each path of per-node terms ((n,) or (n, m))."""
    terms = np.asarray(node_terms, dtype=np.float64)
    out = np.zeros_like(terms)
    out[0] = terms[0]
    for i in range(1, tree.n_nodes):
        out[i] = out[tree.parent[i]] + terms[i]
    return out


def path_cumprod(tree, node_factors):
    """Running product along each path of per-node factors ((n,) or (n, m))."""
    factors = np.asarray(node_factors, dtype=np.float64)
    out = np.ones_like(factors)
    out[0] = factors[0]
    for i in range(1, tree.n_nodes):
        out[i] = out[tree.parent[i]] * factors[i]
    return out

"""Decision trees whose internal nodes split with horospheres.

Fitting recursively applies the split search; prediction routes a point
through the Busemann decision rule (strictly inside goes to the inside
child, boundary ties go outside) down to a leaf's class distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .geometry import _coords, _coords_matrix
from .splitter import Horosphere, SplitterConfig, best_split


@dataclass(frozen=True)
class LeafNode:
    """Terminal node: training class histogram and its normalization."""

    histogram: np.ndarray
    probs: np.ndarray


@dataclass(frozen=True)
class InternalNode:
    split: Horosphere
    inside: "TreeNode"
    outside: "TreeNode"
    info_gain: Optional[float] = None


TreeNode = Union[LeafNode, InternalNode]


@dataclass(frozen=True)
class TreeParams:
    """Stopping rules and per-node slack schedule for one tree.

    Splitting stops at purity, at ``min_samples`` or fewer samples, or at
    ``max_depth``. Each internal node draws C = 2**e with e uniform over
    ``c_exponent_range`` (inclusive) from the node's own random stream.
    """

    min_samples: int = 1
    max_depth: Optional[int] = None
    splitter: SplitterConfig = field(default_factory=SplitterConfig)
    c_exponent_range: tuple = (-3, 5)
    seed: int = 0

    def __post_init__(self):
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 when set")
        lo, hi = self.c_exponent_range
        if lo > hi:
            raise ValueError("c_exponent_range must be a nonempty interval")


def _make_leaf(counts: np.ndarray) -> LeafNode:
    return LeafNode(histogram=counts, probs=counts / counts.sum())


def _fit_node(X, y, depth, params: TreeParams, n_classes, rng) -> TreeNode:
    counts = np.bincount(y, minlength=n_classes)
    pure = np.count_nonzero(counts) <= 1
    depth_capped = params.max_depth is not None and depth >= params.max_depth
    if pure or y.size <= params.min_samples or depth_capped:
        return _make_leaf(counts)

    lo, hi = params.c_exponent_range
    c_node = 2.0 ** int(rng.integers(lo, hi + 1))
    candidate = best_split(X, y, replace(params.splitter, C=c_node), rng)
    if candidate is None:
        return _make_leaf(counts)

    mask = candidate.horosphere.inside(X)
    rng_in, rng_out = rng.spawn(2)
    return InternalNode(
        split=candidate.horosphere,
        inside=_fit_node(X[mask], y[mask], depth + 1, params, n_classes, rng_in),
        outside=_fit_node(X[~mask], y[~mask], depth + 1, params, n_classes, rng_out),
        info_gain=candidate.info_gain,
    )


def fit_tree(points, labels, params: TreeParams, n_classes: Optional[int] = None, rng=None) -> TreeNode:
    """Grow a tree on the given samples.

    ``rng`` overrides the stream derived from ``params.seed`` (the forest
    layer passes per-tree streams); ``n_classes`` fixes the histogram width
    when the sample may not contain every class.
    """
    X = _coords_matrix(points)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    if y.shape[0] != X.shape[0]:
        raise ValueError("points and labels must have equal length")
    if np.any(y < 0):
        raise ValueError("labels must be nonnegative integers")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    if rng is None:
        rng = np.random.default_rng(params.seed)
    return _fit_node(X, y, 0, params, n_classes, rng)


def predict_tree(node: TreeNode, x) -> np.ndarray:
    """Class distribution of the leaf that ``x`` routes to."""
    x = _coords(x)
    while isinstance(node, InternalNode):
        if x.shape[-1] != node.split.ideal.shape[-1]:
            raise ValueError(
                f"dimension mismatch: {x.shape[-1]} vs {node.split.ideal.shape[-1]}"
            )
        node = node.inside if node.split.inside(x) else node.outside
    return node.probs


def tree_probs_matrix(node: TreeNode, X: np.ndarray) -> np.ndarray:
    """Leaf distributions for every row of ``X`` (vectorized routing)."""
    X = _coords_matrix(X)
    first = node
    while isinstance(first, InternalNode):
        first = first.inside
    out = np.empty((X.shape[0], first.probs.shape[0]))

    def route(sub: TreeNode, idx: np.ndarray):
        if isinstance(sub, LeafNode):
            out[idx] = sub.probs
            return
        mask = sub.split.inside(X[idx])
        route(sub.inside, idx[mask])
        route(sub.outside, idx[~mask])

    route(node, np.arange(X.shape[0]))
    return out


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, LeafNode):
        return 0
    return 1 + max(tree_depth(node.inside), tree_depth(node.outside))


def tree_leaf_count(node: TreeNode) -> int:
    if isinstance(node, LeafNode):
        return 1
    return tree_leaf_count(node.inside) + tree_leaf_count(node.outside)


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, LeafNode):
        return {"type": "leaf", "histogram": [int(c) for c in node.histogram]}
    return {
        "type": "internal",
        "w": [float(v) for v in node.split.ideal],
        "b": float(node.split.offset),
        "inside": _node_to_dict(node.inside),
        "outside": _node_to_dict(node.outside),
    }


def _node_from_dict(obj: dict) -> TreeNode:
    if obj["type"] == "leaf":
        return _make_leaf(np.asarray(obj["histogram"], dtype=np.int64))
    return InternalNode(
        split=Horosphere(np.asarray(obj["w"], dtype=np.float64), float(obj["b"])),
        inside=_node_from_dict(obj["inside"]),
        outside=_node_from_dict(obj["outside"]),
    )


def tree_to_dict(node: TreeNode, dim: int) -> dict:
    """Self-describing JSON form: {dim, nodes: nested node objects}."""
    return {"dim": int(dim), "nodes": _node_to_dict(node)}


def tree_from_dict(obj: dict) -> TreeNode:
    return _node_from_dict(obj["nodes"])

"""Bootstrap ensembles of horosphere trees.

Every tree trains on an independent with-replacement resample drawn from
its own counter-derived random stream, so results are identical for a
fixed seed no matter how many workers run the training. Classification is
a majority vote over per-tree leaf argmaxes; averaged leaf distributions
back threshold metrics.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .geometry import _coords, _coords_matrix
from .splitter import SplitterConfig
from .tree import (
    TreeNode,
    TreeParams,
    fit_tree,
    predict_tree,
    tree_from_dict,
    tree_probs_matrix,
    tree_to_dict,
)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    tree_params: TreeParams = field(default_factory=TreeParams)
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")


@dataclass(frozen=True)
class ForestModel:
    trees: list
    dim: int
    class_names: list
    params: ForestParams

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def _fit_one_tree(X, y, params: ForestParams, n_classes: int, seq) -> TreeNode:
    boot_seq, tree_seq = seq.spawn(2)
    if params.bootstrap:
        idx = np.random.default_rng(boot_seq).integers(0, X.shape[0], size=X.shape[0])
        X, y = X[idx], y[idx]
    return fit_tree(X, y, params.tree_params, n_classes=n_classes, rng=np.random.default_rng(tree_seq))


def fit_forest(points, labels, params: ForestParams, class_names=None, n_workers: int = 1) -> ForestModel:
    """Train an ensemble.

    Tree i draws its bootstrap sample and all node-level randomness from a
    stream spawned as child i of the forest seed, making the model a pure
    function of (data, params) regardless of worker count or training order.
    """
    X = _coords_matrix(points)
    y = np.asarray(labels, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    if class_names is None:
        class_names = [str(k) for k in range(int(y.max()) + 1)]
    n_classes = len(class_names)
    if np.any(y >= n_classes) or np.any(y < 0):
        raise ValueError("labels must index into class_names")

    seqs = np.random.SeedSequence(params.seed).spawn(params.n_trees)
    if n_workers == 1:
        trees = [_fit_one_tree(X, y, params, n_classes, seq) for seq in seqs]
    else:
        trees = Parallel(n_jobs=n_workers)(
            delayed(_fit_one_tree)(X, y, params, n_classes, seq) for seq in seqs
        )
    return ForestModel(trees=trees, dim=X.shape[1], class_names=list(class_names), params=params)


def predict_proba_forest(model: ForestModel, x) -> np.ndarray:
    """Mean of the per-tree leaf distributions for a single point."""
    probs = np.zeros(model.n_classes)
    for tree in model.trees:
        probs += predict_tree(tree, x)
    return probs / len(model.trees)


def predict_forest(model: ForestModel, x) -> int:
    """Majority vote over per-tree leaf argmaxes; ties go to the lowest id."""
    x = _coords(x)
    votes = np.zeros(model.n_classes, dtype=np.int64)
    for tree in model.trees:
        votes[int(np.argmax(predict_tree(tree, x)))] += 1
    return int(np.argmax(votes))


def predict_proba_matrix(model: ForestModel, X) -> np.ndarray:
    """Averaged leaf distributions for every row of ``X``."""
    X = _coords_matrix(X)
    total = np.zeros((X.shape[0], model.n_classes))
    for tree in model.trees:
        total += tree_probs_matrix(tree, X)
    return total / len(model.trees)


def predict_matrix(model: ForestModel, X) -> np.ndarray:
    """Majority-vote class ids for every row of ``X``."""
    X = _coords_matrix(X)
    votes = np.zeros((X.shape[0], model.n_classes), dtype=np.int64)
    for tree in model.trees:
        leaf_probs = tree_probs_matrix(tree, X)
        votes[np.arange(X.shape[0]), np.argmax(leaf_probs, axis=1)] += 1
    return np.argmax(votes, axis=1)


def _params_to_dict(params: ForestParams) -> dict:
    out = asdict(params)
    out["tree_params"]["c_exponent_range"] = list(params.tree_params.c_exponent_range)
    return out


def _params_from_dict(obj: dict) -> ForestParams:
    tp = dict(obj["tree_params"])
    tp["splitter"] = SplitterConfig(**tp["splitter"])
    tp["c_exponent_range"] = tuple(tp["c_exponent_range"])
    return ForestParams(
        n_trees=obj["n_trees"],
        tree_params=TreeParams(**tp),
        bootstrap=obj["bootstrap"],
        seed=obj["seed"],
    )


def model_to_dict(model: ForestModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "class_names": list(model.class_names),
        "dim": model.dim,
        "params": _params_to_dict(model.params),
        "trees": [tree_to_dict(tree, model.dim) for tree in model.trees],
    }


def model_from_dict(obj: dict) -> ForestModel:
    if obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format: {obj.get('format_version')!r}")
    return ForestModel(
        trees=[tree_from_dict(t) for t in obj["trees"]],
        dim=int(obj["dim"]),
        class_names=list(obj["class_names"]),
        params=_params_from_dict(obj["params"]),
    )


def save_model(model: ForestModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_model(path) -> ForestModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))

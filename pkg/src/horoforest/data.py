"""Dataset ingestion, synthetic benchmark generation, and CV splitting.

The on-disk dataset format is a CSV with header ``dim_0,...,dim_{n-1},label``;
coordinates are clamped into the ball on load and label strings are mapped
to ids in first-appearance order. The synthetic generator embeds a uniform
tree in the Poincare disk with radial level placement and labels points by
the deepest class subtree containing their node.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import clip_to_ball

_RADIUS_STEP = 1.2  # hyperbolic radius added per tree level


@dataclass
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    class_names: list
    name: str = ""

    def __post_init__(self):
        self.points = clip_to_ball(np.atleast_2d(np.asarray(self.points, dtype=np.float64)))
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.points.shape[0] != self.labels.shape[0]:
            raise ValueError("points and labels must have equal length")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("labels must index into class_names")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def load_csv(path) -> Dataset:
    """Read a dataset file, mapping label strings to first-appearance ids.

    Raises ValueError with the offending line number for short rows,
    non-numeric or non-finite coordinates, and empty files.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        n_dims = len(header) - 1
        expected = [f"dim_{j}" for j in range(n_dims)] + ["label"]
        if n_dims < 1 or header != expected:
            raise ValueError(
                f"{path}: header must be dim_0,...,dim_{{n-1}},label, got {','.join(header)}"
            )

        rows, labels = [], []
        label_ids: dict[str, int] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_dims + 1:
                raise ValueError(f"{path}: line {lineno}: expected {n_dims + 1} fields, got {len(row)}")
            try:
                coords = [float(v) for v in row[:-1]]
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric coordinate") from None
            if not all(math.isfinite(c) for c in coords):
                raise ValueError(f"{path}: line {lineno}: non-finite coordinate")
            rows.append(coords)
            label = row[-1]
            labels.append(label_ids.setdefault(label, len(label_ids)))
        if not rows:
            raise ValueError(f"{path}: no data rows")

    name = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    return Dataset(
        points=np.asarray(rows),
        labels=np.asarray(labels),
        class_names=list(label_ids),
        name=name,
    )


def save_csv(dataset: Dataset, path) -> None:
    """Write the load_csv format; float fields use shortest round-trip repr."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"dim_{j}" for j in range(dataset.dim)] + ["label"])
        for coords, label in zip(dataset.points, dataset.labels):
            writer.writerow([repr(float(c)) for c in coords] + [dataset.class_names[label]])


@dataclass(frozen=True)
class SyntheticTreeSpec:
    """Recipe for a labeled tree embedded in the Poincare disk.

    ``class_subtrees`` holds node-id sets (disjoint or nested); nodes in no
    set belong to the background class 0, all others to the deepest
    (smallest) subtree containing them.
    """

    branching: int = 3
    depth: int = 3
    n_points: int = 500
    class_subtrees: tuple = field(default_factory=tuple)
    noise_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "class_subtrees", tuple(frozenset(int(i) for i in s) for s in self.class_subtrees)
        )
        if self.branching < 1 or self.depth < 1 or self.n_points < 1:
            raise ValueError("branching, depth and n_points must be >= 1")
        if self.noise_scale <= 0.0:
            raise ValueError("noise_scale must be positive")


def tree_node_count(branching: int, depth: int) -> int:
    return sum(branching**level for level in range(depth + 1))


def subtree_nodes(branching: int, depth: int, root_id: int) -> frozenset:
    """Node ids of the subtree rooted at ``root_id`` (BFS numbering)."""
    total = tree_node_count(branching, depth)
    if not 0 <= root_id < total:
        raise ValueError(f"node id {root_id} outside tree of {total} nodes")
    nodes, frontier = {root_id}, [root_id]
    while frontier:
        nxt = []
        for nid in frontier:
            first_child = nid * branching + 1
            for child in range(first_child, first_child + branching):
                if child < total:
                    nxt.append(child)
        nodes.update(nxt)
        frontier = nxt
    return frozenset(nodes)


def _mobius_add(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    num = (1.0 + 2.0 * xy + y2) * x + (1.0 - x2) * y
    return num / (1.0 + 2.0 * xy + x2 * y2)


def _exp_map(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Move from ball point(s) ``p`` along tangent vector(s) ``v``."""
    vn = np.linalg.norm(v, axis=-1, keepdims=True)
    lam = 2.0 / (1.0 - np.sum(p * p, axis=-1, keepdims=True))
    direction = np.zeros_like(v)
    np.divide(v, vn, out=direction, where=vn > 0)
    return _mobius_add(p, np.tanh(lam * vn / 2.0) * direction)


def _node_positions(branching: int, depth: int) -> np.ndarray:
    """2-D embedding: root at the origin, level L at hyperbolic radius
    L * _RADIUS_STEP, siblings fanned over their parent's angular sector."""
    total = tree_node_count(branching, depth)
    centers = np.zeros((total, 2))
    offset = 1
    for level in range(1, depth + 1):
        width = branching**level
        radius = math.tanh(level * _RADIUS_STEP / 2.0)
        for j in range(width):
            angle = 2.0 * math.pi * (j + 0.5) / width
            centers[offset + j] = radius * np.array([math.cos(angle), math.sin(angle)])
        offset += width
    return centers


def generate_synthetic_tree(spec: SyntheticTreeSpec) -> Dataset:
    """Sample a labeled point cloud around an embedded tree.

    Points are scattered around node positions with tangent-space Gaussian
    noise of scale ``noise_scale``; the draw is deterministic per seed.
    """
    total = tree_node_count(spec.branching, spec.depth)
    for s in spec.class_subtrees:
        bad = [i for i in s if not 0 <= i < total]
        if bad:
            raise ValueError(f"class subtree references nonexistent node {bad[0]}")
    for i, a in enumerate(spec.class_subtrees):
        for b in spec.class_subtrees[i + 1:]:
            if a & b and not (a <= b or b <= a):
                raise ValueError("class subtrees must be disjoint or nested")

    node_class = np.zeros(total, dtype=np.int64)
    for nid in range(total):
        containing = [(len(s), k) for k, s in enumerate(spec.class_subtrees) if nid in s]
        if containing:
            node_class[nid] = 1 + min(containing)[1]

    centers = _node_positions(spec.branching, spec.depth)
    rng = np.random.default_rng(spec.seed)
    node_ids = rng.integers(0, total, size=spec.n_points)
    noise = rng.standard_normal((spec.n_points, 2)) * spec.noise_scale
    points = _exp_map(centers[node_ids], noise)
    labels = node_class[node_ids]

    for k in range(len(spec.class_subtrees)):
        if not np.any(labels == k + 1):
            raise ValueError(f"class subtree {k} received no points; increase n_points")

    class_names = ["background"] + [f"class_{k + 1}" for k in range(len(spec.class_subtrees))]
    return Dataset(points=points, labels=labels, class_names=class_names, name="synthetic_tree")


@dataclass(frozen=True)
class CvPlan:
    n_folds: int
    fold_assignments: np.ndarray
    seed: int

    def fold_indices(self, fold: int):
        test = np.nonzero(self.fold_assignments == fold)[0]
        train = np.nonzero(self.fold_assignments != fold)[0]
        return train, test


def stratified_kfold(labels, n_folds: int, seed: int) -> CvPlan:
    """Per-class round-robin fold assignment after a seeded shuffle.

    Each fold's count of any class differs from perfect stratification by
    at most one. Classes with fewer members than folds trigger a warning
    since some folds will then lack them.
    """
    if n_folds < 2:
        raise ValueError("n_folds must be >= 2")
    labels = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    assignments = np.empty(labels.size, dtype=np.int64)
    for k in np.unique(labels):
        idx = np.nonzero(labels == k)[0]
        if idx.size < n_folds:
            warnings.warn(
                f"class {k} has {idx.size} < {n_folds} members; some folds will lack it",
                stacklevel=2,
            )
        rng.shuffle(idx)
        assignments[idx] = np.arange(idx.size) % n_folds
    return CvPlan(n_folds=n_folds, fold_assignments=assignments, seed=seed)

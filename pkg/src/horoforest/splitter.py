"""Horosphere split search for tree nodes.

Candidate binary problems (one-vs-rest plus hyperclass merges) are fitted
with a class-balanced large-margin objective over Busemann coordinates; the
resulting horospheres are scored by Gini information gain and the best one
wins. Enumeration variants over axis-aligned or random ideal points provide
ablation baselines and a fallback when the optimizer fails to converge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import (
    ClassMean,
    _coords_matrix,
    busemann,
    einstein_midpoint,
    lca_similarity,
    merge_class_means,
    unit_vector,
)

MU_MIN = 1e-8
# Splits whose gain does not exceed this are treated as "no split".
GAIN_MIN = 1e-9
# Consecutive sub-tolerance iterations required to declare convergence.
_PATIENCE = 5
_ETA_MIN = 1e-14
_ETA_MAX = 1e3


class ConvergenceFailure(Exception):
    """All optimizer restarts ended without meeting the tolerance."""


@dataclass(frozen=True)
class Horosphere:
    """Split boundary: ideal point plus Busemann offset.

    A point x is inside iff busemann(ideal, x) < offset; boundary points
    count as outside.
    """

    ideal: np.ndarray
    offset: float

    def __post_init__(self):
        ideal = np.atleast_1d(np.asarray(self.ideal, dtype=np.float64))
        norm = np.linalg.norm(ideal)
        if not np.isfinite(norm) or norm == 0.0:
            raise ValueError("ideal point must be a nonzero finite vector")
        # Leave already-unit vectors untouched so serialization round-trips
        # reproduce the exact stored bits.
        if abs(norm - 1.0) > 1e-12:
            ideal = ideal / norm
        object.__setattr__(self, "ideal", ideal)
        if not np.isfinite(self.offset):
            raise ValueError("offset must be finite")
        object.__setattr__(self, "offset", float(self.offset))

    def inside(self, points) -> np.ndarray:
        """Boolean mask of points strictly inside the horoball."""
        return busemann(self.ideal, points) < self.offset


@dataclass(frozen=True)
class SplitterSolution:
    """Scale, ideal point, and threshold found by the margin optimizer."""

    mu: float
    ideal: np.ndarray
    o: float

    def __post_init__(self):
        if self.mu < MU_MIN:
            raise ValueError(f"mu must be >= {MU_MIN}")
        object.__setattr__(self, "ideal", np.atleast_1d(np.asarray(self.ideal, dtype=np.float64)))


@dataclass(frozen=True)
class BinaryProblem:
    """One candidate two-class reformulation of a node.

    ``signs`` holds -1/+1 per sample; ``weights`` the class-balanced factor
    (1-beta)/(1-beta^n_y) with n_y the sample count of its binary class, or
    all ones when beta is 0.
    """

    positive_classes: frozenset
    signs: np.ndarray
    weights: np.ndarray
    source: tuple


@dataclass(frozen=True)
class SplitterConfig:
    """Knobs for the split search.

    ``C`` is the slack weight, supplied per node by the tree layer. ``mode``
    selects the search strategy: "optimizer" (default), "axis_aligned_enum",
    or "random_ideal_fallback".
    """

    C: float = 1.0
    beta: float = 0.0
    use_hyperclasses: bool = True
    use_class_balance: bool = True
    mode: str = "optimizer"
    max_iters: int = 1000
    tol: float = 1e-6
    restarts: int = 3
    n_fallback_ideals: int = 10

    def __post_init__(self):
        if self.C <= 0.0:
            raise ValueError("C must be positive")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if self.mode not in ("optimizer", "axis_aligned_enum", "random_ideal_fallback"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.max_iters < 1 or self.restarts < 1 or self.n_fallback_ideals < 1:
            raise ValueError("max_iters, restarts and n_fallback_ideals must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tol must be positive")


@dataclass(frozen=True)
class SplitCandidate:
    horosphere: Horosphere
    info_gain: float
    source: tuple


def gini(class_counts) -> float:
    """Gini impurity 1 - sum((c_k / N)^2); zero iff the node is pure."""
    counts = np.asarray(class_counts)
    if counts.size == 0 or np.any(counts < 0):
        raise ValueError("counts must be a nonempty nonnegative vector")
    total = counts.sum()
    if total == 0:
        raise ValueError("at least one count must be positive")
    p = counts / total
    return float(1.0 - np.sum(p * p))


def _gains_from_counts(inside_counts: np.ndarray, parent_counts: np.ndarray) -> np.ndarray:
    """Information gain for each row of inside-counts, as exact rationals.

    The gain H(S) - (N_in/N) H(in) - (N_out/N) H(out) with Gini impurity
    reduces to a single ratio of integers,

        (N*N_out*sum(c_in^2) + N*N_in*sum(c_out^2) - N_in*N_out*sum(c^2))
        / (N^2 * N_in * N_out),

    so one float division yields the correctly rounded value and brute-force
    recomputations match bit for bit. Rows with an empty side get gain 0.
    """
    inside = np.asarray(inside_counts, dtype=np.int64)
    parent = np.asarray(parent_counts, dtype=np.int64)
    n = int(parent.sum())
    n_in = inside.sum(axis=1)
    n_out = n - n_in
    outside = parent[None, :] - inside
    s_in = np.sum(inside * inside, axis=1)
    s_out = np.sum(outside * outside, axis=1)
    s_all = np.sum(parent * parent)
    num = n * n_out * s_in + n * n_in * s_out - n_in * n_out * s_all
    den = n * n * n_in * n_out
    gains = np.zeros(inside.shape[0])
    np.divide(num, den, out=gains, where=den > 0)
    return gains


def information_gain(labels, inside_mask) -> float:
    """Gini gain of splitting ``labels`` into inside/outside partitions."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(inside_mask, dtype=bool)
    if labels.shape != mask.shape:
        raise ValueError("labels and inside_mask must have equal length")
    if labels.size == 0:
        raise ValueError("labels must be nonempty")
    k = int(labels.max()) + 1
    parent = np.bincount(labels, minlength=k)
    inside = np.bincount(labels[mask], minlength=k)
    return float(_gains_from_counts(inside[None, :], parent)[0])


def build_binary_problems(points, labels, beta: float, use_hyperclasses: bool) -> list[BinaryProblem]:
    """Candidate binary reformulations for one node.

    Emits one one-vs-rest problem per class. With hyperclasses enabled, the
    per-class Einstein midpoints are greedily merged — most similar pair
    first, by the LCA similarity of the cluster means — for K-2 steps, and
    each freshly merged cluster is emitted as an extra positive set, for
    K + K - 2 problems total. Duplicate positive sets and one-sided problems
    are dropped.
    """
    X = _coords_matrix(points)
    labels = np.asarray(labels, dtype=np.int64)
    classes = np.unique(labels)
    if classes.size < 2:
        raise ValueError("need at least two classes to build binary problems")

    problems: list[BinaryProblem] = []
    seen: set[frozenset] = set()

    def emit(positive: frozenset, source: tuple):
        if positive in seen:
            return
        seen.add(positive)
        pos_mask = np.isin(labels, sorted(positive))
        n_pos = int(pos_mask.sum())
        n_neg = labels.size - n_pos
        if n_pos == 0 or n_neg == 0:
            return
        signs = np.where(pos_mask, 1.0, -1.0)
        if beta == 0.0:
            weights = np.ones(labels.size)
        else:
            n_y = np.where(pos_mask, n_pos, n_neg)
            weights = (1.0 - beta) / (1.0 - np.power(beta, n_y))
        problems.append(
            BinaryProblem(positive_classes=positive, signs=signs, weights=weights, source=source)
        )

    for k in classes:
        emit(frozenset([int(k)]), ("one_vs_rest", int(k)))

    if use_hyperclasses and classes.size > 2:
        clusters = [
            (frozenset([int(k)]), ClassMean.from_points(int(k), X, labels == k))
            for k in classes
        ]
        for step in range(1, classes.size - 1):
            best_pair, best_sim = None, -1.0
            for i in range(len(clusters)):
                for j in range(i + 1, len(clusters)):
                    sim = lca_similarity(clusters[i][1].mean, clusters[j][1].mean)
                    if sim > best_sim:
                        best_pair, best_sim = (i, j), sim
            i, j = best_pair
            merged = (
                clusters[i][0] | clusters[j][0],
                merge_class_means(clusters[i][1], clusters[j][1]),
            )
            clusters = [c for t, c in enumerate(clusters) if t not in (i, j)]
            clusters.append(merged)
            emit(merged[0], ("hyperclass", step))

    return problems


def hinge_loss(sol: SplitterSolution, problem: BinaryProblem, points, C: float) -> float:
    """Margin objective: mu^2/2 + C * sum_i w_i * hinge(1 - y_i(mu*s_i - o)).

    s_i is the negated Busemann value of sample i toward the solution's
    ideal point.
    """
    X = _coords_matrix(points)
    s = -busemann(sol.ideal, X)
    hinge = np.maximum(1.0 - problem.signs * (sol.mu * s - sol.o), 0.0)
    return 0.5 * sol.mu * sol.mu + C * float(problem.weights @ hinge)


def hinge_loss_grad(sol: SplitterSolution, problem: BinaryProblem, points, C: float):
    """Subgradient of :func:`hinge_loss` w.r.t. (mu, o, w).

    The w component is the plain ambient gradient (no tangent projection),
    matching central finite differences away from hinge kinks.
    """
    X = _coords_matrix(points)
    w = sol.ideal
    diff = w - X
    wx2 = np.einsum("ij,ij->i", diff, diff)
    s = np.log1p(-np.sum(X * X, axis=1)) - np.log(wx2)
    margins = 1.0 - problem.signs * (sol.mu * s - sol.o)
    coef = problem.weights * problem.signs * (margins > 0)
    g_mu = sol.mu - C * float(coef @ s)
    g_o = C * float(coef.sum())
    g_w = 2.0 * C * sol.mu * ((coef / wx2) @ diff)
    return g_mu, g_o, g_w


def solution_to_horosphere(sol: SplitterSolution) -> Horosphere:
    """Horosphere induced by a solution: same ideal point, offset -o/mu."""
    return Horosphere(ideal=sol.ideal, offset=-sol.o / sol.mu)


def _descend(w_init, X, log1mx2, signs, weights, config: SplitterConfig):
    """One optimizer run from a given ideal-point initialization.

    Joint projected subgradient descent on (mu, o, w) with a backtracking
    step size; w is renormalized onto the unit sphere after every step and
    mu clamped at MU_MIN. Returns (converged, loss, mu, o, w), or None if
    non-finite values appear.
    """
    C = config.C

    def loss_at(mu, o, w):
        diff = w - X
        wx2 = np.einsum("ij,ij->i", diff, diff)
        s = log1mx2 - np.log(wx2)
        hinge = np.maximum(1.0 - signs * (mu * s - o), 0.0)
        return 0.5 * mu * mu + C * float(weights @ hinge), s

    w = w_init
    mu = 1.0
    _, s0 = loss_at(mu, 0.0, w)
    o = float(np.median(mu * s0))
    loss, _ = loss_at(mu, o, w)
    if not np.isfinite(loss):
        return None

    eta = 1.0
    stall = 0
    converged = False
    for _ in range(config.max_iters):
        diff = w - X
        wx2 = np.einsum("ij,ij->i", diff, diff)
        s = log1mx2 - np.log(wx2)
        margins = 1.0 - signs * (mu * s - o)
        coef = weights * signs * (margins > 0)
        g_mu = mu - C * float(coef @ s)
        g_o = C * float(coef.sum())
        g_w = 2.0 * C * mu * ((coef / wx2) @ diff)
        g_w -= (g_w @ w) * w
        if not (np.isfinite(g_mu) and np.isfinite(g_o) and np.all(np.isfinite(g_w))):
            return None
        if g_mu == 0.0 and g_o == 0.0 and not np.any(g_w):
            converged = True
            break

        improved = False
        trial = eta
        while trial >= _ETA_MIN:
            mu2 = max(mu - trial * g_mu, MU_MIN)
            o2 = o - trial * g_o
            wv = w - trial * g_w
            nv = np.linalg.norm(wv)
            if nv > 1e-12:
                w2 = wv / nv
                loss2, _ = loss_at(mu2, o2, w2)
                if np.isfinite(loss2) and loss2 < loss:
                    improved = True
                    break
            trial *= 0.5
        if not improved:
            # No descent available at any step size: stationary for the
            # subgradient, which is as converged as a hinge objective gets.
            converged = True
            break
        rel = (loss - loss2) / max(abs(loss), 1.0)
        mu, o, w, loss = mu2, o2, w2, loss2
        eta = min(trial * 2.0, _ETA_MAX)
        stall = stall + 1 if rel < config.tol else 0
        if stall >= _PATIENCE:
            converged = True
            break

    return converged, loss, mu, o, w


def fit_splitter(problem: BinaryProblem, points, config: SplitterConfig, rng) -> SplitterSolution:
    """Fit the margin objective for one binary problem.

    The first restart points the ideal at the difference of the two class
    midpoints; the remaining restarts use random unit directions. The best
    converged restart wins; if none converges, ConvergenceFailure is raised
    so the caller can fall back to random ideal points.
    """
    X = _coords_matrix(points)
    if not (np.any(problem.signs > 0) and np.any(problem.signs < 0)):
        raise ValueError("binary problem must contain both signs")
    log1mx2 = np.log1p(-np.sum(X * X, axis=1))

    inits = []
    delta = einstein_midpoint(X, problem.signs > 0) - einstein_midpoint(X, problem.signs < 0)
    if np.linalg.norm(delta) > 1e-12:
        inits.append(unit_vector(delta))
    else:
        inits.append(unit_vector(rng.standard_normal(X.shape[1])))
    for _ in range(config.restarts - 1):
        inits.append(unit_vector(rng.standard_normal(X.shape[1])))

    best = None
    for w_init in inits:
        result = _descend(w_init, X, log1mx2, problem.signs, problem.weights, config)
        if result is None:
            continue
        converged, loss, mu, o, w = result
        if converged and (best is None or loss < best[0]):
            best = (loss, mu, o, w)
    if best is None:
        raise ConvergenceFailure(
            f"no restart converged within {config.max_iters} iterations"
        )
    _, mu, o, w = best
    return SplitterSolution(mu=mu, ideal=w, o=o)


def _scan_ideals(ideals: np.ndarray, X: np.ndarray, labels: np.ndarray, rng) -> SplitCandidate:
    """Best sorted-threshold split over the given ideal points.

    For each ideal, samples are ordered by Busemann value and every midpoint
    between distinct consecutive values is scored; exact ties in gain are
    broken uniformly at random across all (ideal, threshold) candidates.
    """
    n_samples = labels.size
    k = int(labels.max()) + 1
    parent = np.bincount(labels, minlength=k)

    best_gain = 0.0
    ties: list[tuple[int, float]] = []
    for idx, w in enumerate(ideals):
        values = busemann(w, X)
        order = np.argsort(values, kind="stable")
        v_sorted = values[order]
        onehot = np.zeros((n_samples, k), dtype=np.int64)
        onehot[np.arange(n_samples), labels[order]] = 1
        cum = np.cumsum(onehot, axis=0)
        distinct = v_sorted[1:] > v_sorted[:-1]
        if not np.any(distinct):
            continue
        positions = np.nonzero(distinct)[0]  # split after sorted index i
        gains = _gains_from_counts(cum[positions], parent)
        top = float(gains.max())
        if top < best_gain:
            continue
        if top > best_gain:
            best_gain = top
            ties = []
        for pos in positions[gains == top]:
            lo, hi = v_sorted[pos], v_sorted[pos + 1]
            b = 0.5 * (lo + hi)
            if b <= lo:  # midpoint rounded onto the lower value
                b = hi
            ties.append((idx, float(b)))

    if not ties:
        # Nothing distinguishes the samples under any ideal: emit an empty
        # zero-gain candidate on the first ideal.
        w = ideals[0]
        b = float(np.min(busemann(w, X)))
        return SplitCandidate(Horosphere(w, b), 0.0, ("scan", 0))
    idx, b = ties[rng.integers(len(ties))] if len(ties) > 1 else ties[0]
    return SplitCandidate(Horosphere(ideals[idx], b), best_gain, ("scan", int(idx)))


def axis_aligned_split(points, labels, rng) -> SplitCandidate:
    """Exhaustive threshold search over the 2n axis-aligned ideal points."""
    X = _coords_matrix(points)
    labels = np.asarray(labels, dtype=np.int64)
    dim = X.shape[1]
    ideals = np.zeros((2 * dim, dim))
    for j in range(dim):
        ideals[2 * j, j] = 1.0
        ideals[2 * j + 1, j] = -1.0
    cand = _scan_ideals(ideals, X, labels, rng)
    return SplitCandidate(cand.horosphere, cand.info_gain, ("axis_aligned", cand.source[1]))


def random_ideal_split(points, labels, n_ideals: int, rng) -> SplitCandidate:
    """Threshold search over ideal points sampled uniformly on the sphere."""
    X = _coords_matrix(points)
    labels = np.asarray(labels, dtype=np.int64)
    raw = rng.standard_normal((n_ideals, X.shape[1]))
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    ideals = raw / norms
    cand = _scan_ideals(ideals, X, labels, rng)
    return SplitCandidate(cand.horosphere, cand.info_gain, ("random_ideal", cand.source[1]))


def best_split(points, labels, config: SplitterConfig, rng) -> Optional[SplitCandidate]:
    """Highest-information-gain horosphere for a node, or None for no split.

    In optimizer mode every candidate binary problem is fitted and scored;
    exact gain ties are broken uniformly at random through a stream drawn
    before any per-problem work so parallel execution cannot change the
    result. If every fit fails to converge the random-ideal fallback takes
    over. Gains at or below GAIN_MIN mean no usable split.
    """
    X = _coords_matrix(points)
    labels = np.asarray(labels, dtype=np.int64)

    if config.mode == "axis_aligned_enum":
        cand = axis_aligned_split(X, labels, rng)
        return cand if cand.info_gain > GAIN_MIN else None
    if config.mode == "random_ideal_fallback":
        cand = random_ideal_split(X, labels, config.n_fallback_ideals, rng)
        return cand if cand.info_gain > GAIN_MIN else None

    beta_eff = config.beta if config.use_class_balance else 0.0
    problems = build_binary_problems(X, labels, beta_eff, config.use_hyperclasses)
    tie_rng, fallback_rng, *problem_rngs = rng.spawn(2 + len(problems))

    candidates: list[SplitCandidate] = []
    for prob, prng in zip(problems, problem_rngs):
        try:
            sol = fit_splitter(prob, X, config, prng)
        except ConvergenceFailure:
            continue
        horo = solution_to_horosphere(sol)
        gain = information_gain(labels, horo.inside(X))
        candidates.append(SplitCandidate(horo, gain, prob.source))

    if not candidates:
        cand = random_ideal_split(X, labels, config.n_fallback_ideals, fallback_rng)
        return cand if cand.info_gain > GAIN_MIN else None

    best_gain = max(c.info_gain for c in candidates)
    ties = [c for c in candidates if c.info_gain == best_gain]
    chosen = ties[tie_rng.integers(len(ties))] if len(ties) > 1 else ties[0]
    return chosen if best_gain > GAIN_MIN else None

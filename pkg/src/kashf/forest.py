"""Interpretable decision trees and random forests for binary features.

Split quality is Shannon information gain (bits) everywhere, and the
per-feature importance of a forest is the normalized sum over all splits of
(node sample fraction x gain), so the model and the influence ranking use
one criterion.

Implementation notes: rows are compressed to unique feature patterns with
per-class weights; a bootstrap resample is a multinomial redraw of those
weights, which is distributed exactly like row resampling with
replacement. Trees grow breadth-first; per-node feature subsets come from
a counter-based splitmix64 stream keyed by (tree salt, node id, feature),
so the same seed grows the same tree no matter how training is scheduled.
A numba-compiled grower is used when available, with a vectorized numpy
fallback producing bit-identical trees (all counts are integers, so the
arithmetic agrees exactly).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .seeds import derive_seed

# Gains within this of the best are ties, broken toward the lowest feature
# index; gains at or below it are treated as zero (no useful split).
GAIN_EPS = 1e-12

try:  # pragma: no cover - environment probe
    if os.environ.get("KASHF_NO_NUMBA"):
        raise ImportError("numba disabled via KASHF_NO_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


class ForestError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    features_per_split: int = 5
    min_samples_split: int = 2
    bootstrap: bool = True
    n_classes: int = 3


@dataclass(frozen=True)
class FeatureMatrix:
    """Training data: boolean feature rows and small-integer class labels."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        if self.X.ndim != 2 or len(self.X) != len(self.y):
            raise ForestError("feature matrix and labels do not line up")
        if self.X.shape[1] != len(self.feature_names):
            raise ForestError("feature name count does not match matrix width")

    @property
    def n_rows(self) -> int:
        return len(self.y)

    def distinct_labels(self) -> set[int]:
        return set(int(v) for v in np.unique(self.y))


def entropy(class_counts: Sequence[int | float]) -> float:
    """Shannon entropy in bits of a class-count vector; 0*log0 == 0."""
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ForestError("entropy of an empty count vector is undefined")
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    """Row-wise entropy of (..., k) count arrays; empty rows give 0."""
    total = counts.sum(axis=-1, keepdims=True)
    safe = np.where(total > 0, total, 1.0)
    p = counts / safe
    plogp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -plogp.sum(axis=-1)


def information_gain(
    X: np.ndarray, y: np.ndarray, feature: int, n_classes: int = 3
) -> float:
    """Entropy reduction from the boolean split on one feature."""
    if len(y) == 0:
        raise ForestError("information gain of an empty row set is undefined")
    y = np.asarray(y)
    mask = np.asarray(X)[:, feature].astype(bool)
    parent = np.bincount(y, minlength=n_classes).astype(float)
    true_side = np.bincount(y[mask], minlength=n_classes).astype(float)
    false_side = parent - true_side
    n = len(y)
    h_parent = _entropy_rows(parent)
    weighted = (
        mask.sum() * _entropy_rows(true_side)
        + (n - mask.sum()) * _entropy_rows(false_side)
    ) / n
    return float(h_parent - weighted)


def _compress(X: np.ndarray, y: np.ndarray, n_classes: int):
    """Unique feature patterns with per-class row counts."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.uint8))
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if d <= 62:
        weights = np.uint64(1) << np.arange(d, dtype=np.uint64)
        keys = X.astype(np.uint64) @ weights
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        patterns = X[first]
    else:
        patterns, inverse = np.unique(X, axis=0, return_inverse=True)
    W = np.zeros((len(patterns), n_classes), dtype=np.float64)
    np.add.at(W, (inverse, y), 1.0)
    return patterns, W


_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)


def _splitmix64_np(x: np.ndarray) -> np.ndarray:
    z = (x + _SM_GAMMA).astype(np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _SM_M1
    z = (z ^ (z >> np.uint64(27))) * _SM_M2
    return z ^ (z >> np.uint64(31))


@dataclass
class DecisionTree:
    """Flat-array tree: feature[i] < 0 marks a leaf with distribution dist[i]."""

    feature: np.ndarray
    info_gain: np.ndarray
    left: np.ndarray
    right: np.ndarray
    dist: np.ndarray
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def depth(self) -> int:
        depths = {0: 0}
        best = 0
        for node in range(self.n_nodes):
            d = depths[node]
            best = max(best, d)
            if self.feature[node] >= 0:
                depths[int(self.left[node])] = d + 1
                depths[int(self.right[node])] = d + 1
        return best

    def leaf_for(self, X: np.ndarray) -> np.ndarray:
        """Leaf node id for every row, by synchronized depth iteration."""
        X = np.asarray(X, dtype=np.uint8)
        current = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        feat = self.feature
        while True:
            f = feat[current]
            splits = f >= 0
            if not splits.any():
                return current
            taken = X[rows, np.where(splits, f, 0)]
            nxt = np.where(taken, self.right[current], self.left[current])
            current = np.where(splits, nxt, current)

    def predict(self, X: np.ndarray) -> np.ndarray:
        leaves = self.leaf_for(X)
        return self._leaf_class[leaves]

    @property
    def _leaf_class(self) -> np.ndarray:
        cached = getattr(self, "_leaf_class_cache", None)
        if cached is None:
            cached = np.argmax(self.dist, axis=1)
            self._leaf_class_cache = cached
        return cached

    def to_dict(self) -> dict:
        def walk(node: int) -> dict:
            f = int(self.feature[node])
            if f < 0:
                return {"leaf": {"distribution": [float(v) for v in self.dist[node]]}}
            return {
                "split": {
                    "feature": f,
                    "info_gain": float(self.info_gain[node]),
                    "false_branch": walk(int(self.left[node])),
                    "true_branch": walk(int(self.right[node])),
                }
            }

        return walk(0)


def _grow_numpy(patterns, W, max_depth, min_samples, fps, salt, importance,
                feat, gain, left, right, dist):
    """Reference grower: level-synchronous vectorized numpy."""
    U, d = patterns.shape
    k = W.shape[1]
    active = np.flatnonzero(W.sum(axis=1) > 0)
    order = active.copy()
    n_root = float(W.sum())
    W32 = W.astype(np.float32 if n_root < 2**24 else np.float64)
    P = (patterns[:, :, None] * W32[:, None, :]).reshape(U, d * k)

    n_nodes = 1
    level = [(0, 0, order.size)]
    depth = 0
    while level:
        M = len(level)
        lengths = np.array([e - s for (_, s, e) in level])
        seg_rows = np.concatenate([order[s:e] for (_, s, e) in level])
        starts = np.concatenate(([0], np.cumsum(lengths)[:-1]))
        tot = np.add.reduceat(W32[seg_rows], starts, axis=0).astype(np.float64)
        true_counts = (
            np.add.reduceat(P[seg_rows], starts, axis=0)
            .astype(np.float64)
            .reshape(M, d, k)
        )
        false_counts = tot[:, None, :] - true_counts
        m = tot.sum(axis=1)
        n_true = true_counts.sum(axis=2)
        n_false = false_counts.sum(axis=2)
        h_parent = _entropy_rows(tot)
        gains = h_parent[:, None] - (
            n_true * _entropy_rows(true_counts) + n_false * _entropy_rows(false_counts)
        ) / m[:, None]

        node_ids = np.array([node for (node, _, _) in level], dtype=np.uint64)
        if fps < d:
            cells = node_ids[:, None] * np.uint64(d) + np.arange(d, dtype=np.uint64)
            h = _splitmix64_np(np.uint64(salt) ^ cells)
            keep = np.argsort(h, axis=1, kind="stable")[:, :fps]
            cand = np.zeros((M, d), dtype=bool)
            np.put_along_axis(cand, keep, True, axis=1)
        else:
            cand = np.ones((M, d), dtype=bool)

        masked = np.where(cand, gains, -np.inf)
        best_gain = masked.max(axis=1)
        pure = (tot > 0).sum(axis=1) <= 1
        splittable = (
            ~pure
            & (m >= min_samples)
            & (depth < max_depth)
            & (best_gain > GAIN_EPS)
        )
        # Lowest feature index within GAIN_EPS of the best gain wins ties.
        chosen = (masked >= best_gain[:, None] - GAIN_EPS).argmax(axis=1)

        split_idx = np.flatnonzero(splittable)
        cuts = np.zeros(M, dtype=np.int64)
        if split_idx.size:
            seg_lengths = lengths[split_idx]
            seg_starts_abs = np.array([level[i][1] for i in split_idx])
            seg_of = np.repeat(np.arange(split_idx.size), seg_lengths)
            offsets = np.concatenate(([0], np.cumsum(seg_lengths)[:-1]))
            pos = np.arange(seg_lengths.sum()) - offsets[seg_of] + seg_starts_abs[seg_of]
            keys = patterns[order[pos], chosen[split_idx][seg_of]].astype(np.int64)
            perm = np.argsort(seg_of * 2 + keys, kind="stable")
            order[pos] = order[pos][perm]
            cuts[split_idx] = np.add.reduceat(1 - keys, offsets)
            if importance is not None:
                np.add.at(
                    importance,
                    chosen[split_idx],
                    (m[split_idx] / n_root) * best_gain[split_idx],
                )
        leaf_dists = tot / m[:, None]

        next_level = []
        for i, (node, s, e) in enumerate(level):
            if not splittable[i]:
                feat[node] = -1
                dist[node] = leaf_dists[i]
                continue
            cut = s + int(cuts[i])
            feat[node] = int(chosen[i])
            gain[node] = float(best_gain[i])
            left[node] = n_nodes
            right[node] = n_nodes + 1
            next_level.append((n_nodes, s, cut))
            next_level.append((n_nodes + 1, cut, e))
            n_nodes += 2
        level = next_level
        depth += 1
    return n_nodes


if _HAVE_NUMBA:

    @njit(cache=True)
    def _grow_numba(patterns, W, max_depth, min_samples, fps, salt, importance,
                    use_importance, feat, gain, left, right, dist):
        U, d = patterns.shape
        k = W.shape[1]
        order = np.empty(U, np.int64)
        na = 0
        n_root = 0.0
        for u in range(U):
            tw = 0.0
            for c in range(k):
                tw += W[u, c]
            if tw > 0.0:
                order[na] = u
                na += 1
                n_root += tw

        max_nodes = 2 * na + 1
        q_start = np.empty(max_nodes, np.int64)
        q_end = np.empty(max_nodes, np.int64)
        q_depth = np.empty(max_nodes, np.int64)
        q_start[0] = 0
        q_end[0] = na
        q_depth[0] = 0
        n_nodes = 1
        head = 0

        tot = np.empty(k, np.float64)
        true_counts = np.empty((d, k), np.float64)
        gains = np.empty(d, np.float64)
        hvals = np.empty(d, np.uint64)
        cand = np.empty(d, np.bool_)
        buf = np.empty(na, np.int64)

        while head < n_nodes:
            node = head
            head += 1
            s = q_start[node]
            e = q_end[node]
            depth = q_depth[node]

            for c in range(k):
                tot[c] = 0.0
            for f in range(d):
                for c in range(k):
                    true_counts[f, c] = 0.0
            for pos in range(s, e):
                u = order[pos]
                for c in range(k):
                    wc = W[u, c]
                    if wc > 0.0:
                        tot[c] += wc
                        for f in range(d):
                            if patterns[u, f]:
                                true_counts[f, c] += wc

            m = 0.0
            nz = 0
            for c in range(k):
                m += tot[c]
                if tot[c] > 0.0:
                    nz += 1
            h_parent = 0.0
            for c in range(k):
                if tot[c] > 0.0:
                    p = tot[c] / m
                    h_parent += p * np.log2(p)
            h_parent = -h_parent

            make_leaf = True
            if nz > 1 and m >= min_samples and depth < max_depth:
                if fps >= d:
                    for f in range(d):
                        cand[f] = True
                else:
                    for f in range(d):
                        z = salt ^ np.uint64(node * d + f)
                        z = z + _SM_GAMMA
                        z = (z ^ (z >> np.uint64(30))) * _SM_M1
                        z = (z ^ (z >> np.uint64(27))) * _SM_M2
                        hvals[f] = z ^ (z >> np.uint64(31))
                        cand[f] = False
                    for _ in range(fps):
                        best_f = -1
                        best_h = np.uint64(0)
                        for f in range(d):
                            if not cand[f] and (best_f < 0 or hvals[f] < best_h):
                                best_h = hvals[f]
                                best_f = f
                        cand[best_f] = True

                best_gain = -1.0
                for f in range(d):
                    if not cand[f]:
                        gains[f] = -1.0
                        continue
                    nt = 0.0
                    for c in range(k):
                        nt += true_counts[f, c]
                    nf = m - nt
                    h_true = 0.0
                    if nt > 0.0:
                        for c in range(k):
                            tc = true_counts[f, c]
                            if tc > 0.0:
                                p = tc / nt
                                h_true += p * np.log2(p)
                    h_true = -h_true
                    h_false = 0.0
                    if nf > 0.0:
                        for c in range(k):
                            fc = tot[c] - true_counts[f, c]
                            if fc > 0.0:
                                p = fc / nf
                                h_false += p * np.log2(p)
                    h_false = -h_false
                    g = h_parent - (nt * h_true + nf * h_false) / m
                    gains[f] = g
                    if g > best_gain:
                        best_gain = g

                if best_gain > GAIN_EPS:
                    chosen = -1
                    for f in range(d):
                        if cand[f] and gains[f] >= best_gain - GAIN_EPS:
                            chosen = f
                            break
                    n_false_pat = 0
                    for pos in range(s, e):
                        u = order[pos]
                        if patterns[u, chosen] == 0:
                            buf[n_false_pat] = u
                            n_false_pat += 1
                    n_true_pat = 0
                    for pos in range(s, e):
                        u = order[pos]
                        if patterns[u, chosen] != 0:
                            buf[n_false_pat + n_true_pat] = u
                            n_true_pat += 1
                    for i in range(e - s):
                        order[s + i] = buf[i]
                    cut = s + n_false_pat
                    feat[node] = chosen
                    gain[node] = best_gain
                    left[node] = n_nodes
                    right[node] = n_nodes + 1
                    if use_importance:
                        importance[chosen] += (m / n_root) * best_gain
                    q_start[n_nodes] = s
                    q_end[n_nodes] = cut
                    q_depth[n_nodes] = depth + 1
                    q_start[n_nodes + 1] = cut
                    q_end[n_nodes + 1] = e
                    q_depth[n_nodes + 1] = depth + 1
                    n_nodes += 2
                    make_leaf = False

            if make_leaf:
                feat[node] = -1
                for c in range(k):
                    dist[node, c] = tot[c] / m
        return n_nodes


def _grow_tree(
    patterns: np.ndarray,
    W: np.ndarray,
    params: ForestParams,
    salt: int,
    importance: np.ndarray | None = None,
) -> DecisionTree:
    U, d = patterns.shape
    k = params.n_classes
    if not (W.sum() > 0):
        raise ForestError("cannot fit a tree on zero rows")
    max_nodes = 2 * U + 1
    feat = np.zeros(max_nodes, dtype=np.int64)
    gain = np.zeros(max_nodes, dtype=np.float64)
    left = np.zeros(max_nodes, dtype=np.int64)
    right = np.zeros(max_nodes, dtype=np.int64)
    dist = np.zeros((max_nodes, k), dtype=np.float64)
    fps = min(params.features_per_split, d)
    if _HAVE_NUMBA:
        imp = importance if importance is not None else np.zeros(d)
        n_nodes = _grow_numba(
            patterns, W, params.max_depth, float(params.min_samples_split), fps,
            np.uint64(salt), imp, importance is not None,
            feat, gain, left, right, dist,
        )
    else:
        n_nodes = _grow_numpy(
            patterns, W, params.max_depth, float(params.min_samples_split), fps,
            np.uint64(salt), importance, feat, gain, left, right, dist,
        )
    return DecisionTree(
        feature=feat[:n_nodes],
        info_gain=gain[:n_nodes],
        left=left[:n_nodes],
        right=right[:n_nodes],
        dist=dist[:n_nodes],
        n_classes=k,
    )


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    rng: np.random.Generator,
) -> DecisionTree:
    """Greedy recursive partitioning on information gain.

    At each node a random subset of features_per_split features is
    considered; the best-gain split wins with ties going to the lowest
    feature index. Growth stops on purity, zero gain, max depth, or too
    few samples.
    """
    y = np.asarray(y)
    if len(y) == 0:
        raise ForestError("cannot fit a tree on zero rows")
    patterns, W = _compress(X, y, params.n_classes)
    salt = int(rng.integers(0, 2**63))
    return _grow_tree(patterns, W, params, salt)


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    params: ForestParams
    importance: np.ndarray
    train_class_counts: np.ndarray

    def __post_init__(self):
        # Vote ties resolve toward the most frequent training class.
        order = sorted(
            range(self.params.n_classes),
            key=lambda c: (-self.train_class_counts[c], c),
        )
        self._priority = np.array(order, dtype=np.int64)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.uint8)
        votes = np.zeros((len(X), self.params.n_classes), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            votes[rows, tree.predict(X)] += 1
        top = votes.max(axis=1)
        out = np.zeros(len(X), dtype=np.int64)
        for c in self._priority[::-1]:
            out[votes[:, c] == top] = c
        return out

    def to_dict(self) -> dict:
        return {
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "features_per_split": self.params.features_per_split,
                "min_samples_split": self.params.min_samples_split,
                "bootstrap": self.params.bootstrap,
                "n_classes": self.params.n_classes,
            },
            "importance": [float(v) for v in self.importance],
            "train_class_counts": [int(v) for v in self.train_class_counts],
            "trees": [t.to_dict() for t in self.trees],
        }


def fit_forest(
    X: np.ndarray,
    y: np.ndarray,
    params: ForestParams,
    seed: int,
) -> RandomForest:
    """Bootstrap ensemble of trees with accumulated split importance.

    importance[f] is the sum over every node splitting on f of the node's
    sample fraction times its information gain, normalized to sum to 1
    across features (all zeros when no tree ever splits). Each tree
    consumes an independent stream derived from (seed, tree index), so the
    forest is identical regardless of training order.
    """
    y = np.asarray(y, dtype=np.int64)
    if len(y) < params.min_samples_split:
        raise ForestError("too few rows to fit a forest")
    patterns, W = _compress(X, y, params.n_classes)
    n = int(W.sum())
    base_p = (W / n).ravel()
    importance = np.zeros(X.shape[1], dtype=np.float64)

    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng(derive_seed(seed, "tree", t))
        if params.bootstrap:
            Wt = rng.multinomial(n, base_p).reshape(W.shape).astype(np.float64)
        else:
            Wt = W
        salt = int(rng.integers(0, 2**63))
        trees.append(_grow_tree(patterns, Wt, params, salt, importance=importance))

    total = importance.sum()
    if total > 0:
        importance = importance / total
    return RandomForest(
        trees=trees,
        params=params,
        importance=importance,
        train_class_counts=np.bincount(y, minlength=params.n_classes),
    )


def save_forest(forest: RandomForest, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(forest.to_dict(), sort_keys=True), encoding="utf-8"
    )


@dataclass(frozen=True)
class CVResult:
    accuracy: float
    per_class_recall: tuple[float | None, ...]
    confusion: np.ndarray  # confusion[true, predicted]


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def cross_validate_details(
    X: np.ndarray,
    y: np.ndarray,
    k: int,
    params: ForestParams,
    seed: int,
) -> CVResult:
    """Stratified k-fold cross-validation with pooled accuracy.

    Rows are put in a canonical order before the seeded shuffle, so the
    result does not depend on input row order. Folds are assigned
    round-robin within each class.
    """
    X = np.asarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if k < 2:
        raise ForestError("k-fold cross-validation needs k >= 2")
    if k > n:
        raise ForestError(f"k={k} exceeds the {n} available rows")

    canon = _canonical_order(X, y)
    rng = np.random.default_rng(derive_seed(seed, "cv-shuffle"))
    shuffled = canon[rng.permutation(n)]

    folds = np.zeros(n, dtype=np.int64)
    for c in range(params.n_classes):
        members = shuffled[y[shuffled] == c]
        folds[members] = np.arange(members.size) % k

    confusion = np.zeros((params.n_classes, params.n_classes), dtype=np.int64)
    for f in range(k):
        test = folds == f
        train = ~test
        if not test.any():
            continue
        forest = fit_forest(X[train], y[train], params, derive_seed(seed, "fold", f))
        pred = forest.predict(X[test])
        np.add.at(confusion, (y[test], pred), 1)

    correct = np.trace(confusion)
    accuracy = float(correct / n)
    recall = tuple(
        float(confusion[c, c] / confusion[c].sum()) if confusion[c].sum() else None
        for c in range(params.n_classes)
    )
    return CVResult(accuracy=accuracy, per_class_recall=recall, confusion=confusion)


def cross_validate(
    X: np.ndarray, y: np.ndarray, k: int, params: ForestParams, seed: int
) -> float:
    return cross_validate_details(X, y, k, params, seed).accuracy

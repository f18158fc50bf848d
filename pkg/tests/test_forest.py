import math

import numpy as np
import pytest

import kashf.forest as forest_mod
from kashf.forest import (
    GAIN_EPS,
    FeatureMatrix,
    ForestError,
    ForestParams,
    _compress,
    _grow_tree,
    cross_validate,
    cross_validate_details,
    entropy,
    fit_forest,
    fit_tree,
    information_gain,
)
from kashf.seeds import derive_seed

FULL = ForestParams(
    n_trees=1, max_depth=32, features_per_split=64, min_samples_split=2,
    bootstrap=False,
)


# --- independent exhaustive greedy oracle ------------------------------------

def oracle_entropy(counts):
    total = sum(counts)
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h += p * math.log2(p)
    return -h


def oracle_gain(rows, feature, k=3):
    parent = [0] * k
    true_side = [0] * k
    for feats, label in rows:
        parent[label] += 1
        if feats[feature]:
            true_side[label] += 1
    false_side = [p - t for p, t in zip(parent, true_side)]
    n = len(rows)
    nt, nf = sum(true_side), sum(false_side)
    h_true = oracle_entropy(true_side) if nt else 0.0
    h_false = oracle_entropy(false_side) if nf else 0.0
    return oracle_entropy(parent) - (nt * h_true + nf * h_false) / n


def oracle_tree(rows, params, depth=0, k=3):
    """Plain-python exhaustive greedy splitter (full feature consideration)."""
    counts = [0] * k
    for _, label in rows:
        counts[label] += 1
    n = len(rows)
    d = len(rows[0][0])
    distinct = sum(1 for c in counts if c > 0)
    if distinct <= 1 or n < params.min_samples_split or depth >= params.max_depth:
        return {"leaf": [c / n for c in counts]}
    gains = [oracle_gain(rows, f, k) for f in range(d)]
    best = max(gains)
    if best <= GAIN_EPS:
        return {"leaf": [c / n for c in counts]}
    chosen = next(f for f in range(d) if gains[f] >= best - GAIN_EPS)
    false_rows = [r for r in rows if not r[0][chosen]]
    true_rows = [r for r in rows if r[0][chosen]]
    return {
        "split": chosen,
        "false": oracle_tree(false_rows, params, depth + 1, k),
        "true": oracle_tree(true_rows, params, depth + 1, k),
    }


def tree_shape(tree, node=0):
    f = int(tree.feature[node])
    if f < 0:
        return {"leaf": [round(float(v), 9) for v in tree.dist[node]]}
    return {
        "split": f,
        "false": tree_shape(tree, int(tree.left[node])),
        "true": tree_shape(tree, int(tree.right[node])),
    }


def round_oracle(node):
    if "leaf" in node:
        return {"leaf": [round(v, 9) for v in node["leaf"]]}
    return {
        "split": node["split"],
        "false": round_oracle(node["false"]),
        "true": round_oracle(node["true"]),
    }


def random_case(rng, max_rows=16, max_feats=4):
    n = int(rng.integers(2, max_rows + 1))
    d = int(rng.integers(1, max_feats + 1))
    X = (rng.random((n, d)) < 0.5).astype(np.uint8)
    y = rng.integers(0, 3, n)
    return X, y


class TestEntropy:
    def test_pure_node(self):
        assert entropy((10, 0, 0)) == 0.0

    def test_two_equal_classes(self):
        assert entropy((5, 5, 0)) == 1.0

    def test_three_equal_classes(self):
        assert entropy((4, 4, 4)) == pytest.approx(math.log2(3), abs=1e-12)

    def test_empty_counts_rejected(self):
        with pytest.raises(ForestError):
            entropy((0, 0, 0))

    def test_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            counts = rng.integers(0, 50, 3)
            if counts.sum() == 0:
                continue
            h = entropy(counts)
            assert 0.0 <= h <= math.log2(3) + 1e-12


class TestInformationGain:
    def test_perfect_split_equals_parent_entropy(self):
        X = np.array([[1], [1], [0], [0]], dtype=np.uint8)
        y = np.array([0, 0, 1, 1])
        assert information_gain(X, y, 0) == pytest.approx(1.0, abs=1e-12)

    def test_constant_feature_zero_gain(self):
        X = np.ones((6, 1), dtype=np.uint8)
        y = np.array([0, 1, 2, 0, 1, 2])
        assert information_gain(X, y, 0) == pytest.approx(0.0, abs=1e-12)

    def test_hand_case(self):
        # rows {(f=1,L),(f=1,L),(f=0,H),(f=0,M)}: 1.5 - 0.5 = 1.0
        X = np.array([[1], [1], [0], [0]], dtype=np.uint8)
        y = np.array([0, 0, 2, 1])
        assert information_gain(X, y, 0) == pytest.approx(1.0, abs=1e-12)

    def test_matches_oracle_on_random_rows(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            X, y = random_case(rng)
            rows = [(tuple(X[i]), int(y[i])) for i in range(len(y))]
            f = int(rng.integers(X.shape[1]))
            assert information_gain(X, y, f) == pytest.approx(
                oracle_gain(rows, f), abs=1e-12
            )

    def test_bounded_by_parent_entropy(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            X, y = random_case(rng)
            parent = entropy(np.bincount(y, minlength=3))
            for f in range(X.shape[1]):
                g = information_gain(X, y, f)
                assert -1e-12 <= g <= parent + 1e-12


class TestFitTree:
    def test_single_informative_feature_becomes_root(self):
        rng = np.random.default_rng(3)
        X = (rng.random((60, 5)) < 0.5).astype(np.uint8)
        y = X[:, 3].astype(np.int64)
        tree = fit_tree(X, y, FULL, np.random.default_rng(0))
        assert int(tree.feature[0]) == 3

    def test_pure_rows_single_leaf(self):
        X = np.array([[0, 1], [1, 0], [1, 1]], dtype=np.uint8)
        y = np.array([2, 2, 2])
        tree = fit_tree(X, y, FULL, np.random.default_rng(0))
        assert tree.n_nodes == 1
        assert int(tree.feature[0]) == -1
        assert tree.dist[0].tolist() == [0.0, 0.0, 1.0]

    def test_empty_input_rejected(self):
        with pytest.raises(ForestError):
            fit_tree(np.zeros((0, 3), dtype=np.uint8), np.zeros(0, dtype=int),
                     FULL, np.random.default_rng(0))

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(120):
            X, y = random_case(rng)
            tree = fit_tree(X, y, FULL, np.random.default_rng(0))
            rows = [(tuple(X[i]), int(y[i])) for i in range(len(y))]
            assert tree_shape(tree) == round_oracle(oracle_tree(rows, FULL))

    def test_max_depth_respected(self):
        rng = np.random.default_rng(5)
        X = (rng.random((200, 6)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, 200)
        params = ForestParams(max_depth=3, features_per_split=6, bootstrap=False)
        tree = fit_tree(X, y, params, np.random.default_rng(0))
        assert tree.depth() <= 3


class TestNumbaParity:
    @pytest.mark.skipif(not forest_mod._HAVE_NUMBA, reason="numba unavailable")
    def test_growers_bit_identical(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            n = int(rng.integers(5, 400))
            d = int(rng.integers(2, 21))
            X = (rng.random((n, d)) < rng.uniform(0.2, 0.8)).astype(np.uint8)
            y = rng.integers(0, 3, n)
            patterns, W = _compress(X, y, 3)
            params = ForestParams(
                features_per_split=int(rng.integers(1, d + 1)), bootstrap=False
            )
            salt = int(rng.integers(0, 2**63))
            imp_a = np.zeros(d)
            imp_b = np.zeros(d)
            tree_a = _grow_tree(patterns, W, params, salt, imp_a)
            forest_mod._HAVE_NUMBA = False
            try:
                tree_b = _grow_tree(patterns, W, params, salt, imp_b)
            finally:
                forest_mod._HAVE_NUMBA = True
            assert np.array_equal(tree_a.feature, tree_b.feature)
            assert np.array_equal(tree_a.left, tree_b.left)
            assert np.array_equal(tree_a.right, tree_b.right)
            assert np.array_equal(tree_a.info_gain, tree_b.info_gain)
            assert np.array_equal(tree_a.dist, tree_b.dist)
            assert np.array_equal(imp_a, imp_b)


class TestFitForest:
    def test_degenerate_forest_equals_single_tree(self):
        rng = np.random.default_rng(7)
        X = (rng.random((80, 6)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, 80)
        params = ForestParams(
            n_trees=1, max_depth=12, features_per_split=6, bootstrap=False
        )
        forest = fit_forest(X, y, params, seed=21)
        tree = fit_tree(X, y, params, np.random.default_rng(derive_seed(21, "tree", 0)))
        assert tree_shape(forest.trees[0]) == tree_shape(tree)

    def test_planted_signal_dominates_importance(self):
        rng = np.random.default_rng(8)
        X = (rng.random((500, 10)) < 0.5).astype(np.uint8)
        y = np.where(X[:, 7] == 1, 2, 0).astype(np.int64)
        forest = fit_forest(X, y, ForestParams(), seed=5)
        assert forest.importance[7] > 0.9

    def test_importance_normalized_nonnegative(self):
        rng = np.random.default_rng(9)
        X = (rng.random((200, 8)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, 200)
        forest = fit_forest(X, y, ForestParams(n_trees=20), seed=1)
        assert np.all(forest.importance >= 0)
        assert forest.importance.sum() == pytest.approx(1.0, abs=1e-9)

    def test_deterministic_per_seed(self):
        rng = np.random.default_rng(10)
        X = (rng.random((150, 6)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, 150)
        a = fit_forest(X, y, ForestParams(n_trees=10), seed=3)
        b = fit_forest(X, y, ForestParams(n_trees=10), seed=3)
        assert np.array_equal(a.importance, b.importance)
        assert [tree_shape(t) for t in a.trees] == [tree_shape(t) for t in b.trees]

    def test_vote_tie_goes_to_frequent_training_class(self):
        # Two trees voting differently on an unseen-ish row: majority class wins.
        X = np.array([[0], [0], [0], [1], [1]], dtype=np.uint8)
        y = np.array([1, 1, 1, 0, 0])
        params = ForestParams(n_trees=2, features_per_split=1, bootstrap=True)
        forest = fit_forest(X, y, params, seed=2)
        pred = forest.predict(np.array([[0], [1]], dtype=np.uint8))
        assert pred.shape == (2,)
        # prediction is deterministic and consistent with per-tree votes
        votes = np.zeros((2, 3), dtype=int)
        for t in forest.trees:
            votes[np.arange(2), t.predict(np.array([[0], [1]], dtype=np.uint8))] += 1
        for i in range(2):
            top = votes[i].max()
            tied = [c for c in range(3) if votes[i, c] == top]
            expect = min(tied, key=lambda c: (-forest.train_class_counts[c], c))
            assert pred[i] == expect

    def test_forest_serialization(self, tmp_path):
        rng = np.random.default_rng(11)
        X = (rng.random((40, 4)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, 40)
        forest = fit_forest(X, y, ForestParams(n_trees=3), seed=4)
        d = forest.to_dict()
        assert len(d["trees"]) == 3
        assert d["params"]["n_trees"] == 3
        node = d["trees"][0]
        assert "split" in node or "leaf" in node


class TestCrossValidate:
    def test_learnable_concept_perfect_accuracy(self):
        rng = np.random.default_rng(12)
        X = (rng.random((200, 5)) < 0.5).astype(np.uint8)
        y = X[:, 2].astype(np.int64) * 2
        acc = cross_validate(X, y, 10, ForestParams(n_trees=15), seed=0)
        assert acc == 1.0

    def test_chance_level_for_independent_labels(self):
        rng = np.random.default_rng(13)
        X = (rng.random((3000, 10)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, 3000)
        acc = cross_validate(X, y, 10, ForestParams(n_trees=20), seed=0)
        assert abs(acc - 1 / 3) < 0.03

    def test_k_exceeding_rows_rejected(self):
        X = np.zeros((5, 2), dtype=np.uint8)
        y = np.array([0, 1, 2, 0, 1])
        with pytest.raises(ForestError):
            cross_validate(X, y, 10, ForestParams(), seed=0)

    def test_row_permutation_invariance(self):
        rng = np.random.default_rng(14)
        X = (rng.random((120, 6)) < 0.5).astype(np.uint8)
        y = rng.integers(0, 3, 120)
        perm = rng.permutation(120)
        a = cross_validate(X, y, 5, ForestParams(n_trees=10), seed=9)
        b = cross_validate(X[perm], y[perm], 5, ForestParams(n_trees=10), seed=9)
        assert a == b

    def test_details_report_per_class_recall(self):
        rng = np.random.default_rng(15)
        X = (rng.random((90, 4)) < 0.5).astype(np.uint8)
        y = X[:, 0].astype(np.int64)
        res = cross_validate_details(X, y, 5, ForestParams(n_trees=10), seed=1)
        assert res.per_class_recall[0] == 1.0
        assert res.per_class_recall[1] == 1.0
        assert res.per_class_recall[2] is None  # class absent from data
        assert res.confusion.sum() == 90


class TestFeatureMatrix:
    def test_shape_validation(self):
        with pytest.raises(ForestError):
            FeatureMatrix(np.zeros((3, 2)), np.zeros(4), ("a", "b"))
        with pytest.raises(ForestError):
            FeatureMatrix(np.zeros((3, 2)), np.zeros(3), ("a",))

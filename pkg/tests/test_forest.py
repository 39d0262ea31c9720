import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset, numeric_dataset
from lemda.errors import TrainingError
from lemda.forest import (ClassCounts, ForestConfig, ForestModel, TreeConfig, best_split, gini,
                          impurity_decrease, oob_error, predict_forest, single_tree_forest,
                          train_forest, train_tree)


def brute_force_split(X, y, rows, features, is_cat):
    """Every candidate split of ``rows``, scored directly from its definition.

    Returns (decrease, feature, threshold) of the best, using the tie order
    lower feature, then lower threshold; None when no candidate exists.
    """
    rows = np.asarray(rows)
    ys = y[rows]
    parent = ClassCounts(int((ys == 0).sum()), int((ys == 1).sum()))
    if parent.normal == 0 or parent.attack == 0:
        return None
    found = []
    for f in sorted(features):
        vals = X[rows, f]
        uniq = np.unique(vals)
        if is_cat[f]:
            cands = [(c, vals == c) for c in uniq]
        else:
            cands = [((a + b) / 2, vals <= (a + b) / 2) for a, b in zip(uniq[:-1], uniq[1:])]
        for thr, mask in cands:
            if mask.all() or not mask.any():
                continue
            left = ClassCounts(int((ys[mask] == 0).sum()), int((ys[mask] == 1).sum()))
            right = ClassCounts(parent.normal - left.normal, parent.attack - left.attack)
            found.append((impurity_decrease(parent, left, right), f, thr))
    if not found:
        return None
    best = max(d for d, _, _ in found)
    ties = [(f, t) for d, f, t in found if d >= best - 1e-12]
    f, t = min(ties)
    return best, f, t


def test_gini_examples():
    assert gini(ClassCounts(10, 0)) == 0
    assert gini(ClassCounts(5, 5)) == 0.5
    assert gini(ClassCounts(3, 1)) == pytest.approx(0.375)
    with pytest.raises(ValueError):
        gini(ClassCounts(0, 0))


def test_impurity_decrease_examples():
    assert impurity_decrease(ClassCounts(5, 5), ClassCounts(5, 0), ClassCounts(0, 5)) == 0.5
    assert impurity_decrease(ClassCounts(5, 5), ClassCounts(3, 3), ClassCounts(2, 2)) == 0
    assert impurity_decrease(ClassCounts(4, 4), ClassCounts(3, 1),
                             ClassCounts(1, 3)) == pytest.approx(0.125)
    with pytest.raises(ValueError):
        impurity_decrease(ClassCounts(4, 4), ClassCounts(3, 1), ClassCounts(1, 2))


def test_best_split_examples():
    d = numeric_dataset([[1], [2], [3], [4]], [0, 0, 1, 1])
    s = best_split(range(4), [0], d)
    assert (s.feature, s.threshold, s.decrease) == (0, 2.5, 0.5)
    assert s.p_left + s.p_right == pytest.approx(1.0, abs=1e-12)

    pure = numeric_dataset([[1], [2]], [1, 1])
    assert best_split([0, 1], [0], pure) is None

    twin = numeric_dataset([[1, 1], [2, 2], [3, 3], [4, 4]], [0, 0, 1, 1])
    assert best_split(range(4), [1, 0], twin).feature == 0


def test_best_split_categorical_one_vs_rest():
    d = make_dataset({"p": ["a", "b", "c", "b"]}, {"p": "categorical"}, [0, 1, 0, 1])
    s = best_split(range(4), [0], d)
    assert s.categorical and d.code_tables["p"][int(s.threshold)] == "b"
    assert s.decrease == 0.5


def test_separable_four_rows_give_a_stump():
    d = numeric_dataset([[0, 5], [1, 3], [2, 9], [3, 1]], [0, 0, 1, 1])
    tree = train_tree(d)
    assert tree.depth() == 1
    assert np.array_equal(tree.predict_matrix(d.feature_matrix()), d.labels)


def test_single_class_gives_single_leaf():
    tree = train_tree(numeric_dataset([[0], [1], [2]], [1, 1, 1]))
    assert tree.n_nodes == 1 and tree.value[0] == 1


def test_xor_needs_depth_two():
    d = numeric_dataset([[0, 0], [0, 1], [1, 0], [1, 1]], [0, 1, 1, 0])
    tree = train_tree(d)
    assert tree.depth() == 2
    assert np.array_equal(tree.predict_matrix(d.feature_matrix()), d.labels)


def test_max_depth_and_min_samples():
    rng = np.random.default_rng(0)
    d = numeric_dataset(rng.normal(size=(200, 3)), rng.integers(0, 2, 200))
    assert train_tree(d, cfg=TreeConfig(max_depth=3)).depth() <= 3
    tree = train_tree(d, cfg=TreeConfig(min_samples_split=50))
    internal = tree.left >= 0
    assert np.all(tree.n_samples[internal] >= 50)


def test_leaf_tie_votes_attack():
    d = numeric_dataset([[0], [0]], [0, 1])
    tree = train_tree(d)
    assert tree.n_nodes == 1 and tree.value[0] == 1


def test_forest_of_one_without_bootstrap_matches_tree(small_mixed):
    forest = train_forest(small_mixed, ForestConfig(n_trees=1, max_features=None, bootstrap=False))
    tree = train_tree(small_mixed)
    for name in ("feature", "threshold", "left", "right", "value"):
        assert np.array_equal(getattr(forest.trees[0], name), getattr(tree, name))


def test_forest_separable_oob_error():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(600, 4))
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    d = numeric_dataset(X, y)
    forest = train_forest(d, ForestConfig(n_trees=100), seed=3)
    assert oob_error(forest, d) < 0.05


def test_forest_is_deterministic_and_thread_independent(small_mixed):
    a = train_forest(small_mixed, ForestConfig(n_trees=12), seed=9)
    b = train_forest(small_mixed, ForestConfig(n_trees=12), seed=9, jobs=3)
    assert np.array_equal(predict_forest(a, small_mixed), predict_forest(b, small_mixed))
    assert a.dumps() == b.dumps()


def test_forest_round_trip(small_mixed):
    a = train_forest(small_mixed, ForestConfig(n_trees=5), seed=2)
    b = ForestModel.loads(a.dumps())
    assert b.dumps() == a.dumps()
    assert np.array_equal(predict_forest(a, small_mixed), predict_forest(b, small_mixed))


def test_forest_needs_two_classes():
    with pytest.raises(TrainingError):
        train_forest(numeric_dataset([[0], [1]], [0, 0]))


def test_two_tree_disagreement_votes_attack():
    d = numeric_dataset([[0], [1]], [0, 1])
    tree = train_tree(d)
    flipped = type(tree)(**{**tree.__dict__, "value": 1 - tree.value})
    forest = single_tree_forest(d, tree)
    forest = ForestModel(trees=(tree, flipped), feature_names=forest.feature_names,
                         categorical=forest.categorical, code_tables=forest.code_tables,
                         config=forest.config, seed=0)
    assert predict_forest(forest, d).tolist() == [1, 1]


def test_forest_fits_training_data_without_conflicts(small_mixed):
    forest = train_forest(small_mixed, ForestConfig(n_trees=100), seed=0)
    assert np.array_equal(predict_forest(forest, small_mixed), small_mixed.labels)


def test_unseen_category_and_schema_mismatch(small_mixed):
    forest = train_forest(small_mixed, ForestConfig(n_trees=3), seed=0)
    other = make_dataset({"proto": ["gre", "tcp"], "rate": [1.0, 1.0], "noise": [0.0, 0.0]},
                         {"proto": "categorical", "rate": "numeric", "noise": "numeric"}, [0, 1])
    assert forest.matrix(other)[0, 0] == -1
    predict_forest(forest, other)
    with pytest.raises(ValueError, match="schema mismatch"):
        predict_forest(forest, other.drop(["noise"]))


def test_oob_fraction_near_e_inverse():
    rng = np.random.default_rng(5)
    d = numeric_dataset(rng.normal(size=(2000, 2)), rng.integers(0, 2, 2000))
    forest = train_forest(d, ForestConfig(n_trees=10, max_depth=1), seed=7)
    fractions = [t.oob_rows.size / d.rows for t in forest.trees]
    assert abs(np.mean(fractions) - np.exp(-1)) < 0.05


# -- properties ---------------------------------------------------------------

@st.composite
def split_instances(draw, max_rows=20):
    n = draw(st.integers(1, max_rows))
    n_features = draw(st.integers(1, 4))
    is_cat = draw(st.lists(st.booleans(), min_size=n_features, max_size=n_features))
    cols = []
    for cat in is_cat:
        hi = 3 if cat else 6
        cols.append(draw(st.lists(st.integers(0, hi), min_size=n, max_size=n)))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n))
    features = draw(st.lists(st.integers(0, n_features - 1), min_size=1, unique=True))
    return cols, is_cat, labels, features


def _instance_dataset(cols, is_cat, labels):
    data = {f"f{j}": ([f"c{v}" for v in c] if cat else [float(v) / 2 for v in c])
            for j, (c, cat) in enumerate(zip(cols, is_cat))}
    kinds = {f"f{j}": ("categorical" if cat else "numeric") for j, cat in enumerate(is_cat)}
    return make_dataset(data, kinds, labels)


@settings(max_examples=1000, deadline=None)
@given(split_instances())
def test_best_split_matches_brute_force(instance):
    cols, is_cat, labels, features = instance
    d = _instance_dataset(cols, is_cat, labels)
    X, y = d.feature_matrix(), d.labels
    rows = np.arange(d.rows)
    expected = brute_force_split(X, y, rows, features, is_cat)
    got = best_split(rows, features, d)
    if expected is None:
        assert got is None
        return
    dec, f, thr = expected
    assert got is not None
    assert got.decrease >= 0
    assert got.decrease == pytest.approx(dec, abs=1e-12)
    assert (got.feature, got.threshold) == (f, thr)


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
def test_gini_is_a_function_of_counts(a, b, c, e):
    if a + b == 0 or c + e == 0:
        return
    g = gini(ClassCounts(a, b))
    assert 0 <= g <= 0.5
    assert g == pytest.approx(gini(ClassCounts(b, a)))
    parent = ClassCounts(a + c, b + e)
    assert impurity_decrease(parent, ClassCounts(a, b), ClassCounts(c, e)) >= -1e-15


@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(0, 2**31), order=st.permutations(range(5)))
def test_forest_vote_invariant_to_tree_order(seed, order):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(60, 3))
    d = numeric_dataset(X, (X[:, 0] + 0.5 * rng.normal(size=60) > 0).astype(int))
    forest = train_forest(d, ForestConfig(n_trees=5), seed=seed)
    shuffled = ForestModel(trees=tuple(forest.trees[i] for i in order),
                           feature_names=forest.feature_names, categorical=forest.categorical,
                           code_tables=forest.code_tables, config=forest.config, seed=seed)
    assert np.array_equal(predict_forest(forest, d), predict_forest(shuffled, d))

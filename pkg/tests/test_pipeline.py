import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from lemda.errors import ConfigurationError, SchemaError
from lemda.pipeline import (LemdaConfig, LemdaPipeline, SfConfig, WedfDictionary, apply_wedf,
                            build_wedf_dictionary, common_value_of, compute_sf_series,
                            fit_pipeline, transform_pipeline)


def counts_fixture(groups):
    """Rows for (value, n, z) triples: z attack rows then n - z normal rows each."""
    values, labels = [], []
    for value, n, z in groups:
        values += [value] * n
        labels += [1] * z + [0] * (n - z)
    return make_dataset({"proto": values}, {"proto": "categorical"}, labels)


def sf_literal(values, common, b, peak_at_one=False):
    """Row-by-row scan: state (b_state, d); reset on suspicious rows, emit b_state**d."""
    out = []
    b_state, d = 0.0, 1
    for v in values:
        if v != common:
            b_state, d = b, (0 if peak_at_one else 1)
        out.append(b_state ** d if b_state else 0.0)
        d += 1
    return out


def sequence_dataset(values, labels=None):
    labels = labels if labels is not None else [0] * len(values)
    return make_dataset({"flag": list(values)}, {"flag": "categorical"}, labels)


def test_wedf_worked_example():
    d = counts_fixture([("TCP", 100, 10), ("UDP", 50, 0)])
    w = build_wedf_dictionary(d, "proto", 0.5)
    assert w.entries()["TCP"] == 0.05
    assert w.entries()["UDP"] == 0


def test_wedf_equal_weights_two_values():
    d = counts_fixture([("A", 10, 10), ("B", 50, 25)])
    w = build_wedf_dictionary(d, "proto", 0.5)
    assert w.values == ("B", "A")
    assert w.entries() == {"B": 0.25, "A": 0.25}


def test_wedf_rank_ties():
    # equal counts: higher attack fraction first, then first appearance
    d = counts_fixture([("C", 10, 2), ("A", 10, 5), ("B", 10, 5), ("Z", 30, 0)])
    w = build_wedf_dictionary(d, "proto", 0.5)
    assert w.values == ("A", "B", "C", "Z")
    assert w.scores == (0.25, 0.125, 0.025, 0.0)


def test_wedf_bad_b():
    d = counts_fixture([("A", 2, 1)])
    for b in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            build_wedf_dictionary(d, "proto", b)


def test_apply_wedf_lookup_and_unseen_values():
    w = WedfDictionary("proto", 0.5, "categorical", ("A", "B"), (20, 5), (1, 0), (0.05, 0.0))
    d = make_dataset({"proto": ["A", "B", "A", "C"], "x": [1.0, 2.0, 3.0, 4.0]},
                     {"proto": "categorical", "x": "numeric"}, [0, 1, 0, 1])
    out = apply_wedf(d, w)
    assert out.names == ["wedf_proto", "x", "label"]
    assert out["wedf_proto"].tolist() == [0.05, 0, 0.05, 0]
    assert out.labels.tolist() == d.labels.tolist()
    unseen = make_dataset({"proto": ["Q", "R"], "x": [0.0, 0.0]},
                          {"proto": "categorical", "x": "numeric"}, [0, 1])
    assert apply_wedf(unseen, w)["wedf_proto"].tolist() == [0, 0]
    with pytest.raises(ValueError):
        apply_wedf(unseen.drop(["proto"]), w)


def test_wedf_on_training_data_positive_for_attack_groups():
    d = counts_fixture([("A", 30, 3), ("B", 20, 0), ("C", 10, 9)])
    out = apply_wedf(d, build_wedf_dictionary(d, "proto"))
    scores = out["wedf_proto"]
    values = d.decode("proto")
    assert np.all(scores[values == "B"] == 0)
    assert np.all(scores[values != "B"] > 0)


def test_numeric_column_exact_and_binned():
    small = make_dataset({"v": [1.0, 1.0, 2.0, 3.0]}, {"v": "numeric"}, [1, 0, 1, 0])
    w = build_wedf_dictionary(small, "v")
    assert w.key_kind == "numeric" and w.entries()[1.0] == 0.25
    rng = np.random.default_rng(0)
    v = rng.normal(size=3000)
    big = make_dataset({"v": v}, {"v": "numeric"}, (v > 1).astype(int))
    w = build_wedf_dictionary(big, "v")
    assert w.key_kind == "binned"
    assert len(w.values) <= 256 and sum(w.counts) == 3000
    assert max(w.counts) - min(w.counts) <= 2
    assert apply_wedf(big, w)["wedf_v"][v > 2].min() > 0


def test_sf_examples():
    cfg = SfConfig("flag", "c", 0.5)
    assert compute_sf_series(sequence_dataset("cccc"), cfg).tolist() == [0, 0, 0, 0]
    assert compute_sf_series(sequence_dataset("cscc"), cfg).tolist() == [0, 0.5, 0.25, 0.125]
    assert compute_sf_series(sequence_dataset("cssc"), cfg).tolist() == [0, 0.5, 0.5, 0.25]


def test_sf_peak_variant():
    cfg = SfConfig("flag", "c", 0.5, peak_at_one=True)
    assert compute_sf_series(sequence_dataset("cscc"), cfg).tolist() == [0, 1, 0.5, 0.25]


def test_sf_requires_categorical():
    d = make_dataset({"v": [1.0, 2.0]}, {"v": "numeric"}, [0, 1])
    with pytest.raises(ConfigurationError):
        compute_sf_series(d, SfConfig("v", "1.0"))
    with pytest.raises(ConfigurationError):
        common_value_of(d, "v")


def test_common_value_uses_normal_rows_only():
    d = sequence_dataset("aaabbbbb", [1, 1, 1, 0, 0, 1, 1, 1])
    assert common_value_of(d, "flag") == "b"
    tie = sequence_dataset("xyyx", [0, 0, 0, 0])
    assert common_value_of(tie, "flag") == "x"


def fit_fixture(n=600, seed=0):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.3).astype(int)
    flag = np.where(y == 1, "atk", rng.choice(["n1", "n2", "n3"], n))
    cols = {"host": [f"h{i}" for i in range(n)], "copy": y.astype(float), "flag": flag.tolist()}
    kinds = {"host": "identifier", "copy": "numeric", "flag": "categorical"}
    for j in range(5):
        cols[f"noise{j}"] = rng.normal(size=n)
        kinds[f"noise{j}"] = "numeric"
    return make_dataset(cols, kinds, y)


def test_label_copy_is_chosen_first():
    d = fit_fixture().drop(["flag"])
    p = fit_pipeline(d, LemdaConfig(k_features=3, importance_trees=20))
    assert p.f_m == "copy"
    assert len(p.features) == 3
    assert p.importance.ranked_names()[0] == p.f_m


def test_k5_without_and_with_sf():
    d = fit_fixture()
    d = d.drop(["copy"])
    off = fit_pipeline(d, LemdaConfig(k_features=5, importance_trees=20))
    assert off.f_m == "flag" and off.sf is None
    out = transform_pipeline(off, d)
    assert len(out.feature_names) == 5
    assert "flag" not in out.names and "wedf_flag" in out.names

    on = fit_pipeline(d, LemdaConfig(k_features=5, sf_enabled=True, importance_trees=20))
    out = transform_pipeline(on, d)
    assert len(out.feature_names) == 6
    assert out.feature_names[-1] == "sf_flag"
    assert on.sf.common_value in ("n1", "n2", "n3")


def test_sf_with_numeric_f_m_is_a_configuration_error():
    d = fit_fixture().drop(["flag"])
    with pytest.raises(ConfigurationError):
        fit_pipeline(d, LemdaConfig(k_features=2, sf_enabled=True, importance_trees=10))


def test_transform_is_pure_and_round_trips():
    d = fit_fixture().drop(["copy"])
    p = fit_pipeline(d, LemdaConfig(k_features=4, sf_enabled=True, importance_trees=10))
    a = transform_pipeline(p, d)
    b = transform_pipeline(p, d)
    assert np.array_equal(a.feature_matrix(), b.feature_matrix())
    q = LemdaPipeline.loads(p.dumps())
    assert q.dumps() == p.dumps()
    assert np.array_equal(transform_pipeline(q, d).feature_matrix(), a.feature_matrix())


def test_transform_schema_mismatch():
    d = fit_fixture().drop(["copy"])
    p = fit_pipeline(d, LemdaConfig(k_features=3, importance_trees=10))
    with pytest.raises(SchemaError):
        transform_pipeline(p, d.drop([p.features[1]]))


def test_fit_is_deterministic():
    d = fit_fixture().drop(["copy"])
    cfg = LemdaConfig(k_features=3, importance_trees=10, seed=4)
    assert fit_pipeline(d, cfg).dumps() == fit_pipeline(d, cfg).dumps()


# -- properties ---------------------------------------------------------------

groups = st.lists(st.tuples(st.integers(1, 40), st.integers(0, 40)), min_size=1, max_size=12)


@settings(max_examples=1000, deadline=None)
@given(groups=groups, b=st.floats(0.01, 0.99))
def test_dictionary_invariants(groups, b):
    layout = [(f"v{i}", n, min(z, n)) for i, (n, z) in enumerate(groups)]
    d = counts_fixture(layout)
    w = build_wedf_dictionary(d, "proto", b)
    weights = w.weights
    for score, z, weight in zip(w.scores, w.attacks, weights):
        assert 0 <= score <= b * max(weights) + 1e-300
        if z == 0:
            assert score == 0
    for i in range(len(w.values)):
        for j in range(len(w.values)):
            if weights[i] == weights[j] and w.counts[i] > w.counts[j] and weights[i] > 0:
                assert w.scores[i] >= w.scores[j]
    out = apply_wedf(d, w)
    assert out.rows == d.rows
    assert out.labels.tolist() == d.labels.tolist()


@settings(max_examples=1000, deadline=None)
@given(seq=st.lists(st.sampled_from("cxyz"), min_size=1, max_size=60),
       b=st.floats(0.01, 0.99), peak=st.booleans())
def test_sf_matches_literal_scan(seq, b, peak):
    d = sequence_dataset(seq)
    got = compute_sf_series(d, SfConfig("flag", "c", b, peak))
    assert got.tolist() == sf_literal(seq, "c", b, peak)
    for i, v in enumerate(seq):
        if v != "c":
            assert got[i] == (1.0 if peak else b)
        elif i and got[i - 1] > 0:
            assert got[i] == pytest.approx(got[i - 1] * b, rel=1e-12, abs=1e-300)
    powers = {0.0} | {b ** k for k in range(0, len(seq) + 2)}
    assert set(got.tolist()) <= powers


@settings(max_examples=1000, deadline=None)
@given(groups=st.lists(st.tuples(st.integers(1, 30), st.floats(0, 1)), min_size=1, max_size=8))
def test_attack_rows_score_higher_on_average(groups):
    total_n = sum(n for n, _ in groups)
    layout = [(f"v{i}", n, int(round(frac * n))) for i, (n, frac) in enumerate(groups)]
    total_z = sum(z for _, _, z in layout)
    if total_z == 0 or total_z == total_n:
        return
    share = total_z / total_n
    if any(0 < z / n < share for _, n, z in layout):
        return
    d = counts_fixture(layout)
    scores = apply_wedf(d, build_wedf_dictionary(d, "proto"))["wedf_proto"]
    assert scores[d.labels == 1].mean() >= scores[d.labels == 0].mean() - 1e-12

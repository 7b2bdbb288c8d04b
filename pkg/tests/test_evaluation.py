import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import normalized_mutual_info_score

from tripletreg.errors import EmptyInput, KTooLarge, ShapeError
from tripletreg.evaluation import (
    Clustering,
    EvalReport,
    accuracy,
    evaluate_embeddings,
    kmeans,
    nmi,
    recall_at_k,
)


def recall_oracle(x, labels, k):
    """Full sort per query, self excluded, lowest index on ties."""
    hits = 0
    for i in range(len(x)):
        d = [((x[i] - x[j]) ** 2).sum() for j in range(len(x))]
        order = sorted((d[j], j) for j in range(len(x)) if j != i)
        hits += any(labels[j] == labels[i] for _, j in order[:k])
    return hits / len(x)


def test_recall_examples():
    assert recall_at_k(np.array([[0.0], [1.0]]), [3, 3], [1]) == {1: 1.0}
    x = np.random.default_rng(0).normal(size=(6, 2))
    assert recall_at_k(x, np.arange(6), [1, 3, 5]) == {1: 0.0, 3: 0.0, 5: 0.0}


def test_recall_k_too_large():
    with pytest.raises(KTooLarge):
        recall_at_k(np.zeros((4, 2)), [0, 0, 1, 1], [4])


def test_recall_matches_oracle_30_points(rng):
    x = rng.normal(size=(30, 3))
    y = rng.integers(0, 5, size=30)
    got = recall_at_k(x, y, [1, 2, 4, 8])
    for k in (1, 2, 4, 8):
        assert got[k] == recall_oracle(x, y, k)


def test_recall_ties_lowest_index():
    # query 0 has neighbours 1 (other class) and 2 (same class) at equal distance
    x = np.array([[0.0], [1.0], [-1.0]])
    assert recall_at_k(x, [0, 1, 0], [1])[1] == pytest.approx(1 / 3)


@given(st.integers(0, 10**6))
def test_recall_monotone(seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(20, 2))
    rec = recall_at_k(x, r.integers(0, 4, size=20), range(1, 20))
    vals = [rec[k] for k in range(1, 20)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_kmeans_distinct_points():
    pts = np.array([[0.0, 0.0], [5.0, 5.0], [-3.0, 4.0]])
    c = kmeans(pts, 3, 0)
    assert sorted(c.assignments.tolist()) == [0, 1, 2]
    assert c.sse_history[-1] == 0.0


def test_kmeans_deterministic_and_errors(rng):
    pts = rng.normal(size=(40, 2))
    assert np.array_equal(kmeans(pts, 4, 7).assignments, kmeans(pts, 4, 7).assignments)
    with pytest.raises(KTooLarge):
        kmeans(pts[:3], 4, 0)
    with pytest.raises(KTooLarge):
        kmeans(np.zeros((5, 2)), 2, 0)
    assert kmeans(np.zeros((5, 2)), 2, 0, allow_duplicates=True).k == 2


@given(st.integers(0, 10**6), st.integers(1, 6))
def test_kmeans_sse_non_increasing(seed, k):
    r = np.random.default_rng(seed)
    pts = r.normal(size=(30, 2))
    c = kmeans(pts, k, seed, max_iters=50)
    h = c.sse_history
    assert all(b <= a + 1e-9 for a, b in zip(h, h[1:]))
    assert c.n_iter <= 50
    assert c.assignments.min() >= 0 and c.assignments.max() < k


def test_nmi_examples():
    truth = np.array([0, 0, 1, 1, 2, 2])
    assert nmi(truth, truth) == 1.0
    assert nmi(truth, np.array([5, 5, 3, 3, 9, 9])) == pytest.approx(1.0, abs=1e-12)
    assert nmi(np.array([0, 0, 1, 1]), np.zeros(4, dtype=int)) == 0.0
    assert nmi(np.zeros(4, dtype=int), np.zeros(4, dtype=int)) == 1.0


def test_nmi_errors():
    with pytest.raises(ShapeError):
        nmi([0, 1], [0, 1, 1])
    with pytest.raises(EmptyInput):
        nmi([], [])


@given(st.integers(0, 10**6))
def test_nmi_symmetric_bounded_and_matches_sklearn(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 60))
    a = r.integers(0, int(r.integers(1, 6)), size=n)
    b = r.integers(0, int(r.integers(1, 6)), size=n)
    v = nmi(a, b)
    assert abs(v - nmi(b, a)) < 1e-12
    assert 0.0 <= v <= 1.0
    if np.unique(a).size > 1 and np.unique(b).size > 1:
        ref = normalized_mutual_info_score(a, b, average_method="geometric")
        assert v == pytest.approx(ref, abs=1e-10)


def test_nmi_independent_partitions_small(rng):
    vals = [nmi(rng.integers(0, 10, 1000), rng.integers(0, 10, 1000)) for _ in range(20)]
    assert np.mean(vals) < 0.05


def test_clustering_from_labels():
    c = Clustering.from_labels([7, 3, 7, 9])
    assert c.assignments.tolist() == [0, 1, 0, 2] and c.k == 3
    with pytest.raises(ValueError):
        Clustering([0, 3], 2)


def test_accuracy_examples():
    labels = np.array([0] * 10 + [1] * 2)
    preds = labels.copy()
    preds[0] = 1
    preds[10] = 0
    micro, macro, per = accuracy(preds, labels)
    assert micro == pytest.approx(10 / 12)
    assert macro == pytest.approx(0.7)
    assert per == {0: 0.9, 1: 0.5}
    assert accuracy(labels, labels)[:2] == (1.0, 1.0)


def test_accuracy_uniform_sizes_micro_equals_macro(rng):
    y = np.repeat(np.arange(5), 8)
    p = rng.integers(0, 5, size=40)
    micro, macro, per = accuracy(p, y)
    assert abs(micro - macro) < 1e-12
    assert min(per.values()) <= macro <= 1.0


def test_accuracy_empty():
    with pytest.raises(EmptyInput):
        accuracy([], [])


def test_report_json_keys(rng):
    x = rng.normal(size=(40, 3))
    y = np.repeat(np.arange(4), 10)
    rep = evaluate_embeddings(x, y, [1, 4, 8, 16], rng=0, predictions=y)
    d = json.loads(rep.to_json())
    assert set(d) == {"recall@1", "recall@4", "recall@8", "recall@16", "nmi", "micro_acc", "macro_acc", "per_class"}
    assert isinstance(rep, EvalReport)


def test_perfect_separation():
    y = np.repeat(np.arange(4), 5)
    x = np.eye(4)[y] * 10 + np.random.default_rng(0).normal(0, 0.01, size=(20, 4))
    rep = evaluate_embeddings(x, y, [1, 4], rng=0)
    assert rep.recall_at[1] == 1.0 and rep.nmi == pytest.approx(1.0)

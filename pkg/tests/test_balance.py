from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rachml.balance import (
    MinorityTooSmall,
    canonical_order,
    find_tomek_links,
    smote_oversample,
    smote_tomek,
)


def brute_sorted(X, y):
    rows = sorted(range(len(y)), key=lambda i: (tuple(X[i]), y[i]))
    return X[rows], y[rows]


def brute_knn(pts, i, k):
    # exhaustive distances from row i; ties go to the lower index
    d = np.sum((pts - pts[i]) ** 2, axis=1)
    d[i] = np.inf
    return np.lexsort((np.arange(len(pts)), d))[:k].tolist()


def brute_smote(X, y, k, seed):
    X, y = brute_sorted(np.asarray(X, float), np.asarray(y))
    c = np.bincount(y, minlength=2)
    if c[0] == c[1]:
        return X, y
    m = int(np.argmin(c))
    n_new = int(c.max() - c.min())
    pts = X[y == m]
    k = min(k, len(pts) - 1)
    rng = np.random.default_rng(seed)
    base = rng.integers(0, len(pts), size=n_new)
    pick = rng.integers(0, k, size=n_new)
    gap = rng.random(n_new)
    out = []
    for b, p, g in zip(base, pick, gap):
        nb = brute_knn(pts, b, k)[p]
        out.append(pts[b] + g * (pts[nb] - pts[b]))
    return np.vstack([X, out]), np.concatenate([y, np.full(n_new, m)])


def brute_tomek(X, y):
    n = len(X)
    nn = [brute_knn(X, i, 1)[0] for i in range(n)]
    return [(i, nn[i]) for i in range(n) if nn[nn[i]] == i and y[i] != y[nn[i]] and i < nn[i]]


def make(seed, n=60, minority=12, d=3):
    r = np.random.default_rng(seed)
    X = r.standard_normal((n, d))
    y = np.zeros(n, np.int64)
    y[r.choice(n, minority, replace=False)] = 1
    X[y == 1] += 0.8
    return X, y


def test_canonical_order_is_lexicographic():
    X = np.array([[2.0, 1.0], [1.0, 5.0], [1.0, 2.0], [1.0, 2.0]])
    y = np.array([0, 0, 1, 0])
    assert canonical_order(X, y).tolist() == [3, 2, 1, 0]


@given(st.integers(0, 10_000), st.integers(1, 7))
def test_smote_matches_brute_force(seed, k):
    X, y = make(seed)
    Xs, ys = smote_oversample(X, y, k, seed)
    Xr, yr = brute_smote(X, y, k, seed)
    np.testing.assert_array_equal(ys, yr)
    np.testing.assert_allclose(Xs, Xr, rtol=0, atol=1e-12)


def test_smote_balances_and_keeps_originals():
    X, y = make(1)
    Xs, ys = smote_oversample(X, y, 5, 3)
    assert np.bincount(ys).tolist() == [48, 48]
    Xo, yo = brute_sorted(X, y)
    np.testing.assert_array_equal(Xs[:60], Xo)
    np.testing.assert_array_equal(ys[:60], yo)


def test_synthetic_rows_lie_on_minority_segments():
    X, y = make(2, d=2)
    Xs, _ = smote_oversample(X, y, 3, 0)
    pts = X[y == 1]
    for s in Xs[60:]:
        ok = False
        for a in pts:
            for b in pts:
                ab = b - a
                if not np.any(ab):
                    continue
                t = np.dot(s - a, ab) / np.dot(ab, ab)
                if -1e-12 <= t <= 1 + 1e-12 and np.allclose(a + t * ab, s, atol=1e-10):
                    ok = True
        assert ok


def test_order_invariance():
    X, y = make(3)
    perm = np.random.default_rng(0).permutation(len(y))
    a = smote_tomek(X, y, 5, 11)
    b = smote_tomek(X[perm], y[perm], 5, 11)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_seed_changes_synthetics():
    X, y = make(4)
    assert not np.array_equal(smote_oversample(X, y, 5, 1)[0], smote_oversample(X, y, 5, 2)[0])


def test_balanced_input_is_only_sorted():
    X, y = make(5, n=20, minority=10)
    Xs, ys = smote_oversample(X, y, 5, 0)
    Xo, yo = brute_sorted(X, y)
    np.testing.assert_array_equal(Xs, Xo)
    np.testing.assert_array_equal(ys, yo)


def test_minority_too_small():
    X, y = make(6, n=10, minority=1)
    with pytest.raises(MinorityTooSmall):
        smote_oversample(X, y)
    with pytest.raises(ValueError):
        smote_oversample(*make(6), k=0)


def test_k_clipped_to_minority_size():
    X, y = make(7, n=20, minority=3)
    Xs, ys = smote_oversample(X, y, k=10, seed=0)
    Xr, yr = brute_smote(X, y, 10, 0)
    np.testing.assert_allclose(Xs, Xr, atol=1e-12)


@given(st.integers(0, 10_000))
def test_tomek_links_match_brute_force(seed):
    X, y = make(seed, n=40, minority=15, d=2)
    assert find_tomek_links(X, y) == brute_tomek(X, y)


def test_tomek_simple_case():
    X = np.array([[0.0], [1.0], [1.1], [5.0], [9.0], [9.2]])
    y = np.array([0, 0, 1, 1, 0, 0])
    assert find_tomek_links(X, y) == [(1, 2)]
    assert find_tomek_links(X[:1], y[:1]) == []


def test_smote_tomek_drops_majority_link_members():
    X, y = make(8, n=80, minority=20, d=2)
    Xs, ys = smote_oversample(X, y, 5, 4)
    links = brute_tomek(Xs, ys)
    assert links
    Xt, yt = smote_tomek(X, y, 5, 4)
    assert len(yt) == len(ys) - len(links)
    # the majority is class 0; only its members are removed
    assert np.sum(yt == 1) == np.sum(ys == 1)
    dropped = {a if ys[a] == 0 else b for a, b in links}
    keep = [i for i in range(len(ys)) if i not in dropped]
    np.testing.assert_array_equal(Xt, Xs[keep])


def test_feature_matrix_shape_kept(toy_classes):
    X, y = toy_classes
    y = y.copy()
    y[np.flatnonzero(y)[::2]] = 0      # unbalance it
    Xt, yt = smote_tomek(X, y, 5, 0)
    assert Xt.shape[1] == 24
    c = np.bincount(yt)
    assert c[1] >= c[0] * 0.8


def test_two_point_minority_interpolates_on_diagonal():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 0.0], [6.0, 0.0], [7.0, 0.0]])
    y = np.array([1, 1, 0, 0, 0])
    Xs, ys = smote_oversample(X, y, k=1, seed=0)
    assert len(ys) == 6 and ys[-1] == 1
    t = Xs[-1, 0]
    assert Xs[-1, 1] == t and 0 <= t <= 1


@given(st.integers(0, 10_000))
def test_synthetics_inside_minority_box(seed):
    X, y = make(seed, d=4)
    Xs, ys = smote_oversample(X, y, 5, seed)
    lo, hi = X[y == 1].min(axis=0), X[y == 1].max(axis=0)
    assert np.all(Xs[len(y):] >= lo) and np.all(Xs[len(y):] <= hi)
    assert np.bincount(ys).tolist() == [48, 48]


def test_tomek_examples():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]])
    assert find_tomek_links(X, np.array([1, 0, 0])) == [(0, 1)]
    sep = np.array([[0.0], [0.1], [0.2], [10.0], [10.1]])
    assert find_tomek_links(sep, np.array([0, 0, 0, 1, 1])) == []
    dup = np.array([[3.0, 3.0], [3.0, 3.0], [9.0, 9.0]])
    assert find_tomek_links(dup, np.array([0, 1, 0])) == [(0, 1)]


def test_balanced_separated_data_unchanged():
    r = np.random.default_rng(0)
    X = np.vstack([r.random((20, 3)), r.random((20, 3)) + 10])
    y = np.repeat([0, 1], 20)
    Xt, yt = smote_tomek(X, y, 5, 0)
    Xo, yo = brute_sorted(X, y)
    np.testing.assert_array_equal(Xt, Xo)
    np.testing.assert_array_equal(yt, yo)


def test_blobs_80_20_against_reference():
    r = np.random.default_rng(1)
    X = np.vstack([r.normal(0, 1, (800, 2)), r.normal(2.5, 1, (200, 2))])
    y = np.repeat([0, 1], [800, 200])
    Xt, yt = smote_tomek(X, y, 5, 3)
    Xs, ys = brute_smote(X, y, 5, 3)
    links = brute_tomek(Xs, ys)
    keep = [i for i in range(len(ys)) if i not in {a if ys[a] == 0 else b for a, b in links}]
    np.testing.assert_allclose(Xt, Xs[keep], atol=1e-12)
    c = np.bincount(yt)
    assert c[1] == 800
    assert abs(Fraction(int(c[0]), int(c[1])) - 1) <= Fraction(1, 100)


def test_oversample_keeps_and_cleaning_only_removes():
    X, y = make(9)
    Xs, ys = smote_oversample(X, y, 5, 0)
    Xt, yt = smote_tomek(X, y, 5, 0)
    assert len(ys) >= len(y) and len(yt) <= len(ys)
    rows = {tuple(r) for r in Xs}
    assert all(tuple(r) in rows for r in X)
    assert all(tuple(r) in rows for r in Xt)
    assert np.sum(yt == 1) == np.sum(ys == 1)


def test_swapping_class_roles_is_symmetric():
    X, y = make(10)
    a = smote_tomek(X, y, 5, 2)
    b = smote_tomek(X, 1 - y, 5, 2)
    key = lambda X_, y_: sorted(map(tuple, np.column_stack([X_, y_])))
    assert key(a[0], a[1]) == key(b[0], 1 - b[1])

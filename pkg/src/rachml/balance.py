"""SMOTE oversampling followed by Tomek-link cleaning."""

import numpy as np

DEFAULT_K = 5
_CHUNK = 256


class MinorityTooSmall(ValueError):
    pass


def canonical_order(X, y) -> np.ndarray:
    """Row order sorted by feature tuple, then label."""
    X = np.asarray(X, dtype=float)
    keys = [np.asarray(y)] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _sq_dists(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _knn(points, k, exclude_self=True):
    """Indices of the ``k`` Euclidean nearest rows (ties -> lower index)."""
    n = len(points)
    out = np.empty((n, k), dtype=np.int64)
    for s in range(0, n, _CHUNK):
        d = _sq_dists(points[s:s + _CHUNK], points)
        if exclude_self:
            d[np.arange(len(d)), np.arange(s, s + len(d))] = np.inf
        out[s:s + _CHUNK] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def smote_oversample(X, y, k=DEFAULT_K, seed=0):
    """Synthesize minority rows ``x + t*(x_nn - x)`` until both classes are equal.

    Input rows are canonically sorted first, so the result does not depend on
    the incoming row order. Synthetic rows are appended after the originals.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if k < 1:
        raise ValueError("k must be >= 1")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    counts = np.bincount(y, minlength=2)
    minority = int(np.argmin(counts)) if counts[0] != counts[1] else 0
    n_new = int(counts.max() - counts.min())
    if n_new == 0:
        return X, y
    pts = X[y == minority]
    if len(pts) < 2:
        raise MinorityTooSmall(f"minority class has {len(pts)} sample(s); need >= 2")
    k_eff = min(k, len(pts) - 1)
    nn = _knn(pts, k_eff)
    rng = np.random.default_rng(seed)
    base = rng.integers(0, len(pts), size=n_new)
    pick = rng.integers(0, k_eff, size=n_new)
    gap = rng.random(n_new)
    x0 = pts[base]
    synth = x0 + gap[:, None] * (pts[nn[base, pick]] - x0)
    return np.vstack([X, synth]), np.concatenate([y, np.full(n_new, minority)])


def find_tomek_links(X, y) -> list:
    """Opposite-class pairs that are mutual 1-nearest neighbours, as ``(a, b)`` with ``a < b``."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if len(X) < 2:
        return []
    nn = _knn(X, 1)[:, 0]
    a = np.arange(len(X))
    mask = (nn[nn] == a) & (y[nn] != y) & (a < nn)
    return [(int(i), int(nn[i])) for i in np.flatnonzero(mask)]


def smote_tomek(X, y, k=DEFAULT_K, seed=0):
    """Oversample, then drop the original-majority member of every Tomek link."""
    y_in = np.asarray(y, dtype=np.int64)
    counts = np.bincount(y_in, minlength=2)
    majority = int(np.argmax(counts))
    Xs, ys = smote_oversample(X, y_in, k, seed)
    links = find_tomek_links(Xs, ys)
    drop = [a if ys[a] == majority else b for a, b in links]
    keep = np.ones(len(ys), dtype=bool)
    keep[drop] = False
    return Xs[keep], ys[keep]

"""Baseline collision classifiers, evaluation metrics and data splitting.

All models consume raw 24-value PDP bins; each fitted model carries its own
log10 + standardisation statistics.
"""

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._backend import kernels

KINDS = ("logreg", "gnb", "knn", "dtree", "rforest")
LOG_FLOOR = 1e-12
FORMAT_VERSION = 1

DEFAULTS = {
    "logreg": {"lr": 0.1, "l2": 1e-4, "epochs": 200},
    "gnb": {"var_floor": 1e-9},
    "knn": {"k": 5},
    "dtree": {"max_depth": 12, "min_leaf": 20},
    "rforest": {"n_trees": 100, "max_depth": 12, "min_leaf": 20, "max_features": 5, "jobs": 1},
}


class EmptyTrainingSet(ValueError):
    pass


class UnfittedModel(RuntimeError):
    pass


class ClassTooSmall(ValueError):
    pass


# ------------------------------------------------------------------ preprocessing

@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, Z):
        Z = np.asarray(Z, dtype=float)
        std = Z.std(axis=0)
        return cls(Z.mean(axis=0), np.where(std > 0, std, 1.0))

    def transform(self, Z):
        return (np.asarray(Z, dtype=float) - self.mean) / self.std


def log_features(X):
    return np.log10(np.asarray(X, dtype=float) + LOG_FLOOR)


def fit_preprocessor(X) -> Standardizer:
    return Standardizer.fit(log_features(X))


def preprocess(X, pre: Standardizer):
    return pre.transform(log_features(X))


def _sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ------------------------------------------------------------------ models

class BaselineModel:
    kind = ""

    def __init__(self, pre=None, params=None):
        self.pre = pre
        self.params = dict(params or {})
        self.fitted = False

    def predict_proba(self, X):
        """Positive-class score for each row of raw features."""
        if not self.fitted:
            raise UnfittedModel(f"{self.kind} model is not fitted")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self._score(preprocess(X, self.pre))

    def predict(self, X):
        return (self.predict_proba(X) >= 0.5).astype(np.int64)

    def to_dict(self):
        return {
            "format_version": FORMAT_VERSION,
            "kind": self.kind,
            # worker count is an execution setting, not part of the model
            "params": {k: v for k, v in self.params.items() if k != "jobs"},
            "preprocess": {"mean": self.pre.mean.tolist(), "std": self.pre.std.tolist()},
            "state": self._state(),
        }


class ConstantModel(BaselineModel):
    kind = "constant"

    def fit(self, Z, y):
        self.value = float(y[0])
        self.fitted = True
        return self

    def _score(self, Z):
        return np.full(len(Z), self.value)

    def _state(self):
        return {"value": self.value}

    def _load(self, s):
        self.value = float(s["value"])


class LogisticRegression(BaselineModel):
    kind = "logreg"

    def fit(self, Z, y):
        p = self.params
        n, d = Z.shape
        w = np.zeros(d)
        b = 0.0
        yf = y.astype(float)
        for _ in range(int(p["epochs"])):
            r = _sigmoid(Z @ w + b) - yf
            w -= p["lr"] * (Z.T @ r / n + p["l2"] * w)
            b -= p["lr"] * r.mean()
        self.w, self.b = w, b
        self.fitted = True
        return self

    def _score(self, Z):
        return _sigmoid(Z @ self.w + self.b)

    def _state(self):
        return {"w": self.w.tolist(), "b": self.b}

    def _load(self, s):
        self.w, self.b = np.asarray(s["w"], dtype=float), float(s["b"])


class GaussianNB(BaselineModel):
    kind = "gnb"

    def fit(self, Z, y):
        self.mu = np.stack([Z[y == c].mean(axis=0) for c in (0, 1)])
        var = np.stack([Z[y == c].var(axis=0) for c in (0, 1)])
        self.var = var + self.params["var_floor"] * max(float(Z.var(axis=0).max()), 1.0)
        self.log_prior = np.log(np.bincount(y, minlength=2) / len(y))
        self.fitted = True
        return self

    def _score(self, Z):
        ll = np.stack([
            self.log_prior[c]
            - 0.5 * np.sum(np.log(2 * np.pi * self.var[c]) + (Z - self.mu[c]) ** 2 / self.var[c], axis=1)
            for c in (0, 1)
        ])
        return _sigmoid(ll[1] - ll[0])

    def _state(self):
        return {"mu": self.mu.tolist(), "var": self.var.tolist(), "log_prior": self.log_prior.tolist()}

    def _load(self, s):
        self.mu = np.asarray(s["mu"])
        self.var = np.asarray(s["var"])
        self.log_prior = np.asarray(s["log_prior"])


class KNearestNeighbors(BaselineModel):
    kind = "knn"

    def fit(self, Z, y):
        self.Z, self.y = np.asarray(Z, dtype=float), np.asarray(y, dtype=np.int64)
        self.fitted = True
        return self

    def _score(self, Z):
        k = min(int(self.params["k"]), len(self.Z))
        out = np.empty(len(Z))
        for s in range(0, len(Z), 256):
            q = Z[s:s + 256]
            diff = q[:, None, :] - self.Z[None, :, :]
            d = np.einsum("ijk,ijk->ij", diff, diff)
            nn = np.argsort(d, axis=1, kind="stable")[:, :k]
            out[s:s + 256] = self.y[nn].mean(axis=1)
        return out

    def _state(self):
        return {"Z": self.Z.tolist(), "y": self.y.tolist()}

    def _load(self, s):
        self.Z = np.asarray(s["Z"], dtype=float).reshape(-1, len(self.pre.mean))
        self.y = np.asarray(s["y"], dtype=np.int64)


@dataclass
class Tree:
    feature: np.ndarray     # -1 at leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray       # positive fraction at each node

    def apply(self, Z):
        node = np.zeros(len(Z), dtype=np.int64)
        active = self.feature[node] >= 0
        while active.any():
            i = np.flatnonzero(active)
            n = node[i]
            go_left = Z[i, self.feature[n]] <= self.threshold[n]
            node[i] = np.where(go_left, self.left[n], self.right[n])
            active[i] = self.feature[node[i]] >= 0
        return self.value[node]

    def depth(self):
        d = np.zeros(len(self.feature), dtype=int)
        for i in range(len(self.feature)):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, s):
        return cls(np.asarray(s["feature"], dtype=np.int64), np.asarray(s["threshold"], dtype=float),
                   np.asarray(s["left"], dtype=np.int64), np.asarray(s["right"], dtype=np.int64),
                   np.asarray(s["value"], dtype=float))


def grow_tree(Z, y, max_depth, min_leaf, rng=None, max_features=None) -> Tree:
    """CART with Gini impurity; candidate thresholds are midpoints of sorted unique values.

    With ``rng`` and ``max_features`` a fresh feature subset is drawn at every split.
    Nodes are expanded depth-first, left child first.
    """
    Z = np.ascontiguousarray(Z, dtype=float)
    y = np.ascontiguousarray(y, dtype=np.int_)
    all_feats = np.arange(Z.shape[1], dtype=np.int_)
    feature, threshold, left, right, value = [], [], [], [], []

    def build(idx, depth):
        node = len(feature)
        pos = int(y[idx].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(pos / len(idx))
        if depth >= max_depth or pos == 0 or pos == len(idx) or len(idx) < 2 * min_leaf:
            return node
        if rng is not None and max_features is not None:
            feats = np.sort(rng.choice(Z.shape[1], size=max_features, replace=False)).astype(np.int_)
        else:
            feats = all_feats
        f, thr, score = kernels.best_split(Z, y, idx, feats, int(min_leaf))
        parent = 2.0 * pos * (len(idx) - pos) / len(idx)
        if f < 0 or not score < parent:
            return node
        mask = Z[idx, f] <= thr
        feature[node], threshold[node] = int(f), float(thr)
        left[node] = build(idx[mask], depth + 1)
        right[node] = build(idx[~mask], depth + 1)
        return node

    build(np.arange(len(y), dtype=np.int_), 0)
    return Tree(np.asarray(feature, dtype=np.int64), np.asarray(threshold), np.asarray(left, dtype=np.int64),
                np.asarray(right, dtype=np.int64), np.asarray(value))


class DecisionTree(BaselineModel):
    kind = "dtree"

    def fit(self, Z, y):
        self.tree = grow_tree(Z, y, self.params["max_depth"], self.params["min_leaf"])
        self.fitted = True
        return self

    def _score(self, Z):
        return self.tree.apply(Z)

    def _state(self):
        return {"tree": self.tree.to_dict()}

    def _load(self, s):
        self.tree = Tree.from_dict(s["tree"])


class RandomForest(BaselineModel):
    kind = "rforest"

    def fit(self, Z, y, seed=0):
        p = self.params
        seeds = np.random.SeedSequence(seed).spawn(int(p["n_trees"]))

        def one(ss):
            rng = np.random.default_rng(ss)
            boot = rng.integers(0, len(y), size=len(y))
            return grow_tree(Z[boot], y[boot], p["max_depth"], p["min_leaf"], rng, int(p["max_features"]))

        jobs = int(p.get("jobs", 1))
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                self.trees = list(pool.map(one, seeds))
        else:
            self.trees = [one(ss) for ss in seeds]
        self.fitted = True
        return self

    def _score(self, Z):
        return np.mean([t.apply(Z) for t in self.trees], axis=0)

    def _state(self):
        return {"trees": [t.to_dict() for t in self.trees]}

    def _load(self, s):
        self.trees = [Tree.from_dict(t) for t in s["trees"]]


_CLASSES = {c.kind: c for c in (LogisticRegression, GaussianNB, KNearestNeighbors, DecisionTree,
                               RandomForest, ConstantModel)}


def train_baseline(kind, X, y, hyperparams=None, seed=0) -> BaselineModel:
    if kind not in KINDS:
        raise ValueError(f"unknown model kind {kind!r}; choose from {', '.join(KINDS)}")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise EmptyTrainingSet("training set is empty")
    params = {**DEFAULTS[kind], **(hyperparams or {})}
    pre = fit_preprocessor(X)
    Z = pre.transform(log_features(X))
    if len(np.unique(y)) < 2:
        warnings.warn(f"single-class training set; {kind} degrades to a constant classifier",
                      RuntimeWarning)
        return ConstantModel(pre, {"requested_kind": kind}).fit(Z, y)
    model = _CLASSES[kind](pre, params)
    return model.fit(Z, y, seed) if kind == "rforest" else model.fit(Z, y)


def predict(model: BaselineModel, features):
    """Label and positive-class score for one row; a 0.5 score counts as collision."""
    score = float(model.predict_proba(np.asarray(features, dtype=float)[None, :])[0])
    return int(score >= 0.5), score


def model_from_dict(d) -> BaselineModel:
    cls = _CLASSES[d["kind"]]
    m = cls(Standardizer(np.asarray(d["preprocess"]["mean"]), np.asarray(d["preprocess"]["std"])),
            d["params"])
    m._load(d["state"])
    m.fitted = True
    return m


def save_model(model: BaselineModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, sort_keys=True)


def load_model(path) -> BaselineModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class MetricsReport:
    """Confusion counts with collision (1) as the positive class.

    ``precision_undefined`` is set when nothing was predicted positive; precision
    is then reported as 1. Balanced accuracy is 0.5 when the truth holds only
    one class.
    """

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def precision_undefined(self):
        return self.tp + self.fp == 0

    @property
    def precision_exact(self):
        return Fraction(1) if self.precision_undefined else Fraction(self.tp, self.tp + self.fp)

    @property
    def recall_exact(self):
        return Fraction(self.tp, self.tp + self.fn) if self.tp + self.fn else Fraction(0)

    @property
    def specificity_exact(self):
        return Fraction(self.tn, self.tn + self.fp) if self.tn + self.fp else Fraction(0)

    @property
    def balanced_accuracy_exact(self):
        if self.tp + self.fn == 0 or self.tn + self.fp == 0:
            return Fraction(1, 2)
        return balanced_accuracy(self.recall_exact, self.specificity_exact)

    precision = property(lambda self: float(self.precision_exact))
    recall = property(lambda self: float(self.recall_exact))
    specificity = property(lambda self: float(self.specificity_exact))
    balanced_accuracy = property(lambda self: float(self.balanced_accuracy_exact))

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn


def balanced_accuracy(recall, specificity):
    return (recall + specificity) / 2


def evaluate(predictions, truth) -> MetricsReport:
    p = np.asarray(predictions, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {len(p)} predictions vs {len(t)} labels")
    if len(p) == 0:
        raise ValueError("cannot evaluate an empty prediction set")
    return MetricsReport(
        tp=int(np.sum((p == 1) & (t == 1))),
        fp=int(np.sum((p == 1) & (t == 0))),
        tn=int(np.sum((p == 0) & (t == 0))),
        fn=int(np.sum((p == 0) & (t == 1))),
    )


METRICS_HEADER = ["model", "scenario", "precision", "recall", "specificity", "balanced_accuracy"]


def format_exact(value, digits=4) -> str:
    """Fixed-point text for a non-negative rational, rounding half up exactly."""
    scale = 10 ** digits
    n = math.floor(Fraction(value) * scale + Fraction(1, 2))
    return f"{n // scale}.{n % scale:0{digits}d}"


def metrics_rows(results):
    """``results``: iterable of (model, scenario, MetricsReport)."""
    return [[m, s] + [format_exact(v) for v in (r.precision_exact, r.recall_exact,
                                                 r.specificity_exact, r.balanced_accuracy_exact)]
            for m, s, r in results]


def format_metrics_table(results) -> str:
    rows = [METRICS_HEADER] + metrics_rows(results)
    widths = [max(len(r[i]) for r in rows) for i in range(len(METRICS_HEADER))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


# ------------------------------------------------------------------ splitting

def split_train_test(y, train_fraction=0.9, seed=0):
    """Stratified split; returns ``(train_idx, test_idx)`` as sorted index arrays."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    y = np.asarray(y, dtype=np.int64)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise ClassTooSmall(f"class {c} has {len(idx)} sample(s); need >= 2 to split")
        idx = rng.permutation(idx)
        n_train = min(max(int(math.floor(train_fraction * len(idx) + 0.5)), 1), len(idx) - 1)
        train.append(idx[:n_train])
        test.append(idx[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))

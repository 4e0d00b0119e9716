"""KNN, Gaussian naive Bayes, random forest and linear SVM, plus a k-fold driver.

Every predictor breaks ties toward the smallest label.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import EnergyFeatureTable, FoldAssignment

KNN = "knn"
GAUSSIAN_NB = "gaussian_nb"
RANDOM_FOREST = "random_forest"
LINEAR_SVM = "linear_svm"
KINDS = (KNN, GAUSSIAN_NB, RANDOM_FOREST, LINEAR_SVM)

DEFAULT_HYPERPARAMS = {
    KNN: {"k": 5},
    GAUSSIAN_NB: {"var_floor": 1e-12},
    RANDOM_FOREST: {"n_trees": 100, "max_depth": 8, "min_samples_split": 2, "bootstrap": True},
    LINEAR_SVM: {"C": 1.0, "epochs": 500},
}


def _argmax_first(scores):
    # np.argmax returns the first maximum; classes are sorted ascending
    return np.argmax(scores, axis=1)


def _standardize_fit(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


class Classifier:
    kind = ""

    classes_: np.ndarray

    def fit(self, X, y):
        raise NotImplementedError

    def scores(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        return self.classes_[_argmax_first(self.scores(X))]

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features_:
            raise ValueError(f"expected {self.n_features_} features, got {X.shape[1]}")
        return X

    def _setup(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError("X must be (rows, features) matching y")
        if not np.all(np.isfinite(X)):
            raise ValueError("features must be finite")
        self.classes_ = np.unique(y)
        if self.classes_.size < 2:
            raise ValueError("training data must contain at least two classes")
        self.n_features_ = X.shape[1]
        return X, np.searchsorted(self.classes_, y)


class KNNClassifier(Classifier):
    """Majority vote of the ``k`` nearest z-scored training points (Euclidean)."""

    kind = KNN

    def __init__(self, k=5):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = int(k)

    def fit(self, X, y):
        X, yi = self._setup(X, y)
        self.mu_, self.sd_ = _standardize_fit(X)
        self.X_ = (X - self.mu_) / self.sd_
        self.y_ = yi
        return self

    def neighbors(self, X):
        Z = (self._check(X) - self.mu_) / self.sd_
        d2 = ((Z[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2)
        k = min(self.k, self.X_.shape[0])
        return np.argsort(d2, axis=1, kind="stable")[:, :k]

    def scores(self, X):
        nb = self.neighbors(X)
        votes = np.zeros((nb.shape[0], self.classes_.size))
        for j in range(nb.shape[1]):
            np.add.at(votes, (np.arange(nb.shape[0]), self.y_[nb[:, j]]), 1.0)
        return votes / nb.shape[1]


class GaussianNBClassifier(Classifier):
    """Per-class independent Gaussians with priors from class frequencies."""

    kind = GAUSSIAN_NB

    def __init__(self, var_floor=1e-12):
        self.var_floor = float(var_floor)

    def fit(self, X, y):
        X, yi = self._setup(X, y)
        nc = self.classes_.size
        self.theta_ = np.array([X[yi == c].mean(axis=0) for c in range(nc)])
        var = np.array([X[yi == c].var(axis=0) for c in range(nc)])
        floor = self.var_floor * X.var(axis=0)
        floor[floor <= 0] = self.var_floor
        self.var_ = np.maximum(var, floor)
        self.log_prior_ = np.log(np.bincount(yi, minlength=nc) / yi.size)
        return self

    def log_joint(self, X):
        X = self._check(X)
        ll = -0.5 * (np.log(2 * np.pi * self.var_)[None, :, :]
                     + (X[:, None, :] - self.theta_[None, :, :]) ** 2 / self.var_[None, :, :])
        return ll.sum(axis=2) + self.log_prior_[None, :]

    def scores(self, X):
        lj = self.log_joint(X)
        lj -= lj.max(axis=1, keepdims=True)
        p = np.exp(lj)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[_argmax_first(self.log_joint(X))]


@dataclass
class _Tree:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def freeze(self):
        self.feature = np.array(self.feature, dtype=np.int64)
        self.threshold = np.array(self.threshold, dtype=float)
        self.left = np.array(self.left, dtype=np.int64)
        self.right = np.array(self.right, dtype=np.int64)
        self.value = np.array(self.value, dtype=float)
        return self

    def apply(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            idx = np.flatnonzero(inner)
            go_left = X[idx, f[idx]] <= self.threshold[node[idx]]
            node[idx] = np.where(go_left, self.left[node[idx]], self.right[node[idx]])


def _best_split(X, yi, nc, features):
    """Gini-optimal ``(feature, threshold, gain)`` over candidate features, or None."""
    n = yi.size
    parent = 1.0 - np.sum((np.bincount(yi, minlength=nc) / n) ** 2)
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        onehot = np.zeros((n, nc))
        onehot[np.arange(n), yi[order]] = 1.0
        left = np.cumsum(onehot, axis=0)[:-1]
        right = left[-1] + onehot[-1] - left
        nl = np.arange(1, n)
        nr = n - nl
        gl = 1.0 - np.sum((left / nl[:, None]) ** 2, axis=1)
        gr = 1.0 - np.sum((right / nr[:, None]) ** 2, axis=1)
        imp = (nl * gl + nr * gr) / n
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        imp = np.where(valid, imp, np.inf)
        i = int(np.argmin(imp))
        gain = parent - imp[i]
        if best is None or gain > best[2] + 1e-15:
            best = (int(f), 0.5 * (xs[i] + xs[i + 1]), gain)
    if best is None or best[2] <= 0:
        return None
    return best


def _grow(X, yi, nc, max_depth, min_split, n_sub, rng):
    tree = _Tree()

    def node(rows, depth):
        me = len(tree.feature)
        tree.feature.append(-1)
        tree.threshold.append(0.0)
        tree.left.append(-1)
        tree.right.append(-1)
        counts = np.bincount(yi[rows], minlength=nc).astype(float)
        tree.value.append(counts / counts.sum())
        if depth >= max_depth or rows.size < min_split or np.count_nonzero(counts) == 1:
            return me
        feats = np.sort(rng.choice(X.shape[1], size=n_sub, replace=False))
        split = _best_split(X[rows], yi[rows], nc, feats)
        if split is None:
            return me
        f, thr, _ = split
        mask = X[rows, f] <= thr
        tree.feature[me] = f
        tree.threshold[me] = thr
        tree.left[me] = node(rows[mask], depth + 1)
        tree.right[me] = node(rows[~mask], depth + 1)
        return me

    node(np.arange(yi.size), 0)
    return tree.freeze()


class RandomForestClassifier(Classifier):
    """Bagged CART trees (Gini) with ``sqrt(d)`` features tried per split."""

    kind = RANDOM_FOREST

    def __init__(self, n_trees=100, max_depth=8, min_samples_split=2, bootstrap=True, seed=0):
        self.n_trees = int(n_trees)
        self.max_depth = int(max_depth)
        self.min_samples_split = int(min_samples_split)
        self.bootstrap = bool(bootstrap)
        self.seed = seed

    def fit(self, X, y):
        X, yi = self._setup(X, y)
        rng = np.random.default_rng(self.seed)
        nc = self.classes_.size
        n_sub = max(1, int(np.sqrt(X.shape[1])))
        self.trees_ = []
        for _ in range(self.n_trees):
            rows = rng.integers(0, yi.size, yi.size) if self.bootstrap else np.arange(yi.size)
            self.trees_.append(_grow(X[rows], yi[rows], nc, self.max_depth,
                                     self.min_samples_split, n_sub, rng))
        return self

    def scores(self, X):
        X = self._check(X)
        p = np.zeros((X.shape[0], self.classes_.size))
        for tree in self.trees_:
            p += tree.value[tree.apply(X)]
        return p / len(self.trees_)


class LinearSVMClassifier(Classifier):
    """One-vs-rest hinge loss on z-scored features, full-batch Pegasos subgradient steps.

    Minimizes ``lam/2 |w|^2 + mean(hinge)`` with ``lam = 1 / (C n)`` and step
    ``1 / (lam t)``; the bias is unregularized.
    """

    kind = LINEAR_SVM

    def __init__(self, C=1.0, epochs=500):
        if C <= 0:
            raise ValueError("C must be > 0")
        self.C = float(C)
        self.epochs = int(epochs)

    def fit(self, X, y):
        X, yi = self._setup(X, y)
        self.mu_, self.sd_ = _standardize_fit(X)
        Z = (X - self.mu_) / self.sd_
        n, d = Z.shape
        nc = self.classes_.size
        Y = np.where(yi[:, None] == np.arange(nc)[None, :], 1.0, -1.0)
        lam = 1.0 / (self.C * n)
        W = np.zeros((d, nc))
        b = np.zeros(nc)
        for t in range(1, self.epochs + 1):
            eta = 1.0 / (lam * (t + 1))
            margin = Y * (Z @ W + b)
            act = (margin < 1.0) * Y
            gW = lam * W - Z.T @ act / n
            gb = -act.sum(axis=0) / n
            W -= eta * gW
            b -= eta * gb
            # project onto the ball of radius 1/sqrt(lam) (Pegasos)
            norms = np.linalg.norm(W, axis=0)
            scale = np.minimum(1.0, (1.0 / np.sqrt(lam)) / np.maximum(norms, 1e-300))
            W *= scale
        self.W_ = W
        self.b_ = b
        return self

    def scores(self, X):
        Z = (self._check(X) - self.mu_) / self.sd_
        return Z @ self.W_ + self.b_


_REGISTRY = {
    KNN: KNNClassifier,
    GAUSSIAN_NB: GaussianNBClassifier,
    RANDOM_FOREST: RandomForestClassifier,
    LINEAR_SVM: LinearSVMClassifier,
}


def make(kind: str, hyperparams: dict | None = None, seed: int = 0) -> Classifier:
    if kind not in _REGISTRY:
        raise ValueError(f"unknown classifier {kind!r}; choose from {KINDS}")
    params = dict(DEFAULT_HYPERPARAMS[kind])
    params.update(hyperparams or {})
    if kind == RANDOM_FOREST:
        params["seed"] = seed
    return _REGISTRY[kind](**params)


def train(kind: str, table: EnergyFeatureTable, hyperparams: dict | None = None, seed: int = 0) -> Classifier:
    return make(kind, hyperparams, seed).fit(table.features, table.labels)


def predict(model: Classifier, features):
    """``(labels, per-class scores)``; score columns follow ``model.classes_``."""
    X = model._check(features)
    return model.predict(X), model.scores(X)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    labels: np.ndarray
    counts: np.ndarray  # rows = true label, columns = predicted label

    @classmethod
    def from_predictions(cls, labels, y_true, y_pred):
        labels = np.asarray(labels)
        counts = np.zeros((labels.size, labels.size), dtype=np.int64)
        it = np.searchsorted(labels, y_true)
        ip = np.searchsorted(labels, y_pred)
        np.add.at(counts, (it, ip), 1)
        return cls(labels, counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def __add__(self, other):
        if not np.array_equal(self.labels, other.labels):
            raise ValueError("confusion matrices cover different labels")
        return ConfusionMatrix(self.labels, self.counts + other.counts)


@dataclass(frozen=True, eq=False)
class CVResult:
    accuracy: float
    confusion: ConfusionMatrix
    fold_accuracies: tuple


def cross_validate(kind, table: EnergyFeatureTable, folds: FoldAssignment,
                   hyperparams: dict | None = None, seed: int = 0) -> CVResult:
    """Train on k-1 folds, test on the held-out one; confusion counts are summed.

    ``kind`` may also be a callable returning an unfitted classifier.
    """
    labels = np.unique(table.labels)
    total = ConfusionMatrix(labels, np.zeros((labels.size, labels.size), dtype=np.int64))
    per_fold = []
    for i, (tr, te) in enumerate(folds.masks(table)):
        model = kind() if callable(kind) else make(kind, hyperparams, seed + i)
        model.fit(table.features[tr], table.labels[tr])
        pred = model.predict(table.features[te])
        cm = ConfusionMatrix.from_predictions(labels, table.labels[te], pred)
        per_fold.append(cm.accuracy)
        total = total + cm
    return CVResult(total.accuracy, total, tuple(per_fold))


def write_confusion_csv(cm: ConfusionMatrix, path) -> None:
    lines = ["true\\pred," + ",".join(str(int(l)) for l in cm.labels)]
    for lab, row in zip(cm.labels, cm.counts):
        lines.append(f"{int(lab)}," + ",".join(str(int(c)) for c in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, encoding="utf-8") as fh:
        rows = [ln.strip().split(",") for ln in fh if ln.strip()]
    labels = np.array([int(x) for x in rows[0][1:]])
    counts = np.array([[int(x) for x in r[1:]] for r in rows[1:]], dtype=np.int64)
    return ConfusionMatrix(labels, counts)


DUMP_VERSION = 1


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, _Tree):
        return {k: _jsonable(getattr(v, k)) for k in ("feature", "threshold", "left", "right", "value")}
    if isinstance(v, list):
        return [_jsonable(x) for x in v]
    return v


def dump_model(model: Classifier) -> str:
    """Human-readable JSON snapshot of a fitted model, for inspection only."""
    import json

    state = {k: _jsonable(v) for k, v in sorted(vars(model).items())}
    return json.dumps({"format": "pehsense-model", "version": DUMP_VERSION,
                       "kind": model.kind, "state": state}, indent=1, sort_keys=True)

"""Trainable classifiers with per-label confidences.

Both estimators follow the scikit-learn fit/predict protocol (plus
``predict_one`` returning a :class:`Prediction` with the confidence map the
fusion stage consumes) but are implemented from scratch so that training is
bit-deterministic for a given seed and models serialize to a stable format.

Tie-breaking is safety-first: the label listed first in ``labels`` wins
argmax ties, and the pipelines always put red first.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import DatasetError
from .validation import as_float_matrix, as_float_vector, check_labels_match, check_n_features


@dataclass(frozen=True)
class Prediction:
    """Predicted label plus the per-label confidence map (sums to 1)."""

    label: str
    confidences: dict


def _prediction_from_proba(proba, classes):
    # np.argmax returns the first maximum, so earlier labels win ties.
    label = classes[int(np.argmax(proba))]
    return Prediction(label, {c: float(p) for c, p in zip(classes, proba)})


def _resolve_classes(y, labels):
    if labels is not None:
        classes = list(labels)
        if len(set(classes)) != len(classes):
            raise DatasetError(f"duplicate labels in {classes}")
        extra = set(y) - set(classes)
        if extra:
            raise DatasetError(f"y contains labels not in labels={classes}: {sorted(extra)}")
    else:
        classes = sorted(set(y))
    index = {c: i for i, c in enumerate(classes)}
    return classes, np.array([index[v] for v in y], dtype=np.intp)


def _gini(counts, total):
    return 1.0 - np.sum((counts / total) ** 2)


def _best_split(X, y_idx, indices, n_labels, features):
    """Lowest weighted-Gini boundary over the candidate features.

    Returns (feature, threshold) or None when every candidate feature is
    constant within the node. Ties resolve to the first feature in the given
    order and the lowest boundary, keeping growth deterministic.
    """
    n = len(indices)
    best = None
    best_score = np.inf
    for f in features:
        v = X[indices, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        ys = y_idx[indices][order]
        boundary = np.nonzero(vs[1:] != vs[:-1])[0]
        if len(boundary) == 0:
            continue
        onehot = np.zeros((n, n_labels))
        onehot[np.arange(n), ys] = 1.0
        prefix = np.cumsum(onehot, axis=0)
        total = prefix[-1]
        n_left = (boundary + 1).astype(np.float64)
        n_right = n - n_left
        c_left = prefix[boundary]
        c_right = total[None, :] - c_left
        gini_left = 1.0 - np.sum((c_left / n_left[:, None]) ** 2, axis=1)
        gini_right = 1.0 - np.sum((c_right / n_right[:, None]) ** 2, axis=1)
        score = (n_left * gini_left + n_right * gini_right) / n
        j = int(np.argmin(score))
        if score[j] < best_score:
            best_score = score[j]
            best = (int(f), float((vs[boundary[j]] + vs[boundary[j] + 1]) / 2.0))
    return best


class _Tree:
    """One decision tree stored as flat arrays (feature == -1 marks a leaf)."""

    __slots__ = ("feature", "threshold", "left", "right", "dist")

    def __init__(self, feature, threshold, left, right, dist):
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right
        self.dist = dist

    def predict_proba(self, X):
        node = np.zeros(len(X), dtype=np.intp)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while len(active):
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return self.dist[node]


def _grow_tree(X, y_idx, indices, n_labels, rng, max_depth, n_candidates, min_samples_split):
    feature, threshold, left, right, dist = [], [], [], [], []
    n_features = X.shape[1]
    # Explicit stack, left child first, so rng consumption is a pure function
    # of (data, seed) and depth never hits the interpreter recursion limit.
    stack = [(indices, 0, None, None)]
    while stack:
        node_indices, depth, parent, side = stack.pop()
        node_id = len(feature)
        if parent is not None:
            (left if side == "L" else right)[parent] = node_id
        counts = np.bincount(y_idx[node_indices], minlength=n_labels).astype(np.float64)
        feature.append(-1)
        threshold.append(0.0)
        left.append(node_id)
        right.append(node_id)
        dist.append(counts / counts.sum())
        pure = counts.max() == counts.sum()
        if (
            pure
            or len(node_indices) < min_samples_split
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        if n_candidates >= n_features:
            candidates = np.arange(n_features)
        else:
            candidates = rng.choice(n_features, size=n_candidates, replace=False)
        split = _best_split(X, y_idx, node_indices, n_labels, candidates)
        if split is None:
            continue
        f, thr = split
        go_left = X[node_indices, f] <= thr
        feature[node_id] = f
        threshold[node_id] = thr
        stack.append((node_indices[~go_left], depth + 1, node_id, "R"))
        stack.append((node_indices[go_left], depth + 1, node_id, "L"))
    return _Tree(
        np.asarray(feature, dtype=np.int32),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int32),
        np.asarray(right, dtype=np.int32),
        np.asarray(dist, dtype=np.float64),
    )


class ForestClassifier(BaseEstimator, ClassifierMixin):
    """Random forest of Gini-split threshold trees, deterministic per seed.

    Each tree trains on a bootstrap resample (disable with
    ``bootstrap=False``) and considers sqrt(d) randomly drawn features per
    split by default (``max_features=None`` considers all). Confidences are
    the mean of the leaf label distributions across trees.
    """

    def __init__(
        self,
        n_trees=100,
        max_depth=16,
        max_features="sqrt",
        bootstrap=True,
        min_samples_split=2,
        seed=0,
        labels=None,
    ):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.labels = labels

    def _n_candidates(self, n_features):
        if self.max_features is None:
            return n_features
        if self.max_features == "sqrt":
            return max(1, int(round(np.sqrt(n_features))))
        return max(1, int(self.max_features))

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = check_labels_match(X, y)
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        self.classes_, y_idx = _resolve_classes(y, self.labels)
        self.n_features_in_ = X.shape[1]
        rng = np.random.default_rng(self.seed)
        n = len(X)
        n_candidates = self._n_candidates(X.shape[1])
        self.trees_ = []
        for _ in range(self.n_trees):
            if self.bootstrap:
                indices = rng.integers(0, n, size=n)
            else:
                indices = np.arange(n)
            self.trees_.append(
                _grow_tree(
                    X,
                    y_idx,
                    indices,
                    len(self.classes_),
                    rng,
                    self.max_depth,
                    n_candidates,
                    self.min_samples_split,
                )
            )
        return self

    def _check_fitted(self):
        if not hasattr(self, "trees_"):
            raise RuntimeError("ForestClassifier must be fitted before predicting")

    def predict_proba(self, X):
        self._check_fitted()
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        proba = np.zeros((len(X), len(self.classes_)))
        for tree in self.trees_:
            proba += tree.predict_proba(X)
        return proba / len(self.trees_)

    def predict(self, X):
        proba = self.predict_proba(X)
        return np.array([self.classes_[i] for i in np.argmax(proba, axis=1)], dtype=object)

    def predict_one(self, x):
        x = as_float_vector(x)
        proba = self.predict_proba(x.reshape(1, -1))[0]
        return _prediction_from_proba(proba, self.classes_)


class KnnClassifier(BaseEstimator, ClassifierMixin):
    """k-nearest-neighbor majority vote under Euclidean distance.

    Confidences are vote fractions; a tied vote falls back to the label of
    the single nearest neighbor. Neighbor order breaks distance ties by
    training-row index, so predictions are deterministic.
    """

    def __init__(self, k=5, labels=None):
        self.k = k
        self.labels = labels

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = check_labels_match(X, y)
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.k > len(X):
            raise DatasetError(f"k={self.k} exceeds the {len(X)} training rows")
        self.classes_, self._y_idx = _resolve_classes(y, self.labels)
        self._X = X
        self.n_features_in_ = X.shape[1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "_X"):
            raise RuntimeError("KnnClassifier must be fitted before predicting")

    def _neighbors(self, X):
        sq = (
            np.sum(X**2, axis=1)[:, None]
            + np.sum(self._X**2, axis=1)[None, :]
            - 2.0 * (X @ self._X.T)
        )
        np.maximum(sq, 0.0, out=sq)
        return np.argsort(sq, axis=1, kind="stable")[:, : self.k]

    def predict_proba(self, X):
        self._check_fitted()
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        neighbors = self._neighbors(X)
        proba = np.zeros((len(X), len(self.classes_)))
        for row, cols in enumerate(neighbors):
            counts = np.bincount(self._y_idx[cols], minlength=len(self.classes_))
            proba[row] = counts / self.k
        return proba

    def predict(self, X):
        self._check_fitted()
        X = as_float_matrix(X)
        check_n_features(X, self.n_features_in_)
        neighbors = self._neighbors(X)
        out = []
        for cols in neighbors:
            counts = np.bincount(self._y_idx[cols], minlength=len(self.classes_))
            top = counts.max()
            if np.count_nonzero(counts == top) > 1:
                out.append(self.classes_[self._y_idx[cols[0]]])
            else:
                out.append(self.classes_[int(np.argmax(counts))])
        return np.array(out, dtype=object)

    def predict_one(self, x):
        x = as_float_vector(x).reshape(1, -1)
        proba = self.predict_proba(x)[0]
        label = self.predict(x)[0]
        return Prediction(label, {c: float(p) for c, p in zip(self.classes_, proba)})
